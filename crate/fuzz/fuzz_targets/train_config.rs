#![no_main]

use koopman_clf::trainer::TrainConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = TrainConfig::from_text(text, None) {
            if cfg.validate().is_ok() {
                assert_eq!(TrainConfig::from_text(&cfg.to_text(), None).expect("re-parse"), cfg);
            }
        }
    }
});
