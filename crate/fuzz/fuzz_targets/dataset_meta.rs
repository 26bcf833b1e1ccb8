#![no_main]

use koopman_clf::formats::DatasetMeta;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(meta) = DatasetMeta::parse(text) {
            let again = DatasetMeta::parse(&meta.to_text()).expect("re-parse");
            assert_eq!(again, meta);
        }
    }
});
