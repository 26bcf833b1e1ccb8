#![no_main]

use koopman_clf::falsifier::Certificate;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = Certificate::parse(text);
    }
});
