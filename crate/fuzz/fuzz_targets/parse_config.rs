#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(config) = bai_core::harness::parse_config(text) {
            // a resolved config always validates and serializes
            config.validate().unwrap();
            let _ = config.to_json();
        }
    }
});
