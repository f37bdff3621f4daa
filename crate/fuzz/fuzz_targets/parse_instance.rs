#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(instance) = bai_core::harness::parse_instance(text) {
            assert!(instance.num_arms() >= 2);
            let _ = serde_json::to_string(&instance);
        }
    }
});
