#![no_main]

use bai_core::samplers::Policy;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(policy) = text.parse::<Policy>() {
            policy.validate().unwrap();
            let _ = policy.to_string();
        }
    }
});
