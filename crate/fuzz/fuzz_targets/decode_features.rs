#![no_main]

use cyclevc::features::format::{decode_features, encode_features};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(feat) = decode_features("fuzz", data) {
        assert_eq!(encode_features(&feat), data);
    }
});
