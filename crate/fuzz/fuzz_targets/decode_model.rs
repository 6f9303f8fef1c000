#![no_main]

use cyclevc::model::checkpoint::{decode_model, encode_model};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = decode_model(data) {
        let again = decode_model(&encode_model(&model)).expect("re-encoded checkpoint must decode");
        assert_eq!(again, model);
    }
});
