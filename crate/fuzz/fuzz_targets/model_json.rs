#![no_main]

use libfuzzer_sys::fuzz_target;
use session_intent::mixture::{read_model_json, write_model_json};

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = read_model_json(data) {
        let mut out = Vec::new();
        write_model_json(&mut out, &model).unwrap();
        let again = read_model_json(&out[..]).unwrap();
        assert_eq!(again.k(), model.k());
        assert_eq!(again.dim(), model.dim());
    }
});
