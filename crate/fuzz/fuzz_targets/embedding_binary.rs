#![no_main]

use libfuzzer_sys::fuzz_target;
use session_intent::embedding::{read_binary, write_binary};

fuzz_target!(|data: &[u8]| {
    if let Ok(file) = read_binary(data) {
        let mut out = Vec::new();
        write_binary(&mut out, &file.tokens, &file.embeddings).unwrap();
        let again = read_binary(&out[..]).unwrap();
        assert_eq!(again.tokens, file.tokens);
        assert_eq!(again.embeddings.dim(), file.embeddings.dim());
    }
});
