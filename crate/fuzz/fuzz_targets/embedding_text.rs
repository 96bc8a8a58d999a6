#![no_main]

use libfuzzer_sys::fuzz_target;
use session_intent::embedding::{read_text, write_text};

fuzz_target!(|data: &[u8]| {
    if let Ok(file) = read_text(data) {
        let mut out = Vec::new();
        write_text(&mut out, &file.tokens, &file.embeddings).unwrap();
        let again = read_text(&out[..]).unwrap();
        assert_eq!(again.tokens, file.tokens);
        assert_eq!(again.embeddings.dim(), file.embeddings.dim());
    }
});
