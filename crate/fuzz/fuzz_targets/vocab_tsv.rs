#![no_main]

use libfuzzer_sys::fuzz_target;
use session_intent::corpus::Vocabulary;

fuzz_target!(|data: &[u8]| {
    if let Ok(vocab) = Vocabulary::read_tsv(data) {
        let mut out = Vec::new();
        vocab.write_tsv(&mut out).unwrap();
        assert_eq!(Vocabulary::read_tsv(&out[..]).unwrap(), vocab);
    }
});
