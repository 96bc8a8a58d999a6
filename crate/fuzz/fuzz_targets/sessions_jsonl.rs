#![no_main]

use libfuzzer_sys::fuzz_target;
use session_intent::corpus::{parse_sessions, InputFormat, TokenRewriter};

fuzz_target!(|data: &[u8]| {
    if let Ok((corpus, report)) = parse_sessions(data, InputFormat::Jsonl, &TokenRewriter::identity()) {
        assert_eq!(corpus.len(), report.accepted);
        assert!(corpus.sessions.iter().all(|s| !s.pages.is_empty()));
    }
});
