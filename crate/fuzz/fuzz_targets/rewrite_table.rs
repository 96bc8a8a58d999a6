#![no_main]

use libfuzzer_sys::fuzz_target;
use session_intent::corpus::TokenRewriter;

fuzz_target!(|data: &[u8]| {
    let _ = TokenRewriter::parse(data);
});
