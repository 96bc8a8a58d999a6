#![no_main]

use libfuzzer_sys::fuzz_target;
use session_intent::corpus::GroundTruth;

fuzz_target!(|data: &[u8]| {
    let _ = GroundTruth::read_pages_csv(data);
});
