#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(doc) = cmdp::io::parse_policy(text) {
        let _ = doc.to_policy(&cmdp::io::builtin::counterexample());
    }
});
