#![no_main]

use cmdp::io::{parse_instance, serialize_instance};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(doc) = parse_instance(text) else { return };
    let canonical = serialize_instance(&doc);
    let again = parse_instance(&canonical).expect("canonical text parses");
    assert_eq!(again, doc);
    assert_eq!(serialize_instance(&again), canonical);
});
