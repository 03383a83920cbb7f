#![no_main]

use libfuzzer_sys::fuzz_target;
use nsgraph::project::parse_index_set;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = parse_index_set(text) {
        assert_eq!(parse_index_set(&s.to_descriptor()).expect("descriptor parses"), s);
        let _ = s.complement();
    }
});
