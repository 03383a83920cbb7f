#![no_main]

use libfuzzer_sys::fuzz_target;
use nsgraph::project::{parse_seq, seq_text};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = parse_seq(text) {
        for n in 0..8 {
            let _ = s.value_at(n);
        }
        let _ = parse_seq(&seq_text(&s));
    }
});
