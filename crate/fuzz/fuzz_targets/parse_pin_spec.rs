#![no_main]

use libfuzzer_sys::fuzz_target;
use nsgraph::project::parse_pin_spec;
use nsgraph::FilterOracle;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok((set, verdict)) = parse_pin_spec(text) {
        let _ = FilterOracle::new().pinned(set, verdict);
    }
});
