#![no_main]

use libfuzzer_sys::fuzz_target;
use nsgraph::project::parse;

// Anything that parses must print back to text that parses to the same
// project.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(p) = parse(text) {
        let printed = p.to_string();
        let again = parse(&printed).expect("printed project parses");
        assert_eq!(again, p);
    }
});
