#![no_main]

use deltametrics::report::{from_json, to_json};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(reports) = from_json(text) else { return };
    // whatever parses must survive a second round trip unchanged
    let once = to_json(&reports).expect("serializable");
    let again = to_json(&from_json(&once).expect("own output parses")).expect("serializable");
    assert_eq!(once, again);
});
