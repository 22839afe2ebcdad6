#![no_main]

use deltametrics::io::read_ratio_csv;
use deltametrics::moments::PairedMoments;
use deltametrics::ratio::{ratio_ci, RatioInput, RATIO_METHODS};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(pairs) = read_ratio_csv(data) else { return };
    let Ok(m) = PairedMoments::from_pairs(pairs) else { return };
    let Ok(input) = RatioInput::paired(&m, 0.05) else { return };
    for method in RATIO_METHODS {
        if let Ok(ci) = ratio_ci(&input, method) {
            assert!(!(ci.lower > ci.upper), "{ci:?}");
        }
    }
});
