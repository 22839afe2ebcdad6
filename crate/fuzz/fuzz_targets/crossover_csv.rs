#![no_main]

use deltametrics::crossover::{analyze, decompose_complete_incomplete, fit_crossover_lmm, AugmentedPanel};
use deltametrics::io::read_crossover_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = read_crossover_csv(data) else { return };
    let Ok(panel) = AugmentedPanel::augment(rows) else { return };
    let _ = analyze(&panel, 0.05);
    let _ = fit_crossover_lmm(&panel, 0.05);
    let _ = decompose_complete_incomplete(&panel);
});
