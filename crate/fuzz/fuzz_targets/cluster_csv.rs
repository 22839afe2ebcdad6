#![no_main]

use deltametrics::cluster::ClusterSummary;
use deltametrics::io::read_cluster_csv;
use deltametrics::quantile::{outer_ci_post, outer_ci_pre, ClusteredSample};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = read_cluster_csv(data) else { return };
    if let Ok(s) = ClusterSummary::from_observations(rows.iter().cloned()) {
        let _ = s.naive_variance();
        let _ = s.delta_variance();
    }
    if let Ok(sample) = ClusteredSample::from_observations(rows) {
        for p in [0.05, 0.5, 0.95] {
            if let Ok(est) = outer_ci_pre(&sample, p, 0.05) {
                assert!(est.lower <= est.value && est.value <= est.upper);
            }
            let _ = outer_ci_post(&sample, p, 0.05);
        }
    }
});
