//! Replays the checked-in fuzz seeds through the parsers.

use std::fs;
use std::path::PathBuf;

use deltametrics::crossover::{analyze, AugmentedPanel};
use deltametrics::io::{read_cluster_csv, read_crossover_csv, read_ratio_csv};
use deltametrics::report::{from_json, to_json};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty());
    out
}

#[test]
fn ratio_seeds() {
    for (name, data) in seeds("ratio_csv") {
        let parsed = read_ratio_csv(&data[..]);
        match name.as_str() {
            "short_row" => assert!(parsed.is_err()),
            "bom_crlf" => assert_eq!(parsed.unwrap(), vec![(1e3, -0.25), (7.0, 8.0)]),
            _ => assert!(parsed.is_ok(), "{name}: {parsed:?}"),
        }
    }
}

#[test]
fn cluster_seeds() {
    for (name, data) in seeds("cluster_csv") {
        let parsed = read_cluster_csv(&data[..]);
        assert_eq!(parsed.is_ok(), name != "quoted", "{name}: {parsed:?}");
    }
}

#[test]
fn crossover_seeds() {
    for (name, data) in seeds("crossover_csv") {
        let rows = read_crossover_csv(&data[..]).unwrap();
        let panel = AugmentedPanel::augment(rows);
        match name.as_str() {
            "duplicate" => assert!(panel.is_err()),
            "panel" => assert!(analyze(&panel.unwrap(), 0.05).is_ok()),
            _ => assert!(panel.is_ok()),
        }
    }
}

#[test]
fn report_seeds() {
    for (name, data) in seeds("report_json") {
        let reports = from_json(std::str::from_utf8(&data).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
        let once = to_json(&reports).unwrap();
        assert_eq!(to_json(&from_json(&once).unwrap()).unwrap(), once);
    }
}
