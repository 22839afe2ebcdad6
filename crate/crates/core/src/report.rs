//! Output records shared by the command-line tools.
//!
//! In JSON every number is written with 17 significant digits, enough to
//! round-trip any `f64`; non-finite values become `null`.

use std::io::Write;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::cluster::ClusterEstimate;
use crate::crossover::{CrossoverFit, SubgroupEstimate};
use crate::dist::z_critical;
use crate::error::{Error, Result};
use crate::interval::{ConfidenceInterval, Method};
use crate::quantile::QuantileEstimate;
use crate::sim::{CoverageReport, Design};

fn ser_f64<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        let raw = RawValue::from_string(format!("{v:.16e}")).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    } else {
        s.serialize_none()
    }
}

fn de_f64<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// One estimate with its interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub method: Method,
    #[serde(serialize_with = "ser_f64", deserialize_with = "de_f64")]
    pub point: f64,
    #[serde(serialize_with = "ser_f64", deserialize_with = "de_f64")]
    pub lower: f64,
    #[serde(serialize_with = "ser_f64", deserialize_with = "de_f64")]
    pub upper: f64,
    #[serde(serialize_with = "ser_f64", deserialize_with = "de_f64")]
    pub alpha: f64,
    /// `NaN` (JSON `null`) when the method has no standard error.
    #[serde(serialize_with = "ser_f64", deserialize_with = "de_f64")]
    pub se: f64,
    pub n: u64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Report {
    pub fn from_interval(ci: &ConfidenceInterval, n: u64) -> Self {
        Self {
            method: ci.method,
            point: ci.point,
            lower: ci.lower,
            upper: ci.upper,
            alpha: ci.alpha,
            se: ci.se,
            n,
            warnings: ci.warnings.clone(),
        }
    }

    /// Normal interval `mean ± z·se`.
    pub fn from_cluster(est: &ClusterEstimate, alpha: f64, n: u64) -> Self {
        let half = z_critical(alpha) * est.se;
        Self {
            method: est.method,
            point: est.mean,
            lower: est.mean - half,
            upper: est.mean + half,
            alpha,
            se: est.se,
            n,
            warnings: Vec::new(),
        }
    }

    pub fn from_quantile(est: &QuantileEstimate) -> Self {
        Self {
            method: est.method,
            point: est.value,
            lower: est.lower,
            upper: est.upper,
            alpha: est.alpha,
            se: f64::NAN,
            n: est.n as u64,
            warnings: est.warnings.clone(),
        }
    }

    pub fn from_crossover(fit: &CrossoverFit, n: u64) -> Self {
        Self::from_interval(&fit.ci, n)
    }

    pub fn from_subgroup(method: Method, est: &SubgroupEstimate, alpha: f64) -> Self {
        let se = est.variance.max(0.0).sqrt();
        let half = z_critical(alpha) * se;
        Self {
            method,
            point: est.estimate,
            lower: est.estimate - half,
            upper: est.estimate + half,
            alpha,
            se,
            n: est.users as u64,
            warnings: Vec::new(),
        }
    }
}

pub fn to_json(reports: &[Report]) -> Result<String> {
    serde_json::to_string_pretty(reports).map_err(|e| Error::InvalidParameter(e.to_string()))
}

pub fn from_json(text: &str) -> Result<Vec<Report>> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        row: e.line(),
        message: e.to_string(),
    })
}

pub fn coverage_json(reports: &[CoverageReport]) -> Result<String> {
    serde_json::to_string_pretty(reports).map_err(|e| Error::InvalidParameter(e.to_string()))
}

/// Six significant digits.
pub fn sig6(v: f64) -> String {
    if !v.is_finite() {
        return "-".into();
    }
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        format!("{:.*}", (5 - mag) as usize, v)
    } else {
        format!("{v:.5e}")
    }
}

fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, cell) in width.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<String>| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&width)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = line(header.iter().map(|h| h.to_string()).collect());
    out.push('\n');
    for r in rows {
        out.push_str(&line(r.clone()));
        out.push('\n');
    }
    out
}

/// Fixed-width text table followed by any warnings.
pub fn to_table(reports: &[Report]) -> String {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.method.name().to_string(),
                sig6(r.point),
                sig6(r.lower),
                sig6(r.upper),
                sig6(r.se),
                sig6(r.alpha),
                r.n.to_string(),
            ]
        })
        .collect();
    let mut out = aligned(&["method", "point", "lower", "upper", "se", "alpha", "n"], &rows);
    for r in reports {
        for w in &r.warnings {
            out.push_str(&format!("warning ({}): {w}\n", r.method));
        }
    }
    out
}

/// Short label for a simulated cell.
pub fn design_label(design: &Design) -> String {
    match *design {
        Design::Ratio { model, n } => format!("{} n={n}", serde_plain(&model)),
        Design::Cluster { clusters } => format!("K={clusters}"),
        Design::Quantile { model, users, p } => format!("{} users={users} p={p}", serde_plain(&model)),
        Design::Crossover { users_per_group, .. } => format!("users/group={users_per_group}"),
    }
}

fn serde_plain<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

const COVERAGE_COLUMNS: [&str; 11] = [
    "table",
    "cell",
    "method",
    "truth",
    "coverage",
    "coverage_se",
    "mean_estimate",
    "true_sd",
    "mean_se",
    "mean_variance",
    "failures",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

fn coverage_rows(reports: &[CoverageReport]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for rep in reports {
        for m in &rep.methods {
            rows.push(vec![
                rep.table.to_string(),
                design_label(&rep.scenario.design),
                m.method.name().to_string(),
                format!("{:.16e}", m.truth),
                opt(m.coverage),
                opt(m.coverage_se),
                opt(m.mean_estimate),
                opt(m.true_sd),
                opt(m.mean_se),
                opt(m.mean_variance),
                m.failures.to_string(),
            ]);
        }
    }
    rows
}

/// One CSV row per (cell, method).
pub fn write_coverage_csv<W: Write>(reports: &[CoverageReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::InvalidParameter(e.to_string());
    w.write_record(COVERAGE_COLUMNS).map_err(io)?;
    for row in coverage_rows(reports) {
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidParameter(e.to_string()))
}

/// Coverage summary as an aligned table with six significant digits.
pub fn coverage_table(reports: &[CoverageReport]) -> String {
    let short = |s: &str| s.parse::<f64>().map(sig6).unwrap_or_else(|_| s.to_string());
    let rows: Vec<Vec<String>> = coverage_rows(reports)
        .into_iter()
        .map(|r| r.iter().enumerate().map(|(i, c)| if i < 3 { c.clone() } else { short(c) }).collect())
        .collect();
    aligned(&COVERAGE_COLUMNS, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        Report {
            method: Method::DeltaBc,
            point: 0.1 + 0.2,
            lower: -1.0 / 3.0,
            upper: 1e300,
            alpha: 0.05,
            se: f64::NAN,
            n: 7,
            warnings: vec!["w".into()],
        }
    }

    #[test]
    fn json_round_trip() {
        let r = sample();
        let text = to_json(std::slice::from_ref(&r)).unwrap();
        assert!(text.contains("3.0000000000000004e-1"), "{text}");
        assert!(text.contains("\"se\": null"));
        let back = from_json(&text).unwrap();
        assert_eq!(back[0].point.to_bits(), r.point.to_bits());
        assert_eq!(back[0].lower.to_bits(), r.lower.to_bits());
        assert_eq!(back[0].upper, r.upper);
        assert!(back[0].se.is_nan());
        assert_eq!(back[0].method, Method::DeltaBc);
        assert_eq!(back[0].warnings, r.warnings);
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.1 + 0.2), "0.300000");
        assert_eq!(sig6(1234.56789), "1234.57");
        assert_eq!(sig6(-0.000123456789), "-0.000123457");
        assert_eq!(sig6(1.5e-9), "1.50000e-9");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(f64::NAN), "-");
    }

    #[test]
    fn table_lists_warnings() {
        let t = to_table(&[sample()]);
        assert!(t.starts_with("method"));
        assert!(t.contains("delta-bc"));
        assert!(t.contains("warning (delta-bc): w"));
    }
}
