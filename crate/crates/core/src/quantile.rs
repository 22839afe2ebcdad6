//! Sample quantiles of clustered data with outer confidence intervals.
//!
//! The outer interval takes two order statistics whose ranks come from
//! inverting the normal approximation of `Ȳ`, the fraction of observations at
//! or below the quantile. Under clustering the variance of `Ȳ` is the
//! cluster Delta variance instead of `p(1-p)/n`, which can be applied either
//! when choosing the ranks (pre-adjustment) or by rescaling the i.i.d.
//! interval afterwards (post-adjustment).

use std::collections::HashMap;
use std::hash::Hash;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterSummary, ClusterTotal};
use crate::dist::z_critical;
use crate::error::{check_alpha, check_finite, Error, Result};
use crate::interval::Method;
use crate::moments::UniMoments;
use crate::rng;
use crate::select::select_in_place;

/// Observations tagged with a dense cluster index.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredSample {
    values: Vec<f64>,
    cluster: Vec<u32>,
    sizes: Vec<u64>,
}

impl ClusteredSample {
    /// Groups `(unit_id, value)` observations; clusters are numbered in order
    /// of first appearance.
    pub fn from_observations<K, I>(observations: I) -> Result<Self>
    where
        K: Hash + Eq,
        I: IntoIterator<Item = (K, f64)>,
    {
        let mut index: HashMap<K, u32> = HashMap::new();
        let mut out = Self {
            values: Vec::new(),
            cluster: Vec::new(),
            sizes: Vec::new(),
        };
        for (id, v) in observations {
            check_finite(v)?;
            let next = out.sizes.len() as u32;
            let c = *index.entry(id).or_insert(next);
            if c == next {
                out.sizes.push(0);
            }
            out.sizes[c as usize] += 1;
            out.values.push(v);
            out.cluster.push(c);
        }
        Ok(out)
    }

    /// One inner vector per cluster; empty clusters are skipped.
    pub fn from_groups(groups: &[Vec<f64>]) -> Result<Self> {
        Self::from_observations(
            groups
                .iter()
                .enumerate()
                .flat_map(|(i, g)| g.iter().map(move |&v| (i, v))),
        )
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Applies `f` to every value, keeping the cluster structure.
    pub fn map_values<F: Fn(f64) -> f64>(&self, f: F) -> Result<Self> {
        let mut out = self.clone();
        for v in &mut out.values {
            *v = check_finite(f(*v))?;
        }
        Ok(out)
    }

    /// Cluster summary of the indicators `1{x ≤ threshold}`.
    pub fn indicator_summary(&self, threshold: f64) -> Result<ClusterSummary> {
        let mut sums = vec![0.0; self.sizes.len()];
        let mut ones = 0u64;
        for (&v, &c) in self.values.iter().zip(&self.cluster) {
            if v <= threshold {
                sums[c as usize] += 1.0;
                ones += 1;
            }
        }
        let totals = sums
            .into_iter()
            .zip(&self.sizes)
            .map(|(sum, &size)| ClusterTotal { sum, size })
            .collect();
        let mut obs = UniMoments::new();
        let n = self.values.len() as u64;
        // order does not matter for the moments; push ones then zeros
        for i in 0..n {
            obs.push(if i < ones { 1.0 } else { 0.0 })?;
        }
        ClusterSummary::from_parts(totals, obs)
    }
}

/// How the clustered variance enters the outer interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Adjust {
    Pre,
    Post,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileQuery {
    pub p: f64,
    pub alpha: f64,
    pub adjust: Adjust,
}

impl QuantileQuery {
    pub fn new(p: f64, alpha: f64, adjust: Adjust) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "quantile level must lie in (0, 1), got {p}"
            )));
        }
        check_alpha(alpha)?;
        Ok(Self { p, alpha, adjust })
    }
}

/// Quantile estimate with its interval. Ranks are 1-based; the rank fields
/// and `sigma` are absent for bootstrap intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileEstimate {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub rank: usize,
    pub lower_rank: Option<usize>,
    pub upper_rank: Option<usize>,
    /// Clustered standard deviation of the indicator, `√(n·var(Ȳ))`.
    pub sigma: Option<f64>,
    /// `sigma / √(p(1-p))`.
    pub correction: Option<f64>,
    pub n: usize,
    pub alpha: f64,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn point_rank(n: usize, p: f64) -> usize {
    ((n as f64 * p).floor() as usize).clamp(1, n)
}

/// Outward-rounded outer ranks for a given indicator standard deviation.
fn outer_ranks(n: usize, p: f64, z: f64, sigma: f64) -> (usize, usize) {
    let center = n as f64 * p;
    let spread = z * sigma * (n as f64).sqrt();
    let lo = (center - spread).floor().max(1.0) as usize;
    let hi = ((center + spread).ceil() + 1.0).min(n as f64) as usize;
    (lo.min(n), hi.max(1))
}

fn check_sample(data: &ClusteredSample) -> Result<()> {
    if data.len() < 2 {
        return Err(Error::InsufficientData {
            what: "observations",
            needed: 2,
            got: data.len(),
        });
    }
    if data.num_clusters() < 2 {
        return Err(Error::InsufficientData {
            what: "clusters",
            needed: 2,
            got: data.num_clusters(),
        });
    }
    Ok(())
}

fn clustered_sigma(data: &ClusteredSample, threshold: f64) -> Result<f64> {
    let v = data.indicator_summary(threshold)?.delta_variance()?.variance;
    Ok((data.len() as f64 * v).sqrt())
}

fn select(values: &[f64], ranks: &[usize]) -> Vec<f64> {
    let mut wanted: Vec<usize> = ranks.iter().map(|r| r - 1).collect();
    wanted.sort_unstable();
    wanted.dedup();
    let mut scratch = values.to_vec();
    let mut found = Vec::with_capacity(wanted.len());
    select_in_place(&mut scratch, 0, &wanted, &mut found);
    ranks
        .iter()
        .map(|r| found.iter().find(|(i, _)| *i == r - 1).expect("selected").1)
        .collect()
}

/// Outer interval with the clustered variance used to pick the ranks.
pub fn outer_ci_pre(data: &ClusteredSample, p: f64, alpha: f64) -> Result<QuantileEstimate> {
    QuantileQuery::new(p, alpha, Adjust::Pre)?;
    check_sample(data)?;
    let n = data.len();
    let rank = point_rank(n, p);
    let value = select(&data.values, &[rank])[0];
    let sigma = clustered_sigma(data, value)?;
    let (lo, hi) = outer_ranks(n, p, z_critical(alpha), sigma);
    let bounds = select(&data.values, &[lo, hi]);
    let mut est = QuantileEstimate {
        value,
        lower: bounds[0],
        upper: bounds[1],
        rank,
        lower_rank: Some(lo),
        upper_rank: Some(hi),
        sigma: Some(sigma),
        correction: Some(sigma / (p * (1.0 - p)).sqrt()),
        n,
        alpha,
        method: Method::OuterPre,
        warnings: Vec::new(),
    };
    if est.lower == est.upper {
        est.warnings.push("zero-width interval: the selected order statistics coincide".into());
    }
    Ok(est)
}

/// Outer interval built from i.i.d. ranks, then rescaled around the point
/// estimate by the clustered-to-i.i.d. standard deviation ratio.
pub fn outer_ci_post(data: &ClusteredSample, p: f64, alpha: f64) -> Result<QuantileEstimate> {
    QuantileQuery::new(p, alpha, Adjust::Post)?;
    check_sample(data)?;
    let n = data.len();
    let rank = point_rank(n, p);
    let sigma0 = (p * (1.0 - p)).sqrt();
    let (lo, hi) = outer_ranks(n, p, z_critical(alpha), sigma0);
    let got = select(&data.values, &[rank, lo, hi]);
    let (value, x_lo, x_hi) = (got[0], got[1], got[2]);
    let sigma = clustered_sigma(data, value)?;
    let c = sigma / sigma0;
    let mut est = QuantileEstimate {
        value,
        lower: value - c * (value - x_lo),
        upper: value + c * (x_hi - value),
        rank,
        lower_rank: Some(lo),
        upper_rank: Some(hi),
        sigma: Some(sigma),
        correction: Some(c),
        n,
        alpha,
        method: Method::OuterPost,
        warnings: Vec::new(),
    };
    if x_lo == value && x_hi == value {
        est.warnings.push(
            "zero-width interval: unadjusted order statistics equal the estimate, \
             so the correction has nothing to scale"
                .into(),
        );
    }
    Ok(est)
}

pub fn outer_ci(data: &ClusteredSample, query: &QuantileQuery) -> Result<QuantileEstimate> {
    match query.adjust {
        Adjust::Pre => outer_ci_pre(data, query.p, query.alpha),
        Adjust::Post => outer_ci_post(data, query.p, query.alpha),
    }
}

/// Cluster bootstrap percentile interval.
///
/// Each replicate draws `K` clusters with replacement. Rather than
/// materializing the resample, the replicate quantile is read off the
/// original values sorted once, walking from the nearer end and counting each
/// value as many times as its cluster was drawn.
pub fn bootstrap_ci(
    data: &ClusteredSample,
    p: f64,
    alpha: f64,
    replicates: usize,
    seed: u64,
) -> Result<QuantileEstimate> {
    QuantileQuery::new(p, alpha, Adjust::Pre)?;
    check_sample(data)?;
    if replicates < 100 {
        return Err(Error::InvalidParameter(format!(
            "at least 100 bootstrap replicates are required, got {replicates}"
        )));
    }
    let n = data.len();
    let k = data.num_clusters();
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_unstable_by(|&a, &b| data.values[a as usize].total_cmp(&data.values[b as usize]));
    let sorted: Vec<(f64, u32)> = order
        .iter()
        .map(|&i| (data.values[i as usize], data.cluster[i as usize]))
        .collect();
    let rank = point_rank(n, p);
    let value = sorted[rank - 1].0;

    let mut estimates: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map_init(
            || vec![0u32; k],
            |counts, r| {
                let mut rng = rng::stream(seed, r as u64);
                counts.iter_mut().for_each(|c| *c = 0);
                let mut total = 0u64;
                for _ in 0..k {
                    let c = rng.gen_range(0..k);
                    counts[c] += 1;
                    total += data.sizes[c];
                }
                let target = point_rank(total as usize, p) as u64;
                weighted_order_statistic(&sorted, counts, total, target)
            },
        )
        .collect();
    estimates.sort_unstable_by(f64::total_cmp);
    let b = replicates as f64;
    let lo = ((b * alpha / 2.0).floor() as usize).clamp(1, replicates);
    let hi = ((b * (1.0 - alpha / 2.0)).ceil() as usize).clamp(1, replicates);
    let mut est = QuantileEstimate {
        value,
        lower: estimates[lo - 1],
        upper: estimates[hi - 1],
        rank,
        lower_rank: None,
        upper_rank: None,
        sigma: None,
        correction: None,
        n,
        alpha,
        method: Method::Bootstrap,
        warnings: Vec::new(),
    };
    if est.lower == est.upper {
        est.warnings.push("zero-width interval: every replicate gave the same quantile".into());
    }
    Ok(est)
}

/// Value at 1-based `rank` of the multiset in which `sorted[i]` appears
/// `counts[cluster]` times.
fn weighted_order_statistic(sorted: &[(f64, u32)], counts: &[u32], total: u64, rank: u64) -> f64 {
    if rank * 2 > total {
        let need = total - rank + 1;
        let mut seen = 0u64;
        for &(v, c) in sorted.iter().rev() {
            seen += counts[c as usize] as u64;
            if seen >= need {
                return v;
            }
        }
    } else {
        let mut seen = 0u64;
        for &(v, c) in sorted {
            seen += counts[c as usize] as u64;
            if seen >= rank {
                return v;
            }
        }
    }
    unreachable!("rank within the resample size")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn singletons(values: &[f64]) -> ClusteredSample {
        ClusteredSample::from_observations(values.iter().enumerate().map(|(i, &v)| (i, v)))
            .unwrap()
    }

    #[test]
    fn constant_data_gives_zero_width() {
        let data = ClusteredSample::from_groups(&[vec![3.0; 4], vec![3.0; 2], vec![3.0; 5]])
            .unwrap();
        for est in [
            outer_ci_pre(&data, 0.9, 0.05).unwrap(),
            outer_ci_post(&data, 0.9, 0.05).unwrap(),
            bootstrap_ci(&data, 0.9, 0.05, 200, 1).unwrap(),
        ] {
            assert_eq!((est.lower, est.value, est.upper), (3.0, 3.0, 3.0));
            assert!(!est.warnings.is_empty());
        }
    }

    #[test]
    fn query_validation() {
        assert!(QuantileQuery::new(1.5, 0.05, Adjust::Pre).is_err());
        assert!(QuantileQuery::new(0.0, 0.05, Adjust::Pre).is_err());
        assert!(QuantileQuery::new(0.5, 0.0, Adjust::Post).is_err());
        let data = singletons(&[1.0, 2.0, 3.0]);
        assert!(outer_ci_pre(&data, 1.0, 0.05).is_err());
        assert!(bootstrap_ci(&data, 0.5, 0.05, 99, 0).is_err());
    }

    #[test]
    fn one_cluster_is_rejected() {
        let data = ClusteredSample::from_groups(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(
            outer_ci_post(&data, 0.5, 0.05),
            Err(Error::InsufficientData { what: "clusters", .. })
        ));
    }

    #[test]
    fn ranks_bracket_the_point() {
        let vals: Vec<f64> = (0..57).map(|i| ((i * 37) % 57) as f64).collect();
        let data = singletons(&vals);
        for p in [0.01, 0.3, 0.5, 0.95, 0.99] {
            for est in [outer_ci_pre(&data, p, 0.05).unwrap(), outer_ci_post(&data, p, 0.05).unwrap()] {
                let (lo, hi) = (est.lower_rank.unwrap(), est.upper_rank.unwrap());
                assert!(1 <= lo && lo <= est.rank && est.rank <= hi && hi <= 57);
                assert!(est.lower <= est.value && est.value <= est.upper);
            }
        }
    }

    #[test]
    fn weighted_statistic_matches_expansion() {
        let sorted = [(1.0, 0), (2.0, 1), (3.0, 0), (4.0, 2)];
        let counts = [2, 0, 1];
        // expanded multiset: 1,1,3,3,4
        let expect = [1.0, 1.0, 3.0, 3.0, 4.0];
        for (r, e) in expect.iter().enumerate() {
            assert_eq!(weighted_order_statistic(&sorted, &counts, 5, r as u64 + 1), *e);
        }
    }
}
