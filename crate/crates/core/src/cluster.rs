//! Variance of an average metric when the randomization unit is a cluster of
//! analysis units.
//!
//! The metric `Ȳ = Σ S_i / Σ N_i` is the ratio of two averages of i.i.d.
//! cluster-level quantities, so its variance follows from the Delta method
//! applied to the cluster sums `S_i` and sizes `N_i`.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::interval::Method;
use crate::moments::{PairedMoments, UniMoments};

/// Sum and size of one cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterTotal {
    pub sum: f64,
    pub size: u64,
}

/// Per-cluster totals plus the moments every estimator here needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSummary {
    clusters: Vec<ClusterTotal>,
    /// Moments of `(N_i, S_i)` across clusters.
    by_cluster: PairedMoments,
    /// Moments of the individual observations.
    observations: UniMoments,
}

/// Point estimate and variance of an average metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterEstimate {
    pub mean: f64,
    pub variance: f64,
    pub se: f64,
    pub method: Method,
}

impl ClusterEstimate {
    fn new(mean: f64, variance: f64, method: Method) -> Self {
        let variance = variance.max(0.0);
        Self {
            mean,
            variance,
            se: variance.sqrt(),
            method,
        }
    }
}

impl ClusterSummary {
    /// Groups unit-level observations by cluster id. Clusters are kept in
    /// order of first appearance.
    pub fn from_observations<K, I>(observations: I) -> Result<Self>
    where
        K: Hash + Eq,
        I: IntoIterator<Item = (K, f64)>,
    {
        let mut index: HashMap<K, usize> = HashMap::new();
        let mut clusters: Vec<ClusterTotal> = Vec::new();
        let mut obs = UniMoments::new();
        for (id, value) in observations {
            obs.push(value)?;
            let next = clusters.len();
            let slot = *index.entry(id).or_insert(next);
            if slot == next {
                clusters.push(ClusterTotal { sum: 0.0, size: 0 });
            }
            clusters[slot].sum += value;
            clusters[slot].size += 1;
        }
        if clusters.is_empty() {
            return Err(Error::InsufficientData {
                what: "observations",
                needed: 1,
                got: 0,
            });
        }
        Self::assemble(clusters, obs)
    }

    /// Builds a summary from cluster totals and observation-level moments
    /// computed elsewhere, e.g. by merging shards.
    pub fn from_parts(clusters: Vec<ClusterTotal>, observations: UniMoments) -> Result<Self> {
        if clusters.is_empty() {
            return Err(Error::InsufficientData {
                what: "clusters",
                needed: 1,
                got: 0,
            });
        }
        let size: u64 = clusters.iter().map(|c| c.size).sum();
        if size != observations.count() {
            return Err(Error::LengthMismatch {
                expected: size as usize,
                got: observations.count() as usize,
            });
        }
        Self::assemble(clusters, observations)
    }

    fn assemble(clusters: Vec<ClusterTotal>, observations: UniMoments) -> Result<Self> {
        let mut by_cluster = PairedMoments::new();
        for c in &clusters {
            if c.size == 0 {
                return Err(Error::InvalidParameter("cluster of size zero".into()));
            }
            check_finite(c.sum)?;
            by_cluster.push(c.size as f64, c.sum)?;
        }
        Ok(Self {
            clusters,
            by_cluster,
            observations,
        })
    }

    pub fn clusters(&self) -> &[ClusterTotal] {
        &self.clusters
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn num_observations(&self) -> u64 {
        self.observations.count()
    }

    /// `Σ S_i / Σ N_i`.
    pub fn mean(&self) -> f64 {
        let s: f64 = self.clusters.iter().map(|c| c.sum).sum();
        s / self.num_observations() as f64
    }

    /// Delta-method variance of the average metric.
    pub fn delta_variance(&self) -> Result<ClusterEstimate> {
        let k = self.clusters.len();
        if k < 2 {
            return Err(Error::InsufficientData {
                what: "clusters",
                needed: 2,
                got: k,
            });
        }
        let st = self.by_cluster.stats()?;
        let (nbar, sbar) = (st.mean_x, st.mean_y);
        let r = sbar / nbar;
        let v = (st.var_y - 2.0 * r * st.cov_xy + r * r * st.var_x) / (k as f64 * nbar * nbar);
        Ok(ClusterEstimate::new(self.mean(), v, Method::ClusterDelta))
    }

    /// Variance obtained by treating every observation as independent.
    pub fn naive_variance(&self) -> Result<ClusterEstimate> {
        let st = self.observations.stats()?;
        Ok(ClusterEstimate::new(
            self.mean(),
            st.variance / st.n as f64,
            Method::Naive,
        ))
    }
}

/// Closed-form variance of the mean for `k` equal clusters of size `m` with
/// within-cluster variance `sigma2` and between-cluster variance `tau2`.
pub fn donner_variance(sigma2: f64, tau2: f64, k: u64, m: u64) -> f64 {
    let total = sigma2 + tau2;
    if total == 0.0 || k == 0 || m == 0 {
        return 0.0;
    }
    let rho = tau2 / total;
    total / (k * m) as f64 * (1.0 + (m as f64 - 1.0) * rho)
}

/// Difference of two independent group means with its Delta-method variance.
pub fn delta_ate(treatment: &ClusterSummary, control: &ClusterSummary) -> Result<ClusterEstimate> {
    let t = treatment.delta_variance()?;
    let c = control.delta_variance()?;
    Ok(ClusterEstimate::new(
        t.mean - c.mean,
        t.variance + c.variance,
        Method::ClusterDelta,
    ))
}
