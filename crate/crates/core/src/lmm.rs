//! Gaussian random-intercept linear mixed model fitted by REML.
//!
//! Model: `y_ij = x_ijᵀβ + b_i + ε_ij`, `b_i ~ N(0, τ²)`, `ε_ij ~ N(0, σ²)`.
//! With `λ = τ²/σ²` the covariance of cluster `i` is `σ²(I + λ11ᵀ)`, whose
//! inverse is `σ⁻²(I - w_i 11ᵀ)` with `w_i = λ / (1 + n_i λ)`. Every GLS
//! quantity therefore reduces to per-cluster sums, and the REML criterion is
//! profiled over `log10 λ` alone.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_finite, Error, Result};

const LOG_LAMBDA_MIN: f64 = -8.0;
const LOG_LAMBDA_MAX: f64 = 8.0;
const GRID_STEP: f64 = 0.5;
const SEARCH_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
struct ClusterStats {
    n: u64,
    xtx: DMatrix<f64>,
    xt1: DVector<f64>,
    xty: DVector<f64>,
    sum_y: f64,
    yty: f64,
}

impl ClusterStats {
    fn new(p: usize) -> Self {
        Self {
            n: 0,
            xtx: DMatrix::zeros(p, p),
            xt1: DVector::zeros(p),
            xty: DVector::zeros(p),
            sum_y: 0.0,
            yty: 0.0,
        }
    }
}

/// Long-format data for a random-intercept model, stored as per-cluster
/// sufficient statistics.
#[derive(Debug, Clone)]
pub struct LmmData {
    p: usize,
    index: HashMap<u64, usize>,
    clusters: Vec<ClusterStats>,
    intercept: Vec<bool>,
    rows: u64,
}

impl LmmData {
    /// Empty data set with `columns` fixed-effect covariates per row.
    pub fn new(columns: usize) -> Self {
        Self {
            p: columns,
            index: HashMap::new(),
            clusters: Vec::new(),
            intercept: vec![true; columns],
            rows: 0,
        }
    }

    /// Adds one observation. Clusters are numbered in order of first
    /// appearance.
    pub fn push(&mut self, cluster: u64, covariates: &[f64], response: f64) -> Result<()> {
        if covariates.len() != self.p {
            return Err(Error::LengthMismatch {
                expected: self.p,
                got: covariates.len(),
            });
        }
        check_finite(response)?;
        for &c in covariates {
            check_finite(c)?;
        }
        let next = self.clusters.len();
        let slot = *self.index.entry(cluster).or_insert(next);
        if slot == next {
            self.clusters.push(ClusterStats::new(self.p));
        }
        let cs = &mut self.clusters[slot];
        let x = DVector::from_column_slice(covariates);
        cs.n += 1;
        cs.xtx.ger(1.0, &x, &x, 1.0);
        cs.xt1 += &x;
        cs.xty.axpy(response, &x, 1.0);
        cs.sum_y += response;
        cs.yty += response * response;
        for (flag, &c) in self.intercept.iter_mut().zip(covariates) {
            *flag &= c == 1.0;
        }
        self.rows += 1;
        Ok(())
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn num_rows(&self) -> u64 {
        self.rows
    }

    pub fn cluster_sizes(&self) -> Vec<u64> {
        self.clusters.iter().map(|c| c.n).collect()
    }

    /// Index of the first all-ones column, if any.
    pub fn intercept_column(&self) -> Option<usize> {
        self.intercept.iter().position(|&b| b)
    }
}

/// Result of a REML fit.
#[derive(Debug, Clone)]
pub struct LmmFit {
    pub beta: Vec<f64>,
    pub se_beta: Vec<f64>,
    pub cov_beta: DMatrix<f64>,
    pub tau2: f64,
    pub sigma2: f64,
    pub lambda: f64,
    /// Predicted random intercept per cluster, in order of first appearance.
    pub blup: Vec<f64>,
    pub cluster_sizes: Vec<u64>,
    pub intercept_column: usize,
    pub reml_criterion: f64,
    /// Set when the optimum sits on the edge of the `λ` search range or the
    /// variance components are not identifiable.
    pub warnings: Vec<String>,
}

impl LmmFit {
    pub fn at_boundary(&self) -> bool {
        !self.warnings.is_empty()
    }
}

/// GLS quantities at a fixed `λ`.
struct Profile {
    beta: DVector<f64>,
    a_chol: Cholesky<f64, Dyn>,
    q: f64,
    criterion: f64,
}

fn profile(data: &LmmData, lambda: f64) -> Result<Profile> {
    let p = data.p;
    let mut a = DMatrix::zeros(p, p);
    let mut b = DVector::zeros(p);
    let mut c = 0.0;
    let mut logdet_h = 0.0;
    for cs in &data.clusters {
        let n = cs.n as f64;
        let w = lambda / (1.0 + n * lambda);
        a += &cs.xtx;
        a.ger(-w, &cs.xt1, &cs.xt1, 1.0);
        b += &cs.xty;
        b.axpy(-w * cs.sum_y, &cs.xt1, 1.0);
        c += cs.yty - w * cs.sum_y * cs.sum_y;
        logdet_h += (n * lambda).ln_1p();
    }
    let a_chol = Cholesky::new(a).ok_or(Error::RankDeficient)?;
    let beta = a_chol.solve(&b);
    let q = (c - b.dot(&beta)).max(f64::MIN_POSITIVE);
    let dof = data.rows as f64 - p as f64;
    let logdet_a = 2.0 * a_chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(Profile {
        beta,
        a_chol,
        q,
        criterion: dof * q.ln() + logdet_h + logdet_a,
    })
}

/// Profiled REML criterion (−2 log restricted likelihood up to a constant)
/// at the variance ratio `lambda`.
pub fn reml_criterion(data: &LmmData, lambda: f64) -> Result<f64> {
    Ok(profile(data, lambda)?.criterion)
}

fn golden_section<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

fn check_shape(data: &LmmData) -> Result<usize> {
    if data.clusters.len() < 2 {
        return Err(Error::InsufficientData {
            what: "clusters",
            needed: 2,
            got: data.clusters.len(),
        });
    }
    if data.rows <= data.p as u64 {
        return Err(Error::InsufficientData {
            what: "rows",
            needed: data.p + 1,
            got: data.rows as usize,
        });
    }
    data.intercept_column()
        .ok_or_else(|| Error::InvalidParameter("design has no intercept column".into()))
}

/// Fits the random-intercept model by REML.
pub fn fit_random_intercept(data: &LmmData) -> Result<LmmFit> {
    let intercept_column = check_shape(data)?;
    let mut warnings = Vec::new();

    let identifiable = data.clusters.iter().any(|c| c.n > 1);
    let log_lambda = if !identifiable {
        warnings.push(
            "every cluster has one observation; variance components are not identifiable, \
             between-cluster variance set to the lower search bound"
                .to_string(),
        );
        LOG_LAMBDA_MIN
    } else {
        let eval = |u: f64| profile(data, 10f64.powf(u)).map(|p| p.criterion);
        let steps = ((LOG_LAMBDA_MAX - LOG_LAMBDA_MIN) / GRID_STEP).round() as usize;
        let grid: Vec<f64> = (0..=steps)
            .map(|i| LOG_LAMBDA_MIN + i as f64 * GRID_STEP)
            .collect();
        let mut best = (0, f64::INFINITY);
        for (i, &u) in grid.iter().enumerate() {
            let v = eval(u)?;
            if v < best.1 {
                best = (i, v);
            }
        }
        let lo = grid[best.0.saturating_sub(1)];
        let hi = grid[(best.0 + 1).min(steps)];
        let u = golden_section(|u| eval(u).unwrap_or(f64::INFINITY), lo, hi, SEARCH_TOL);
        if u - LOG_LAMBDA_MIN < 1e-6 || LOG_LAMBDA_MAX - u < 1e-6 {
            warnings.push(format!(
                "REML optimum at the boundary of the search range (log10 lambda = {u:.3})"
            ));
        }
        u
    };

    let lambda = 10f64.powf(log_lambda);
    let prof = profile(data, lambda)?;
    let dof = data.rows as f64 - data.p as f64;
    let sigma2 = prof.q / dof;
    let cov_beta = prof.a_chol.inverse() * sigma2;
    let se_beta = cov_beta.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect();
    let blup = data
        .clusters
        .iter()
        .map(|cs| {
            let w = lambda / (1.0 + cs.n as f64 * lambda);
            w * (cs.sum_y - cs.xt1.dot(&prof.beta))
        })
        .collect();
    Ok(LmmFit {
        beta: prof.beta.iter().copied().collect(),
        se_beta,
        cov_beta,
        tau2: lambda * sigma2,
        sigma2,
        lambda,
        blup,
        cluster_sizes: data.cluster_sizes(),
        intercept_column,
        reml_criterion: prof.criterion,
        warnings,
    })
}

/// Ordinary least squares fit of the same data, ignoring clustering.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub beta: Vec<f64>,
    pub se_beta: Vec<f64>,
    pub cov_beta: DMatrix<f64>,
    pub sigma2: f64,
}

pub fn fit_ols(data: &LmmData) -> Result<OlsFit> {
    if data.rows <= data.p as u64 {
        return Err(Error::InsufficientData {
            what: "rows",
            needed: data.p + 1,
            got: data.rows as usize,
        });
    }
    let prof = profile(data, 0.0)?;
    let sigma2 = prof.q / (data.rows as f64 - data.p as f64);
    let cov_beta = prof.a_chol.inverse() * sigma2;
    Ok(OlsFit {
        beta: prof.beta.iter().copied().collect(),
        se_beta: cov_beta.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect(),
        cov_beta,
        sigma2,
    })
}

/// Size-weighted average of the fitted cluster means `α̂ + b̂_i`.
pub fn weighted_cluster_mean(fit: &LmmFit, sizes: &[u64]) -> Result<f64> {
    if sizes.len() != fit.blup.len() {
        return Err(Error::LengthMismatch {
            expected: fit.blup.len(),
            got: sizes.len(),
        });
    }
    let alpha = fit.beta[fit.intercept_column];
    let total: u64 = sizes.iter().sum();
    if total == 0 {
        return Err(Error::InvalidParameter("all cluster sizes are zero".into()));
    }
    let s: f64 = fit
        .blup
        .iter()
        .zip(sizes)
        .map(|(b, &n)| (alpha + b) * n as f64)
        .sum();
    Ok(s / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intercept_only(groups: &[&[f64]]) -> LmmData {
        let mut d = LmmData::new(1);
        for (i, g) in groups.iter().enumerate() {
            for &y in *g {
                d.push(i as u64, &[1.0], y).unwrap();
            }
        }
        d
    }

    #[test]
    fn weighted_mean_arithmetic() {
        let fit = LmmFit {
            beta: vec![0.5],
            se_beta: vec![0.0],
            cov_beta: DMatrix::zeros(1, 1),
            tau2: 0.0,
            sigma2: 1.0,
            lambda: 0.0,
            blup: vec![-0.3, 0.3],
            cluster_sizes: vec![1, 3],
            intercept_column: 0,
            reml_criterion: 0.0,
            warnings: vec![],
        };
        let w = weighted_cluster_mean(&fit, &[1, 3]).unwrap();
        assert!((w - 0.65).abs() < 1e-15);
        assert!(weighted_cluster_mean(&fit, &[1]).is_err());
    }

    #[test]
    fn rank_deficient_design() {
        let mut d = LmmData::new(2);
        for i in 0..6 {
            d.push(i % 3, &[1.0, 1.0], i as f64).unwrap();
        }
        assert_eq!(fit_random_intercept(&d).unwrap_err(), Error::RankDeficient);
    }

    #[test]
    fn requires_intercept() {
        let mut d = LmmData::new(1);
        for i in 0..6 {
            d.push(i % 2, &[i as f64], 1.0).unwrap();
        }
        assert!(matches!(
            fit_random_intercept(&d),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn singletons_are_flagged() {
        let d = intercept_only(&[&[1.0], &[2.0], &[4.0], &[3.0]]);
        let fit = fit_random_intercept(&d).unwrap();
        assert!(fit.at_boundary());
        assert!((fit.beta[0] - 2.5).abs() < 1e-9);
    }

    #[test]
    fn identical_clusters_put_lambda_at_zero() {
        let g: &[f64] = &[1.0, -1.0, 0.5, -0.5];
        let d = intercept_only(&[g, g, g, g]);
        let fit = fit_random_intercept(&d).unwrap();
        assert!(fit.lambda < 1e-6);
        assert!(fit.at_boundary());
        assert!(fit.beta[0].abs() < 1e-6);
        assert!(fit.blup.iter().all(|b| b.abs() < 1e-6));
    }

    #[test]
    fn push_checks_width() {
        let mut d = LmmData::new(2);
        assert!(d.push(0, &[1.0], 1.0).is_err());
        assert!(d.push(0, &[1.0, f64::NAN], 1.0).is_err());
    }
}
