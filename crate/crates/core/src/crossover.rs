//! Two-period cross-over analysis with arbitrary missing cells.
//!
//! Each user contributes `(I_t, X_t)` per period, with `I_t` the presence
//! indicator and `X_t = 0` when absent. The period metric (mean of the
//! observed values) is then the ratio `X̄_t / Ī_t` of two complete-data
//! means, so its covariance follows from the sample covariance of
//! `(I₁, X₁, I₂, X₂)` and the Delta method. The four group-by-period metrics
//! are finally fitted by GLS to the mean model
//! `(θ₁ + Δ, θ₂, θ₁, θ₂ + Δ)`.

use std::collections::HashMap;
use std::str::FromStr;

use nalgebra::{Cholesky, Matrix2, Matrix3, Matrix4, Matrix4x3, RowVector4, Vector2, Vector3, Vector4, U4};
use serde::{Deserialize, Serialize};

use crate::dist::z_critical;
use crate::error::{check_alpha, check_finite, Error, Result};
use crate::interval::{ConfidenceInterval, Method};
use crate::lmm::{fit_ols, fit_random_intercept, LmmData};
use crate::moments::QuadMoments;

/// Group I is treated in period 1, group II in period 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    I,
    II,
}

impl Group {
    pub fn treated_period(self) -> u8 {
        match self {
            Group::I => 1,
            Group::II => 2,
        }
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Group::I),
            "II" | "2" => Ok(Group::II),
            _ => Err(Error::InvalidParameter(format!("unknown group label {s:?}"))),
        }
    }
}

/// One observed `(user, period)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossoverRow {
    pub user: String,
    pub group: Group,
    pub period: u8,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelUser {
    pub id: String,
    pub group: Group,
    pub present: [bool; 2],
    /// Zero where the cell is absent.
    pub value: [f64; 2],
}

impl PanelUser {
    fn augmented(&self) -> [f64; 4] {
        let ind = |b: bool| if b { 1.0 } else { 0.0 };
        [
            ind(self.present[0]),
            self.value[0],
            ind(self.present[1]),
            self.value[1],
        ]
    }

    pub fn is_complete(&self) -> bool {
        self.present[0] && self.present[1]
    }
}

/// Users with their presence indicators and zero-filled values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AugmentedPanel {
    pub users: Vec<PanelUser>,
}

impl AugmentedPanel {
    /// Augments observed cells; users are kept in order of first appearance.
    pub fn augment<I: IntoIterator<Item = CrossoverRow>>(rows: I) -> Result<Self> {
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut users: Vec<PanelUser> = Vec::new();
        for row in rows {
            if !(row.period == 1 || row.period == 2) {
                return Err(Error::InvalidParameter(format!(
                    "period must be 1 or 2, got {}",
                    row.period
                )));
            }
            check_finite(row.value)?;
            let slot = match index.get(&row.user) {
                Some(&i) => i,
                None => {
                    index.insert(row.user.clone(), users.len());
                    users.push(PanelUser {
                        id: row.user.clone(),
                        group: row.group,
                        present: [false; 2],
                        value: [0.0; 2],
                    });
                    users.len() - 1
                }
            };
            let u = &mut users[slot];
            if u.group != row.group {
                return Err(Error::InvalidParameter(format!(
                    "user {} appears in both groups",
                    row.user
                )));
            }
            let t = (row.period - 1) as usize;
            if u.present[t] {
                return Err(Error::DuplicateCell {
                    user: row.user,
                    period: row.period,
                });
            }
            u.present[t] = true;
            u.value[t] = row.value;
        }
        Ok(Self { users })
    }

    /// Mean of the observed values of `group` in `period` (1 or 2).
    pub fn observed_mean(&self, group: Group, period: u8) -> Option<f64> {
        let t = (period - 1) as usize;
        let (s, c) = self
            .users
            .iter()
            .filter(|u| u.group == group && u.present[t])
            .fold((0.0, 0u64), |(s, c), u| (s + u.value[t], c + 1));
        (c > 0).then(|| s / c as f64)
    }
}

/// Period metrics of one group with their Delta-method covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupMetricVector {
    pub group: Group,
    pub users: u64,
    /// `(Ī₁, X̄₁, Ī₂, X̄₂)`.
    pub means: Vector4<f64>,
    /// Covariance of `means`: the sample covariance divided by `users`.
    pub cov_means: Matrix4<f64>,
    /// `(X̄₁/Ī₁, X̄₂/Ī₂)`.
    pub metrics: Vector2<f64>,
    pub metric_cov: Matrix2<f64>,
}

/// Period metrics and their covariance for one group. Users absent from both
/// periods are ignored.
pub fn metric_cov(panel: &AugmentedPanel, group: Group) -> Result<GroupMetricVector> {
    let mut acc = QuadMoments::new();
    for u in panel.users.iter().filter(|u| u.group == group) {
        if u.present[0] || u.present[1] {
            acc.push(u.augmented())?;
        }
    }
    let n = acc.count();
    let cov = acc.covariance()? / n as f64;
    let m = acc.mean().expect("non-empty");
    let (i1, x1, i2, x2) = (m[0], m[1], m[2], m[3]);
    if i1 == 0.0 || i2 == 0.0 {
        return Err(Error::InsufficientData {
            what: "observations in each period",
            needed: 1,
            got: 0,
        });
    }
    let jac = nalgebra::Matrix2x4::from_rows(&[
        RowVector4::new(-x1 / (i1 * i1), 1.0 / i1, 0.0, 0.0),
        RowVector4::new(0.0, 0.0, -x2 / (i2 * i2), 1.0 / i2),
    ]);
    let mc = jac * cov * jac.transpose();
    Ok(GroupMetricVector {
        group,
        users: n,
        means: m,
        cov_means: cov,
        metrics: Vector2::new(x1 / i1, x2 / i2),
        metric_cov: 0.5 * (mc + mc.transpose()),
    })
}

/// Estimates of `(θ₁, θ₂, Δ)` with their covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossoverFit {
    pub theta: Vector3<f64>,
    pub covariance: Matrix3<f64>,
    pub se_delta: f64,
    pub ci: ConfidenceInterval,
    pub iterations: usize,
}

impl CrossoverFit {
    pub fn delta(&self) -> f64 {
        self.theta[2]
    }

    fn new(theta: Vector3<f64>, covariance: Matrix3<f64>, alpha: f64, method: Method, iterations: usize) -> Self {
        let se = covariance[(2, 2)].max(0.0).sqrt();
        let half = z_critical(alpha) * se;
        Self {
            theta,
            covariance,
            se_delta: se,
            ci: ConfidenceInterval {
                point: theta[2],
                lower: theta[2] - half,
                upper: theta[2] + half,
                alpha,
                se,
                method,
                warnings: Vec::new(),
            },
            iterations,
        }
    }
}

/// Ordering: group I period 1, group I period 2, group II period 1, group II
/// period 2.
fn stacked(g1: &GroupMetricVector, g2: &GroupMetricVector) -> Result<(Vector4<f64>, Cholesky<f64, U4>)> {
    if g1.group != Group::I || g2.group != Group::II {
        return Err(Error::InvalidParameter(
            "expected metric vectors for group I then group II".into(),
        ));
    }
    let x = Vector4::new(g1.metrics[0], g1.metrics[1], g2.metrics[0], g2.metrics[1]);
    let mut sigma = Matrix4::zeros();
    sigma.fixed_view_mut::<2, 2>(0, 0).copy_from(&g1.metric_cov);
    sigma.fixed_view_mut::<2, 2>(2, 2).copy_from(&g2.metric_cov);
    let scale = sigma.diagonal().max();
    let chol = Cholesky::new(sigma).ok_or(Error::SingularCovariance("metric covariance"))?;
    let pivot = chol.l_dirty().diagonal().min();
    if scale.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || pivot * pivot <= 1e-14 * scale {
        return Err(Error::SingularCovariance("metric covariance"));
    }
    Ok((x, chol))
}

/// Weighted least squares step: returns `(JᵀΣ⁻¹J)⁻¹ JᵀΣ⁻¹ r` and the inverse
/// information.
fn gls_solve(
    design: &Matrix4x3<f64>,
    resid: &Vector4<f64>,
    chol: &Cholesky<f64, U4>,
) -> Result<(Vector3<f64>, Matrix3<f64>)> {
    let w_design = chol.solve(design);
    let info = design.transpose() * w_design;
    let cov = info
        .try_inverse()
        .ok_or(Error::SingularCovariance("Fisher information"))?;
    let score = w_design.transpose() * resid;
    Ok((cov * score, 0.5 * (cov + cov.transpose())))
}

fn additive_design() -> Matrix4x3<f64> {
    Matrix4x3::new(
        1.0, 0.0, 1.0, //
        0.0, 1.0, 0.0, //
        1.0, 0.0, 0.0, //
        0.0, 1.0, 1.0,
    )
}

/// GLS fit of the additive cross-over model with `Σ_X` taken as known.
pub fn fit_crossover(g1: &GroupMetricVector, g2: &GroupMetricVector, alpha: f64) -> Result<CrossoverFit> {
    let alpha = check_alpha(alpha)?;
    let (x, chol) = stacked(g1, g2)?;
    let (theta, cov) = gls_solve(&additive_design(), &x, &chol)?;
    Ok(CrossoverFit::new(theta, cov, alpha, Method::CrossoverGls, 1))
}

const GN_MAX_ITER: usize = 100;
const GN_STEP_TOL: f64 = 1e-10;

/// Multiplicative model `(θ₁(1+Δ), θ₂, θ₁, θ₂(1+Δ))` solved by Gauss-Newton,
/// so `Δ` is the relative effect.
pub fn fit_crossover_relative(
    g1: &GroupMetricVector,
    g2: &GroupMetricVector,
    alpha: f64,
) -> Result<CrossoverFit> {
    let alpha = check_alpha(alpha)?;
    let (x, chol) = stacked(g1, g2)?;
    let mean = |t: &Vector3<f64>| Vector4::new(t[0] * (1.0 + t[2]), t[1], t[0], t[1] * (1.0 + t[2]));
    let jac = |t: &Vector3<f64>| {
        Matrix4x3::new(
            1.0 + t[2], 0.0, t[0], //
            0.0, 1.0, 0.0, //
            1.0, 0.0, 0.0, //
            0.0, 1.0 + t[2], t[1],
        )
    };
    if x[2] == 0.0 || x[1] == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let mut theta = Vector3::new(x[2], x[1], 0.5 * (x[0] / x[2] + x[3] / x[1]) - 1.0);
    let mut cov = Matrix3::zeros();
    let mut iterations = 0;
    for it in 1..=GN_MAX_ITER {
        iterations = it;
        let (step, c) = gls_solve(&jac(&theta), &(x - mean(&theta)), &chol)?;
        theta += step;
        cov = c;
        if step.amax() < GN_STEP_TOL {
            break;
        }
    }
    let (_, cov_final) = gls_solve(&jac(&theta), &(x - mean(&theta)), &chol).unwrap_or((Vector3::zeros(), cov));
    let mut fit = CrossoverFit::new(theta, cov_final, alpha, Method::CrossoverRelative, iterations);
    if iterations == GN_MAX_ITER {
        fit.ci.warnings.push("Gauss-Newton reached the iteration limit".into());
    }
    Ok(fit)
}

/// Both group vectors and the additive GLS fit in one call.
pub fn analyze(panel: &AugmentedPanel, alpha: f64) -> Result<CrossoverFit> {
    let g1 = metric_cov(panel, Group::I)?;
    let g2 = metric_cov(panel, Group::II)?;
    fit_crossover(&g1, &g2, alpha)
}

fn long_format<'a, I: IntoIterator<Item = &'a PanelUser>>(users: I) -> Result<LmmData> {
    let mut data = LmmData::new(3);
    for (k, u) in users.into_iter().enumerate() {
        for t in 0..2 {
            if u.present[t] {
                let period = t as u8 + 1;
                let treat = if u.group.treated_period() == period { 1.0 } else { 0.0 };
                let time = if period == 2 { 1.0 } else { 0.0 };
                data.push(k as u64, &[1.0, treat, time], u.value[t])?;
            }
        }
    }
    Ok(data)
}

// (β₀, β_treat, β_time) ↦ (θ₁, θ₂, Δ)
fn theta_from_beta(beta: &[f64], cov: &nalgebra::DMatrix<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let a = Matrix3::new(
        1.0, 0.0, 0.0, //
        1.0, 0.0, 1.0, //
        0.0, 1.0, 0.0,
    );
    let b = Vector3::new(beta[0], beta[1], beta[2]);
    let c = Matrix3::from_fn(|i, j| cov[(i, j)]);
    (a * b, a * c * a.transpose())
}

/// Random-intercept model `value ~ treatment + period + (1 | user)` on the
/// observed cells.
pub fn fit_crossover_lmm(panel: &AugmentedPanel, alpha: f64) -> Result<CrossoverFit> {
    let alpha = check_alpha(alpha)?;
    let fit = fit_random_intercept(&long_format(&panel.users)?)?;
    let (theta, cov) = theta_from_beta(&fit.beta, &fit.cov_beta);
    let mut out = CrossoverFit::new(theta, cov, alpha, Method::CrossoverLmm, 1);
    out.ci.warnings = fit.warnings;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgroupEstimate {
    pub estimate: f64,
    pub variance: f64,
    pub users: usize,
}

/// Treatment-effect estimates on complete and incomplete users and their
/// inverse-variance weighted combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub complete: SubgroupEstimate,
    pub incomplete: SubgroupEstimate,
    pub weighted: SubgroupEstimate,
}

/// Mixed model on users seen in both periods, ordinary least squares on users
/// seen once (where a random intercept is not identifiable), combined with
/// inverse-variance weights.
pub fn decompose_complete_incomplete(panel: &AugmentedPanel) -> Result<Decomposition> {
    let (complete, incomplete): (Vec<&PanelUser>, Vec<&PanelUser>) = panel
        .users
        .iter()
        .filter(|u| u.present[0] || u.present[1])
        .partition(|u| u.is_complete());
    for (what, set) in [("complete users", &complete), ("incomplete users", &incomplete)] {
        if set.is_empty() {
            return Err(Error::InsufficientData { what, needed: 1, got: 0 });
        }
    }
    let c = fit_random_intercept(&long_format(complete.iter().copied())?)?;
    let o = fit_ols(&long_format(incomplete.iter().copied())?)?;
    let cs = SubgroupEstimate {
        estimate: c.beta[1],
        variance: c.cov_beta[(1, 1)],
        users: complete.len(),
    };
    let is = SubgroupEstimate {
        estimate: o.beta[1],
        variance: o.cov_beta[(1, 1)],
        users: incomplete.len(),
    };
    Ok(Decomposition {
        complete: cs,
        incomplete: is,
        weighted: inverse_variance_average(&cs, &is)?,
    })
}

pub fn inverse_variance_average(a: &SubgroupEstimate, b: &SubgroupEstimate) -> Result<SubgroupEstimate> {
    if !(a.variance > 0.0 && b.variance > 0.0) {
        return Err(Error::SingularCovariance("subgroup variance"));
    }
    let (wa, wb) = (1.0 / a.variance, 1.0 / b.variance);
    Ok(SubgroupEstimate {
        estimate: (wa * a.estimate + wb * b.estimate) / (wa + wb),
        variance: 1.0 / (wa + wb),
        users: a.users + b.users,
    })
}
