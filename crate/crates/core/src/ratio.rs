//! Confidence intervals for the percent change `μ_y / μ_x - 1`.
//!
//! All five methods work from the means, variances and covariance of the two
//! samples. Internally everything is expressed through the variances of the
//! two sample means (`var_x / n` and so on), which lets the same formulas
//! serve paired samples and independent groups of unequal size.

use crate::dist::{normal_cdf, normal_pdf, t_critical, z_critical};
use crate::error::{check_alpha, Error, Result};
use crate::interval::{ConfidenceInterval, Method};
use crate::moments::{PairedMoments, UniMoments};

/// Sufficient statistics for a percent-change interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioInput {
    pub mean_x: f64,
    pub mean_y: f64,
    /// Variance of the control mean, `s_x² / n_x`.
    pub var_mean_x: f64,
    /// Variance of the treatment mean, `s_y² / n_y`.
    pub var_mean_y: f64,
    /// Covariance of the two means, `s_xy / n` (zero for independent groups).
    pub cov_means: f64,
    /// Degrees of freedom for the Fieller t quantile: `n - 1` for paired
    /// samples, the pooled `n_x + n_y - 2` for independent groups.
    pub df: f64,
    pub alpha: f64,
    shape: Shape,
}

/// What the Edgeworth correction needs: the skewness of the linearized
/// statistic is `skew_w / √n`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Shape {
    n: u64,
    skew_w: f64,
}

fn linear_coefficients(mean_x: f64, mean_y: f64) -> (f64, f64) {
    (1.0 / mean_x, -mean_y / (mean_x * mean_x))
}

impl RatioInput {
    /// Paired (equal-length) control `x` and treatment `y` samples. The sample
    /// covariance is always estimated.
    pub fn paired(moments: &PairedMoments, alpha: f64) -> Result<Self> {
        let alpha = check_alpha(alpha)?;
        let st = moments.stats()?;
        let n = st.n as f64;
        let skew_w = if st.mean_x != 0.0 {
            let (a, b) = linear_coefficients(st.mean_x, st.mean_y);
            // biased second moments to pair with the divisor-n third moments
            let k = (n - 1.0) / n;
            let m2 = k * (a * a * st.var_y + 2.0 * a * b * st.cov_xy + b * b * st.var_x);
            let m3 = a.powi(3) * st.m03
                + 3.0 * a * a * b * st.m12
                + 3.0 * a * b * b * st.m21
                + b.powi(3) * st.m30;
            if m2 > 0.0 {
                m3 / m2.powf(1.5)
            } else {
                0.0
            }
        } else {
            0.0
        };
        Ok(Self {
            mean_x: st.mean_x,
            mean_y: st.mean_y,
            var_mean_x: st.var_x / n,
            var_mean_y: st.var_y / n,
            cov_means: st.cov_xy / n,
            df: n - 1.0,
            alpha,
            shape: Shape { n: st.n, skew_w },
        })
    }

    /// Independent control and treatment groups, possibly of different sizes.
    /// The covariance of the means is zero by construction. The Edgeworth
    /// skewness is that of `aȲ + bX̄` from the third cumulants of each group,
    /// expressed on the scale of the smaller group.
    pub fn independent(x: &UniMoments, y: &UniMoments, alpha: f64) -> Result<Self> {
        let alpha = check_alpha(alpha)?;
        let sx = x.stats()?;
        let sy = y.stats()?;
        let (nx, ny) = (sx.n as f64, sy.n as f64);
        let n = sx.n.min(sy.n);
        let skew_w = if sx.mean != 0.0 {
            let (a, b) = linear_coefficients(sx.mean, sy.mean);
            let m2x = sx.variance * (nx - 1.0) / nx;
            let m2y = sy.variance * (ny - 1.0) / ny;
            let var = a * a * m2y / ny + b * b * m2x / nx;
            let k3 = a.powi(3) * sy.m3 / (ny * ny) + b.powi(3) * sx.m3 / (nx * nx);
            if var > 0.0 {
                k3 / var.powf(1.5) * (n as f64).sqrt()
            } else {
                0.0
            }
        } else {
            0.0
        };
        Ok(Self {
            mean_x: sx.mean,
            mean_y: sy.mean,
            var_mean_x: sx.variance / sx.n as f64,
            var_mean_y: sy.variance / sy.n as f64,
            cov_means: 0.0,
            df: (sx.n + sy.n - 2) as f64,
            alpha,
            shape: Shape { n, skew_w },
        })
    }

    /// Sample skewness of the linearized observations.
    pub fn skew_w(&self) -> f64 {
        self.shape.skew_w
    }

    fn ratio(&self) -> Result<f64> {
        if self.mean_x == 0.0 {
            return Err(Error::ZeroDenominator);
        }
        Ok(self.mean_y / self.mean_x)
    }

    /// Delta-method variance of `Ȳ / X̄`.
    pub fn delta_variance(&self) -> Result<f64> {
        let r = self.ratio()?;
        let xb = self.mean_x;
        let v = (self.var_mean_y - 2.0 * r * self.cov_means + r * r * self.var_mean_x) / (xb * xb);
        Ok(v.max(0.0))
    }

    /// Second-order bias correction added to the point estimate.
    pub fn bias_correction(&self) -> Result<f64> {
        let r = self.ratio()?;
        let xb = self.mean_x;
        Ok(r * self.var_mean_x / (xb * xb) - self.cov_means / (xb * xb))
    }
}

/// Delta-method interval, optionally with the bias-corrected point estimate.
pub fn delta_ci(input: &RatioInput, bias_correct: bool) -> Result<ConfidenceInterval> {
    let r = input.ratio()?;
    let se = input.delta_variance()?.sqrt();
    let mut point = r - 1.0;
    if bias_correct {
        point += input.bias_correction()?;
    }
    let half = z_critical(input.alpha) * se;
    Ok(ConfidenceInterval {
        point,
        lower: point - half,
        upper: point + half,
        alpha: input.alpha,
        se,
        method: if bias_correct { Method::DeltaBc } else { Method::Delta },
        warnings: Vec::new(),
    })
}

/// Fieller's interval for the ratio of means, shifted to the percent-change
/// scale.
pub fn fieller_ci(input: &RatioInput) -> Result<ConfidenceInterval> {
    let r = input.ratio()?;
    let xb = input.mean_x;
    let t = t_critical(input.alpha, input.df);
    let t2 = t * t;
    let (vxx, vyy, vxy) = (input.var_mean_x, input.var_mean_y, input.cov_means);
    let g = t2 * vxx / (xb * xb);
    if g >= 1.0 {
        return Err(Error::FiellerUnbounded { g });
    }
    // g·vxy/vxx and g·vxy²/vxx written without dividing by vxx, which may be 0
    let center = r - t2 * vxy / (xb * xb);
    let mut disc = vyy - 2.0 * r * vxy + r * r * vxx - g * vyy + t2 * vxy * vxy / (xb * xb);
    if disc < 0.0 {
        let scale = vyy + r * r * vxx;
        if disc < -1e-12 * scale {
            return Err(Error::FiellerNoRealRoots);
        }
        disc = 0.0;
    }
    let half = t / xb.abs() * disc.sqrt();
    let lo = (center - half) / (1.0 - g);
    let hi = (center + half) / (1.0 - g);
    Ok(ConfidenceInterval {
        point: r - 1.0,
        lower: lo - 1.0,
        upper: hi - 1.0,
        alpha: input.alpha,
        se: input.delta_variance()?.sqrt(),
        method: Method::Fieller,
        warnings: Vec::new(),
    })
}

/// One-term Edgeworth approximation to the cdf of a standardized mean with
/// skewness `skew` over `n` observations.
pub fn edgeworth_cdf(t: f64, skew: f64, n: u64) -> f64 {
    let k = skew / (6.0 * (n as f64).sqrt());
    normal_cdf(t) - k * (t * t - 1.0) * normal_pdf(t)
}

const EDGEWORTH_BRACKET: f64 = 10.0;
const EDGEWORTH_TOL: f64 = 1e-10;

/// Interval `[lo, hi]` around zero on which the Edgeworth cdf is increasing,
/// clipped to the search bracket.
fn monotone_region(k: f64) -> (f64, f64) {
    // density is φ(t)·(1 + k(t³ - 3t)); |t³ - 3t| ≤ 970 on the bracket
    if k.abs() * 970.0 < 1.0 {
        return (-EDGEWORTH_BRACKET, EDGEWORTH_BRACKET);
    }
    let positive = |t: f64| 1.0 + k * (t * t * t - 3.0 * t) > 0.0;
    let step = 1e-3;
    let mut hi = 0.0;
    while hi < EDGEWORTH_BRACKET && positive(hi + step) {
        hi += step;
    }
    let mut lo = 0.0;
    while lo > -EDGEWORTH_BRACKET && positive(lo - step) {
        lo -= step;
    }
    (lo, hi)
}

/// Quantile of the Edgeworth cdf by bisection inside its monotone region.
/// Returns `None` when the target is not attained there.
pub fn edgeworth_quantile(prob: f64, skew: f64, n: u64) -> Option<f64> {
    let k = skew / (6.0 * (n as f64).sqrt());
    let (mut lo, mut hi) = monotone_region(k);
    let f = |t: f64| edgeworth_cdf(t, skew, n) - prob;
    if f(lo) > 0.0 || f(hi) < 0.0 {
        return None;
    }
    while hi - lo > EDGEWORTH_TOL {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Delta interval with the normal quantiles replaced by Edgeworth-corrected
/// quantiles of the linearized statistic.
pub fn edgeworth_ci(input: &RatioInput, bias_correct: bool) -> Result<ConfidenceInterval> {
    let shape = input.shape;
    if shape.n < 3 {
        return Err(Error::InsufficientData {
            what: "pairs",
            needed: 3,
            got: shape.n as usize,
        });
    }
    let mut ci = delta_ci(input, bias_correct)?;
    ci.method = if bias_correct {
        Method::EdgeworthBc
    } else {
        Method::Edgeworth
    };
    let a = input.alpha / 2.0;
    let quantiles = if shape.skew_w == 0.0 {
        None
    } else {
        edgeworth_quantile(a, shape.skew_w, shape.n)
            .zip(edgeworth_quantile(1.0 - a, shape.skew_w, shape.n))
            .filter(|&(lo, hi)| lo <= 0.0 && 0.0 <= hi)
    };
    match quantiles {
        Some((nu_lo, nu_hi)) => {
            // the corrected quantiles take the place of ±z
            ci.lower = ci.point + nu_lo * ci.se;
            ci.upper = ci.point + nu_hi * ci.se;
        }
        None if shape.skew_w == 0.0 => {}
        None => ci.warnings.push(format!(
            "Edgeworth quantiles unavailable for skewness {:.4}; using normal quantiles",
            shape.skew_w
        )),
    }
    Ok(ci)
}

/// Interval by any of the five ratio methods.
pub fn ratio_ci(input: &RatioInput, method: Method) -> Result<ConfidenceInterval> {
    match method {
        Method::Fieller => fieller_ci(input),
        Method::Delta => delta_ci(input, false),
        Method::DeltaBc => delta_ci(input, true),
        Method::Edgeworth => edgeworth_ci(input, false),
        Method::EdgeworthBc => edgeworth_ci(input, true),
        _ => Err(Error::Unsupported("not a percent-change method")),
    }
}

pub const RATIO_METHODS: [Method; 5] = [
    Method::Fieller,
    Method::Delta,
    Method::DeltaBc,
    Method::Edgeworth,
    Method::EdgeworthBc,
];
