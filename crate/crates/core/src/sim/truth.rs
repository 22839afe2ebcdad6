//! Population values the simulated intervals are scored against.

use crate::dist::{normal_cdf, normal_pdf, normal_quantile};
use crate::sim::generate::{QuantileModel, EFFECT_MEAN, MIN_PRESENCE};

/// `P(e^A + e^B ≤ q)` for independent standard normal `A`, `B`, by Simpson's
/// rule over `s = A`.
pub fn lognormal_sum_cdf(q: f64) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    let (a, b) = (-12.0_f64, q.ln());
    if b <= a {
        return 0.0;
    }
    let f = |s: f64| {
        let rest = q - s.exp();
        if rest <= 0.0 {
            0.0
        } else {
            normal_pdf(s) * normal_cdf(rest.ln())
        }
    };
    let steps = 20_000;
    let h = (b - a) / steps as f64;
    let mut acc = f(a) + f(b);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Population `p`-quantile of one observation `X_i + X_u`.
pub fn quantile_truth(model: QuantileModel, p: f64) -> f64 {
    match model {
        QuantileModel::Normal => std::f64::consts::SQRT_2 * normal_quantile(p),
        QuantileModel::LogNormal => {
            let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
            while lognormal_sum_cdf(hi) < p {
                lo = hi;
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if lognormal_sum_cdf(mid) < p {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-12 * hi {
                    break;
                }
            }
            0.5 * (lo + hi)
        }
    }
}

/// Average effect over the users observed in their treated period:
/// `E[Δ]·E[l·q(l)] / E[q(l)]` with `l` uniform and `q(l) = max(m, l)`.
pub fn crossover_truth() -> f64 {
    let m = MIN_PRESENCE;
    let e_lq = m * m * m / 2.0 + (1.0 - m * m * m) / 3.0;
    let e_q = m * m + (1.0 - m * m) / 2.0;
    EFFECT_MEAN * e_lq / e_q
}
