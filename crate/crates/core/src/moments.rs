//! Mergeable power-sum accumulators.
//!
//! Every accumulator stores power sums of `value - shift`, where `shift` is
//! the first value it ever saw. Shifting bounds the cancellation in the
//! raw-to-central conversion when the data sit far from zero. Merging two
//! accumulators with different shifts translates the right-hand sums onto the
//! left-hand shift with the binomial expansion, so merge stays a cheap
//! componentwise operation.
//!
//! All derived variances and covariances use the unbiased `n - 1` divisor.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};

fn need(what: &'static str, needed: usize, got: u64) -> Result<()> {
    if got < needed as u64 {
        Err(Error::InsufficientData {
            what,
            needed,
            got: got as usize,
        })
    } else {
        Ok(())
    }
}

/// Power sums of a univariate sample up to third order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UniMoments {
    n: u64,
    shift: f64,
    s1: f64,
    s2: f64,
    s3: f64,
}

/// Unbiased summary of a univariate sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniStats {
    pub n: u64,
    pub mean: f64,
    pub variance: f64,
    /// Central third moment with divisor `n`.
    pub m3: f64,
}

impl UniMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_values<I: IntoIterator<Item = f64>>(values: I) -> Result<Self> {
        let mut acc = Self::new();
        for x in values {
            acc.push(x)?;
        }
        Ok(acc)
    }

    pub fn push(&mut self, x: f64) -> Result<()> {
        check_finite(x)?;
        if self.n == 0 {
            self.shift = x;
        }
        let d = x - self.shift;
        let d2 = d * d;
        self.n += 1;
        self.s1 += d;
        self.s2 += d2;
        self.s3 += d2 * d;
        Ok(())
    }

    pub fn merge(&self, other: &Self) -> Self {
        if other.n == 0 {
            return *self;
        }
        if self.n == 0 {
            return *other;
        }
        let t = other.translated(self.shift);
        Self {
            n: self.n + other.n,
            shift: self.shift,
            s1: self.s1 + t.s1,
            s2: self.s2 + t.s2,
            s3: self.s3 + t.s3,
        }
    }

    fn translated(&self, shift: f64) -> Self {
        let d = self.shift - shift;
        let n = self.n as f64;
        Self {
            n: self.n,
            shift,
            s1: self.s1 + n * d,
            s2: self.s2 + 2.0 * d * self.s1 + n * d * d,
            s3: self.s3 + 3.0 * d * self.s2 + 3.0 * d * d * self.s1 + n * d * d * d,
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    /// Raw sums `(Σx, Σx², Σx³)`.
    pub fn raw_sums(&self) -> (f64, f64, f64) {
        let t = self.translated(0.0);
        (t.s1, t.s2, t.s3)
    }

    pub fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.shift + self.s1 / self.n as f64)
    }

    pub fn stats(&self) -> Result<UniStats> {
        need("observations", 2, self.n)?;
        let n = self.n as f64;
        let m = self.s1 / n;
        let css = (self.s2 - n * m * m).max(0.0);
        let m3 = (self.s3 - 3.0 * m * self.s2 + 2.0 * n * m * m * m) / n;
        Ok(UniStats {
            n: self.n,
            mean: self.shift + m,
            variance: css / (n - 1.0),
            m3,
        })
    }
}

/// Power sums of a paired sample `(x, y)` up to third order, including the
/// mixed terms `x²y` and `xy²`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PairedMoments {
    n: u64,
    shift: (f64, f64),
    x: f64,
    y: f64,
    xx: f64,
    yy: f64,
    xy: f64,
    xxx: f64,
    yyy: f64,
    xxy: f64,
    xyy: f64,
}

/// Raw (unshifted) power sums of a paired sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedSums {
    pub n: u64,
    pub x: f64,
    pub y: f64,
    pub xx: f64,
    pub yy: f64,
    pub xy: f64,
    pub xxx: f64,
    pub yyy: f64,
    pub xxy: f64,
    pub xyy: f64,
}

/// Unbiased means, variances and covariance of a paired sample, plus the
/// central third moments (divisor `n`) needed for skewness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedStats {
    pub n: u64,
    pub mean_x: f64,
    pub mean_y: f64,
    pub var_x: f64,
    pub var_y: f64,
    pub cov_xy: f64,
    pub m30: f64,
    pub m21: f64,
    pub m12: f64,
    pub m03: f64,
}

impl PairedMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I: IntoIterator<Item = (f64, f64)>>(pairs: I) -> Result<Self> {
        let mut acc = Self::new();
        for (x, y) in pairs {
            acc.push(x, y)?;
        }
        Ok(acc)
    }

    pub fn push(&mut self, x: f64, y: f64) -> Result<()> {
        check_finite(x)?;
        check_finite(y)?;
        if self.n == 0 {
            self.shift = (x, y);
        }
        let a = x - self.shift.0;
        let b = y - self.shift.1;
        self.n += 1;
        self.x += a;
        self.y += b;
        self.xx += a * a;
        self.yy += b * b;
        self.xy += a * b;
        self.xxx += a * a * a;
        self.yyy += b * b * b;
        self.xxy += a * a * b;
        self.xyy += a * b * b;
        Ok(())
    }

    pub fn merge(&self, other: &Self) -> Self {
        if other.n == 0 {
            return *self;
        }
        if self.n == 0 {
            return *other;
        }
        let t = other.translated(self.shift);
        Self {
            n: self.n + other.n,
            shift: self.shift,
            x: self.x + t.x,
            y: self.y + t.y,
            xx: self.xx + t.xx,
            yy: self.yy + t.yy,
            xy: self.xy + t.xy,
            xxx: self.xxx + t.xxx,
            yyy: self.yyy + t.yyy,
            xxy: self.xxy + t.xxy,
            xyy: self.xyy + t.xyy,
        }
    }

    fn translated(&self, shift: (f64, f64)) -> Self {
        let (p, q) = (self.shift.0 - shift.0, self.shift.1 - shift.1);
        let n = self.n as f64;
        Self {
            n: self.n,
            shift,
            x: self.x + n * p,
            y: self.y + n * q,
            xx: self.xx + 2.0 * p * self.x + n * p * p,
            yy: self.yy + 2.0 * q * self.y + n * q * q,
            xy: self.xy + q * self.x + p * self.y + n * p * q,
            xxx: self.xxx + 3.0 * p * self.xx + 3.0 * p * p * self.x + n * p * p * p,
            yyy: self.yyy + 3.0 * q * self.yy + 3.0 * q * q * self.y + n * q * q * q,
            xxy: self.xxy
                + q * self.xx
                + 2.0 * p * self.xy
                + 2.0 * p * q * self.x
                + p * p * self.y
                + n * p * p * q,
            xyy: self.xyy
                + p * self.yy
                + 2.0 * q * self.xy
                + 2.0 * p * q * self.y
                + q * q * self.x
                + n * p * q * q,
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn raw_sums(&self) -> PairedSums {
        let t = self.translated((0.0, 0.0));
        PairedSums {
            n: t.n,
            x: t.x,
            y: t.y,
            xx: t.xx,
            yy: t.yy,
            xy: t.xy,
            xxx: t.xxx,
            yyy: t.yyy,
            xxy: t.xxy,
            xyy: t.xyy,
        }
    }

    pub fn stats(&self) -> Result<PairedStats> {
        need("pairs", 2, self.n)?;
        let n = self.n as f64;
        let (mx, my) = (self.x / n, self.y / n);
        let cxx = (self.xx - n * mx * mx).max(0.0);
        let cyy = (self.yy - n * my * my).max(0.0);
        let cxy = self.xy - n * mx * my;
        let m30 = (self.xxx - 3.0 * mx * self.xx + 2.0 * n * mx.powi(3)) / n;
        let m03 = (self.yyy - 3.0 * my * self.yy + 2.0 * n * my.powi(3)) / n;
        let m21 = (self.xxy - my * self.xx - 2.0 * mx * self.xy + 2.0 * n * mx * mx * my) / n;
        let m12 = (self.xyy - mx * self.yy - 2.0 * my * self.xy + 2.0 * n * mx * my * my) / n;
        Ok(PairedStats {
            n: self.n,
            mean_x: self.shift.0 + mx,
            mean_y: self.shift.1 + my,
            var_x: cxx / (n - 1.0),
            var_y: cyy / (n - 1.0),
            cov_xy: cxy / (n - 1.0),
            m30,
            m21,
            m12,
            m03,
        })
    }
}

/// First and second order sums of a 4-vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QuadMoments {
    n: u64,
    shift: [f64; 4],
    sum: [f64; 4],
    scatter: [[f64; 4]; 4],
}

impl QuadMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, v: [f64; 4]) -> Result<()> {
        for &x in &v {
            check_finite(x)?;
        }
        if self.n == 0 {
            self.shift = v;
        }
        let d: [f64; 4] = std::array::from_fn(|j| v[j] - self.shift[j]);
        self.n += 1;
        for j in 0..4 {
            self.sum[j] += d[j];
            for k in 0..4 {
                self.scatter[j][k] += d[j] * d[k];
            }
        }
        Ok(())
    }

    pub fn merge(&self, other: &Self) -> Self {
        if other.n == 0 {
            return *self;
        }
        if self.n == 0 {
            return *other;
        }
        let n = other.n as f64;
        let p: [f64; 4] = std::array::from_fn(|j| other.shift[j] - self.shift[j]);
        let mut out = *self;
        out.n += other.n;
        for j in 0..4 {
            out.sum[j] += other.sum[j] + n * p[j];
            for k in 0..4 {
                out.scatter[j][k] += other.scatter[j][k]
                    + p[k] * other.sum[j]
                    + p[j] * other.sum[k]
                    + n * p[j] * p[k];
            }
        }
        out
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> Option<Vector4<f64>> {
        let n = self.n as f64;
        (self.n > 0).then(|| Vector4::from_fn(|j, _| self.shift[j] + self.sum[j] / n))
    }

    /// Unbiased sample covariance matrix of the vector.
    pub fn covariance(&self) -> Result<Matrix4<f64>> {
        need("observations", 2, self.n)?;
        let n = self.n as f64;
        let m: [f64; 4] = std::array::from_fn(|j| self.sum[j] / n);
        Ok(Matrix4::from_fn(|j, k| {
            // symmetrize so rounding cannot break exact symmetry
            let a = self.scatter[j][k] - n * m[j] * m[k];
            let b = self.scatter[k][j] - n * m[k] * m[j];
            0.5 * (a + b) / (n - 1.0)
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_sums() {
        let mut acc = PairedMoments::new();
        acc.push(1.0, 2.0).unwrap();
        let s = acc.raw_sums();
        assert_eq!(s.n, 1);
        assert_eq!(
            [s.x, s.y, s.xx, s.yy, s.xy, s.xxx, s.yyy, s.xxy, s.xyy],
            [1.0, 2.0, 1.0, 4.0, 2.0, 1.0, 8.0, 2.0, 4.0]
        );
        acc.push(3.0, 0.0).unwrap();
        let s = acc.raw_sums();
        assert_eq!((s.n, s.x, s.y), (2, 4.0, 2.0));
    }

    #[test]
    fn rejects_non_finite() {
        let mut acc = PairedMoments::new();
        assert_eq!(acc.push(f64::NAN, 1.0).unwrap_err().to_string(), "non-finite input value NaN");
        assert!(acc.push(1.0, f64::INFINITY).is_err());
        assert_eq!(acc.count(), 0);
        assert!(UniMoments::new().push(f64::NEG_INFINITY).is_err());
        assert!(QuadMoments::new().push([0.0, 1.0, f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let acc = PairedMoments::from_pairs([(1.0, 2.0), (3.0, 5.0)]).unwrap();
        assert_eq!(acc.merge(&PairedMoments::new()), acc);
        assert_eq!(PairedMoments::new().merge(&acc), acc);
    }

    #[test]
    fn two_point_hand_computation() {
        let st = PairedMoments::from_pairs([(0.0, 0.0), (2.0, 2.0)])
            .unwrap()
            .stats()
            .unwrap();
        assert_eq!((st.mean_x, st.mean_y), (1.0, 1.0));
        assert_eq!((st.var_x, st.var_y, st.cov_xy), (2.0, 2.0, 2.0));
    }

    #[test]
    fn constant_sample_has_zero_spread() {
        let st = PairedMoments::from_pairs(std::iter::repeat_n((5.0, 3.0), 10))
            .unwrap()
            .stats()
            .unwrap();
        assert_eq!((st.var_x, st.var_y, st.cov_xy), (0.0, 0.0, 0.0));
        assert_eq!((st.m30, st.m03), (0.0, 0.0));
    }

    #[test]
    fn stats_need_two_points() {
        let acc = PairedMoments::from_pairs([(1.0, 1.0)]).unwrap();
        assert!(matches!(acc.stats(), Err(Error::InsufficientData { got: 1, .. })));
        assert!(UniMoments::new().stats().is_err());
        assert!(QuadMoments::new().covariance().is_err());
    }

    #[test]
    fn large_offset_does_not_cancel() {
        // naive raw sums lose every digit of the variance here
        let xs = [1e9 + 1.0, 1e9 + 2.0, 1e9 + 3.0];
        let st = UniMoments::from_values(xs).unwrap().stats().unwrap();
        assert_eq!(st.variance, 1.0);
        assert_eq!(st.mean, 1e9 + 2.0);
    }

    #[test]
    fn quad_covariance_matches_pairwise() {
        let rows = [
            [1.0, 2.0, 0.0, 4.0],
            [0.0, 1.0, 1.0, 3.0],
            [1.0, 5.0, 1.0, 2.0],
            [1.0, 3.0, 0.0, 0.0],
        ];
        let mut q = QuadMoments::new();
        for r in rows {
            q.push(r).unwrap();
        }
        let cov = q.covariance().unwrap();
        for j in 0..4 {
            for k in 0..4 {
                let p = PairedMoments::from_pairs(rows.iter().map(|r| (r[j], r[k])))
                    .unwrap()
                    .stats()
                    .unwrap();
                assert!((cov[(j, k)] - p.cov_xy).abs() < 1e-12);
            }
        }
        assert_eq!(cov, cov.transpose());
    }
}
