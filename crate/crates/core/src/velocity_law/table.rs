//! Inverse-CDF sampling table with monotone cubic (Fritsch–Carlson)
//! interpolation.

use crate::error::{Error, Result};
use crate::quadrature::{integrate, Tolerance};

pub const KNOTS: usize = 4096;

#[derive(Debug, Clone)]
pub struct InverseCdf {
    /// `x_i = F^{-1}(i / KNOTS)`.
    xs: Vec<f64>,
    slopes: Vec<f64>,
}

impl InverseCdf {
    /// Builds the table for a density supported on `[lo, hi]` (unnormalised).
    pub fn new<F: Fn(f64) -> f64>(density: F, lo: f64, hi: f64) -> Result<Self> {
        // Fine cumulative grid, then inversion by bisection on the exact
        // piecewise integrals.
        const FINE: usize = 8192;
        let h = (hi - lo) / FINE as f64;
        let tol = Tolerance { abs: 1e-15, rel: 1e-12, max_intervals: 200 };
        let mut cum = Vec::with_capacity(FINE + 1);
        cum.push(0.0);
        for i in 0..FINE {
            let a = lo + h * i as f64;
            let piece = integrate(&density, a, a + h, tol)?;
            cum.push(cum[i] + piece.max(0.0));
        }
        let total = cum[FINE];
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidConfig("density has no mass".into()));
        }
        let mut xs = Vec::with_capacity(KNOTS + 1);
        xs.push(lo);
        let mut j = 0usize;
        for i in 1..KNOTS {
            let target = total * i as f64 / KNOTS as f64;
            while cum[j + 1] < target {
                j += 1;
            }
            let a = lo + h * j as f64;
            let need = target - cum[j];
            // Bisection inside the fine cell.
            let (mut l, mut r) = (a, a + h);
            for _ in 0..60 {
                let m = 0.5 * (l + r);
                if integrate(&density, a, m, tol)? < need {
                    l = m;
                } else {
                    r = m;
                }
            }
            xs.push(0.5 * (l + r));
        }
        xs.push(hi);
        let slopes = fritsch_carlson(&xs, 1.0 / KNOTS as f64);
        Ok(Self { xs, slopes })
    }

    /// Evaluates `F^{-1}(u)` for `u` in `[0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        let t = (u.clamp(0.0, 1.0) * KNOTS as f64).min(KNOTS as f64 - 1e-9);
        let i = t.floor() as usize;
        let s = t - i as f64;
        let h = 1.0 / KNOTS as f64;
        let (y0, y1) = (self.xs[i], self.xs[i + 1]);
        let (m0, m1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * m1
    }
}

/// Monotone Hermite slopes for uniformly spaced knots with spacing `h`.
fn fritsch_carlson(ys: &[f64], h: f64) -> Vec<f64> {
    let n = ys.len();
    let delta: Vec<f64> = ys.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    let mut m = vec![0.0; n];
    m[0] = delta[0];
    m[n - 1] = delta[n - 2];
    for i in 1..n - 1 {
        m[i] = if delta[i - 1] * delta[i] <= 0.0 { 0.0 } else { 0.5 * (delta[i - 1] + delta[i]) };
    }
    for i in 0..n - 1 {
        if delta[i] == 0.0 {
            m[i] = 0.0;
            m[i + 1] = 0.0;
            continue;
        }
        let a = m[i] / delta[i];
        let b = m[i + 1] / delta[i];
        let s = a * a + b * b;
        if s > 9.0 {
            let tau = 3.0 / s.sqrt();
            m[i] = tau * a * delta[i];
            m[i + 1] = tau * b * delta[i];
        }
    }
    m
}
