//! Empirical survival curves of coupling times and tail-slope fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_SURVIVAL_SAMPLES: usize = 100;
pub const MIN_FIT_POINTS: usize = 8;
/// Normal quantile for 95% intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

/// A coupling time, or the horizon at which the pair was censored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauSample {
    pub time: f64,
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub n_pairs: usize,
    pub censor_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub t_lo: f64,
    pub t_hi: f64,
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// `per_decade` log-spaced points per decade from `t_min` to `t_max` inclusive.
pub fn log_grid(t_min: f64, t_max: f64, per_decade: usize) -> Vec<f64> {
    let (a, b) = (t_min.log10(), t_max.log10());
    let steps = ((b - a) * per_decade as f64).ceil().max(1.0) as usize;
    (0..=steps).map(|i| 10f64.powf(a + (b - a) * i as f64 / steps as f64)).collect()
}

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson(k: usize, n: usize, z: f64) -> (f64, f64) {
    let nf = n as f64;
    let p = k as f64 / nf;
    if k == 0 || k == n {
        let edge = 1.0 / (1.0 + z * z / nf);
        return if k == 0 { (0.0, 1.0 - edge) } else { (edge, 1.0) };
    }
    let z2 = z * z;
    let den = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / den;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / den;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// `P(tau > t)` on `grid`. Censored samples count as surviving up to their
/// censoring time; grid points beyond the smallest censoring time are dropped.
pub fn survival_curve(samples: &[TauSample], grid: &[f64]) -> Result<SurvivalCurve> {
    let n = samples.len();
    if n < MIN_SURVIVAL_SAMPLES {
        return Err(Error::TooFewSamples { got: n, need: MIN_SURVIVAL_SAMPLES });
    }
    let horizon = samples.iter().filter(|s| s.censored).map(|s| s.time).fold(f64::INFINITY, f64::min);
    let censored = samples.iter().filter(|s| s.censored).count();
    let mut events: Vec<f64> = samples.iter().filter(|s| !s.censored).map(|s| s.time).collect();
    events.sort_by(f64::total_cmp);
    let mut curve = SurvivalCurve {
        times: Vec::new(),
        survival: Vec::new(),
        ci_lo: Vec::new(),
        ci_hi: Vec::new(),
        n_pairs: n,
        censor_fraction: censored as f64 / n as f64,
    };
    for &t in grid.iter().filter(|t| **t <= horizon) {
        let done = events.partition_point(|e| *e <= t);
        let k = n - done;
        let (lo, hi) = wilson(k, n, Z95);
        curve.times.push(t);
        curve.survival.push(k as f64 / n as f64);
        curve.ci_lo.push(lo);
        curve.ci_hi.push(hi);
    }
    Ok(curve)
}

/// Weighted least squares of `ln P` against `ln t` on `[t_lo, t_hi]`, with
/// delta-method weights `n P / (1 - P)`.
pub fn fit_tail_slope(curve: &SurvivalCurve, t_lo: f64, t_hi: f64) -> Result<RateFit> {
    let n = curve.n_pairs.max(1) as f64;
    let mut pts = Vec::new();
    for (t, p) in curve.times.iter().zip(&curve.survival) {
        if *t < t_lo || *t > t_hi {
            continue;
        }
        if *p <= 0.0 {
            return Err(Error::DegenerateWindow(format!("zero survival at t = {t}")));
        }
        let w = n * p / (1.0 - p).max(1.0 / n);
        pts.push((t.ln(), p.ln(), w));
    }
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::DegenerateWindow(format!(
            "{} grid points in [{t_lo}, {t_hi}], need {MIN_FIT_POINTS}",
            pts.len()
        )));
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let xm = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let ym = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - xm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - xm) * (p.1 - ym)).sum();
    let syy: f64 = pts.iter().map(|p| p.2 * (p.1 - ym).powi(2)).sum();
    if syy <= f64::EPSILON * sw * ym.abs().max(1.0) {
        return Err(Error::DegenerateWindow("survival is flat on the window".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss: f64 = pts.iter().map(|p| p.2 * (p.1 - intercept - slope * p.0).powi(2)).sum();
    let dof = (pts.len() - 2) as f64;
    Ok(RateFit {
        t_lo,
        t_hi,
        slope,
        slope_stderr: (rss / dof / sxx).sqrt(),
        intercept,
        r_squared: 1.0 - rss / syy,
        n_points: pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use rand::Rng;

    fn curve_from(f: impl Fn(f64) -> f64, grid: &[f64]) -> SurvivalCurve {
        let survival: Vec<f64> = grid.iter().map(|t| f(*t)).collect();
        SurvivalCurve {
            times: grid.to_vec(),
            ci_lo: survival.clone(),
            ci_hi: survival.clone(),
            survival,
            n_pairs: 1_000_000,
            censor_fraction: 0.0,
        }
    }

    #[test]
    fn step_curve() {
        let s = vec![TauSample { time: 1.0, censored: false }; 100];
        let c = survival_curve(&s, &[0.5, 2.0]).unwrap();
        assert_eq!(c.survival, vec![1.0, 0.0]);
    }

    #[test]
    fn all_censored() {
        let s = vec![TauSample { time: 50.0, censored: true }; 200];
        let c = survival_curve(&s, &log_grid(1.0, 100.0, 40)).unwrap();
        assert!(c.survival.iter().all(|p| *p == 1.0));
        assert_eq!(c.censor_fraction, 1.0);
        assert!(*c.times.last().unwrap() <= 50.0);
    }

    #[test]
    fn too_few() {
        let s = vec![TauSample { time: 1.0, censored: false }; 99];
        assert!(matches!(survival_curve(&s, &[1.0]), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn pareto_slope() {
        let mut rng = stream(9, Purpose::Validation, 0);
        let s: Vec<TauSample> = (0..100_000)
            .map(|_| TauSample { time: rng.random::<f64>().powf(-0.5), censored: false })
            .collect();
        let c = survival_curve(&s, &log_grid(1.0, 1000.0, 40)).unwrap();
        let f = fit_tail_slope(&c, 1.0, 30.0).unwrap();
        assert!((f.slope + 2.0).abs() < 0.15, "{f:?}");
    }

    #[test]
    fn exact_power_law() {
        let grid = log_grid(1.0, 1000.0, 40);
        let f = fit_tail_slope(&curve_from(|t| t.powi(-2), &grid), 10.0, 100.0).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-6);
        assert!((f.r_squared - 1.0).abs() < 1e-9);
    }

    #[test]
    fn log_corrected_shape() {
        let grid = log_grid(1.0, 1000.0, 40);
        // Local log-slope is -2 + 2 ln t / (1 + ln^2 t), which decreases
        // monotonically across the window; the fit must land between its ends.
        let c = curve_from(|t| (1.0 + t.ln().powi(2)) / (t * t) / 10.0, &grid);
        let f = fit_tail_slope(&c, 10.0, 100.0).unwrap();
        let local = |t: f64| -2.0 + 2.0 * t.ln() / (1.0 + t.ln().powi(2));
        assert!(f.slope < local(10.0) && f.slope > local(100.0), "{}", f.slope);
    }

    #[test]
    fn flat_curve_is_degenerate() {
        let grid = log_grid(1.0, 1000.0, 40);
        let c = curve_from(|_| 0.3, &grid);
        assert!(matches!(fit_tail_slope(&c, 10.0, 100.0), Err(Error::DegenerateWindow(_))));
        assert!(matches!(fit_tail_slope(&c, 10.0, 10.5), Err(Error::DegenerateWindow(_))));
    }

    #[test]
    fn wilson_contains_estimate() {
        let (lo, hi) = wilson(30, 100, Z95);
        assert!(lo < 0.3 && hi > 0.3);
        assert_eq!(wilson(0, 100, Z95).0, 0.0);
    }
}
