//! Goodness-of-fit tests: Kolmogorov–Smirnov and chi-square.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

pub const MIN_TEST_SAMPLES: usize = 1000;
/// Bins with a smaller expected count are merged with their neighbours.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Degrees of freedom for chi-square tests, effective size for KS.
    pub dof: f64,
}

/// Asymptotic Kolmogorov survival function `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_sf((s + 0.12 + 0.11 / s) * d)
}

/// One-sample KS test against a continuous CDF.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<TestResult> {
    if samples.len() < MIN_TEST_SAMPLES {
        return Err(Error::TooFewSamples { got: samples.len(), need: MIN_TEST_SAMPLES });
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = cdf(*x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(TestResult { statistic: d, p_value: ks_p(d, n), dof: n })
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    let need = MIN_TEST_SAMPLES;
    if a.len() < need || b.len() < need {
        return Err(Error::TooFewSamples { got: a.len().min(b.len()), need });
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let n_eff = na * nb / (na + nb);
    Ok(TestResult { statistic: d, p_value: ks_p(d, n_eff), dof: n_eff })
}

/// Merges consecutive bins until each expected count reaches [`MIN_EXPECTED`].
pub fn merge_sparse_bins(observed: &[f64], expected: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (oi, ei) in observed.iter().zip(expected) {
        o += oi;
        e += ei;
        if e >= MIN_EXPECTED {
            obs.push(o);
            exp.push(e);
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        if let (Some(lo), Some(le)) = (obs.last_mut(), exp.last_mut()) {
            *lo += o;
            *le += e;
        } else {
            obs.push(o);
            exp.push(e);
        }
    }
    (obs, exp)
}

/// Chi-square goodness of fit of observed counts to expected counts (same
/// total). `ddof` extra degrees of freedom are removed for fitted parameters.
pub fn chi2_test(observed: &[f64], expected: &[f64], ddof: usize) -> Result<TestResult> {
    let total: f64 = observed.iter().sum();
    if total < MIN_TEST_SAMPLES as f64 {
        return Err(Error::TooFewSamples { got: total as usize, need: MIN_TEST_SAMPLES });
    }
    let (obs, exp) = merge_sparse_bins(observed, expected);
    if obs.len() < 2 + ddof {
        return Err(Error::TooFewSamples { got: obs.len(), need: 2 + ddof });
    }
    let stat: f64 = obs.iter().zip(&exp).map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = (obs.len() - 1 - ddof) as f64;
    Ok(TestResult { statistic: stat, p_value: chi2_sf(stat, dof), dof })
}

/// Chi-square test of independence on a contingency table (rows x cols).
pub fn chi2_independence(table: &[Vec<f64>]) -> Result<TestResult> {
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols_n = table.first().map_or(0, |r| r.len());
    let cols: Vec<f64> = (0..cols_n).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let total: f64 = rows.iter().sum();
    if total < MIN_TEST_SAMPLES as f64 {
        return Err(Error::TooFewSamples { got: total as usize, need: MIN_TEST_SAMPLES });
    }
    let ri: Vec<usize> = (0..rows.len()).filter(|&i| rows[i] > 0.0).collect();
    let ci: Vec<usize> = (0..cols_n).filter(|&j| cols[j] > 0.0).collect();
    let mut stat = 0.0;
    for &i in &ri {
        for &j in &ci {
            let e = rows[i] * cols[j] / total;
            stat += (table[i][j] - e).powi(2) / e;
        }
    }
    let dof = ((ri.len().max(1) - 1) * (ci.len().max(1) - 1)).max(1) as f64;
    Ok(TestResult { statistic: stat, p_value: chi2_sf(stat, dof), dof })
}

pub fn chi2_sf(stat: f64, dof: f64) -> f64 {
    match ChiSquared::new(dof) {
        Ok(d) => d.sf(stat),
        Err(_) => f64::NAN,
    }
}
