//! Histogram estimates of the total variation distance between two samples
//! of `(position, velocity)`.

use serde::{Deserialize, Serialize};

use crate::geometry::Vector;

/// Product binning: a regular grid over the position box, speed bins on
/// `[0, speed_max)` plus one overflow bin, and bins of the polar angle of the
/// velocity in its first two coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub pos_per_axis: usize,
    pub speed_bins: usize,
    pub speed_max: f64,
    pub angle_bins: usize,
}

impl Binning {
    pub fn coarser(&self) -> Self {
        Self {
            pos_per_axis: (self.pos_per_axis / 2).max(1),
            speed_bins: (self.speed_bins / 2).max(1),
            angle_bins: (self.angle_bins / 2).max(1),
            ..*self
        }
    }

    pub fn finer(&self) -> Self {
        Self {
            pos_per_axis: self.pos_per_axis * 2,
            speed_bins: self.speed_bins * 2,
            angle_bins: self.angle_bins * 2,
            ..*self
        }
    }

    fn index<const N: usize>(&self, lo: &Vector<N>, hi: &Vector<N>, x: &Vector<N>, v: &Vector<N>) -> usize {
        let mut idx = 0usize;
        for k in 0..N {
            let u = (x[k] - lo[k]) / (hi[k] - lo[k]);
            let b = ((u * self.pos_per_axis as f64) as usize).min(self.pos_per_axis - 1);
            idx = idx * self.pos_per_axis + b;
        }
        let speed = v.norm();
        let sb = ((speed / self.speed_max * self.speed_bins as f64) as usize).min(self.speed_bins);
        idx = idx * (self.speed_bins + 1) + sb;
        let angle = v[1].atan2(v[0]) + std::f64::consts::PI;
        let ab = ((angle / std::f64::consts::TAU * self.angle_bins as f64) as usize).min(self.angle_bins - 1);
        idx * self.angle_bins + ab
    }

    fn cells<const N: usize>(&self) -> usize {
        self.pos_per_axis.pow(N as u32) * (self.speed_bins + 1) * self.angle_bins
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvEstimate {
    pub tv: f64,
    pub coarse: f64,
    pub fine: f64,
}

/// Half L1 distance between the normalised histograms of `a` and `b` over the
/// box `[lo, hi]`.
pub fn tv_histogram<const N: usize>(
    a: &[(Vector<N>, Vector<N>)],
    b: &[(Vector<N>, Vector<N>)],
    bounds: (Vector<N>, Vector<N>),
    binning: &Binning,
) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    let (lo, hi) = bounds;
    let mut ha = vec![0u64; binning.cells::<N>()];
    let mut hb = ha.clone();
    for (x, v) in a {
        ha[binning.index(&lo, &hi, x, v)] += 1;
    }
    for (x, v) in b {
        hb[binning.index(&lo, &hi, x, v)] += 1;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    0.5 * ha.iter().zip(&hb).map(|(p, q)| (*p as f64 / na - *q as f64 / nb).abs()).sum::<f64>()
}

/// TV at `binning` together with the values at a coarser and a finer binning.
pub fn tv_with_sensitivity<const N: usize>(
    a: &[(Vector<N>, Vector<N>)],
    b: &[(Vector<N>, Vector<N>)],
    bounds: (Vector<N>, Vector<N>),
    binning: &Binning,
) -> TvEstimate {
    TvEstimate {
        tv: tv_histogram(a, b, bounds, binning),
        coarse: tv_histogram(a, b, bounds, &binning.coarser()),
        fine: tv_histogram(a, b, bounds, &binning.finer()),
    }
}
