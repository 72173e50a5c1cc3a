//! Mutually communicating boundary patches for non-convex domains.
//!
//! Patches are angular caps of the outer boundary seen from the domain
//! centre: a cap with axis `u` and half-angle `rho` contains the outermost
//! boundary points `z` with `angle(z - c, u) <= rho`. On a sphere these are
//! geodesic balls of radius `R * rho`.

use rand::Rng;

use super::{random_direction, unit_vector, BoundaryPoint, Domain, Vector};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cap<const N: usize> {
    /// Boundary point on the cap axis.
    pub center: BoundaryPoint<N>,
    /// Unit direction from the domain centre.
    pub axis: Vector<N>,
    pub half_angle: f64,
}

impl<const N: usize> Cap<N> {
    pub fn contains(&self, domain: &Domain<N>, bp: &BoundaryPoint<N>) -> bool {
        let y = bp.x - domain.center();
        let r = y.norm();
        if r == 0.0 {
            return false;
        }
        let cos = (y.dot(&self.axis) / r).clamp(-1.0, 1.0);
        cos.acos() <= self.half_angle * (1.0 + 1e-12) && domain.is_outermost(bp)
    }

    /// Deterministic sample of boundary points covering the cap, rim included.
    pub fn sample_points(&self, domain: &Domain<N>, count: usize) -> Result<Vec<BoundaryPoint<N>>> {
        let w = perpendicular(&self.axis);
        let mut rng = stream(0x0ca9, Purpose::Geometry, 1);
        let count = count.max(2);
        (0..count)
            .map(|k| {
                let dir = if N == 2 {
                    let a = -self.half_angle + 2.0 * self.half_angle * k as f64 / (count - 1) as f64;
                    self.axis * a.cos() + w * a.sin()
                } else {
                    let a = self.half_angle * (k as f64 / (count - 1) as f64).sqrt();
                    let side = if k == 0 { w } else { complement_direction(&self.axis, &mut rng) };
                    self.axis * a.cos() + side * a.sin()
                };
                domain.outermost(&dir)
            })
            .collect()
    }
}

/// Outcome of the patch search.
#[derive(Debug, Clone, PartialEq)]
pub enum Patches<const N: usize> {
    /// Convex domain: every pair of distinct boundary points communicates.
    WholeBoundary,
    Caps {
        f: Cap<N>,
        r: Cap<N>,
        /// Smallest sampled distance between the two patches.
        d0: f64,
        pairs_checked: usize,
    },
}

impl<const N: usize> Patches<N> {
    /// Membership in the coupling patch `F`.
    pub fn in_f(&self, domain: &Domain<N>, bp: &BoundaryPoint<N>) -> bool {
        match self {
            Patches::WholeBoundary => true,
            Patches::Caps { f, .. } => f.contains(domain, bp),
        }
    }

    pub fn is_whole_boundary(&self) -> bool {
        matches!(self, Patches::WholeBoundary)
    }
}

/// Search configuration. Candidate half-angles for `F` are tried from the
/// largest down; the partner cap `R` has half-angle `partner_ratio * rho_F`
/// and its axis is rotated from the `F` axis by `rho_F + 2 rho_R`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSearch {
    pub half_angles: Vec<f64>,
    pub partner_ratio: f64,
    /// Candidate `F` axes tried per half-angle.
    pub directions: usize,
    /// Boundary samples per patch; pairs checked are its square.
    pub samples_per_patch: usize,
    /// Maximum number of communication checks over the whole search.
    pub pair_budget: usize,
}

impl Default for PatchSearch {
    fn default() -> Self {
        let mut half_angles = Vec::new();
        let mut a = 1.2;
        while a > 0.02 {
            half_angles.push(a);
            a *= 0.99;
        }
        Self {
            half_angles,
            partner_ratio: 1.0 / 32.0,
            directions: 8,
            samples_per_patch: 64,
            pair_budget: 4096 * 2000,
        }
    }
}

impl PatchSearch {
    /// A single candidate with equal cap sizes, first axis along `e_1`.
    pub fn fixed(half_angle: f64) -> Self {
        Self { half_angles: vec![half_angle], partner_ratio: 1.0, directions: 1, ..Self::default() }
    }
}

impl<const N: usize> Domain<N> {
    pub fn find_patches(&self, search: &PatchSearch) -> Result<Patches<N>> {
        if self.is_convex() {
            return Ok(Patches::WholeBoundary);
        }
        let mut spent = 0usize;
        let mut rng = stream(0xface, Purpose::Geometry, 2);
        let axes: Vec<Vector<N>> = (0..search.directions.max(1))
            .map(|k| {
                if k == 0 {
                    unit_vector::<N>(0)
                } else if N == 2 {
                    let a = 2.0 * std::f64::consts::PI * k as f64 / search.directions as f64;
                    let mut u = Vector::<N>::zeros();
                    u[0] = a.cos();
                    u[1] = a.sin();
                    u
                } else {
                    random_direction::<N, _>(&mut rng)
                }
            })
            .collect();
        for &rho_f in &search.half_angles {
            let rho_r = search.partner_ratio * rho_f;
            let beta = rho_f + 2.0 * rho_r;
            for axis in &axes {
                let w = perpendicular(axis);
                let r_axis = *axis * beta.cos() + w * beta.sin();
                let f = Cap { center: self.outermost(axis)?, axis: *axis, half_angle: rho_f };
                let r = Cap { center: self.outermost(&r_axis)?, axis: r_axis, half_angle: rho_r };
                let fs = f.sample_points(self, search.samples_per_patch)?;
                let rs = r.sample_points(self, search.samples_per_patch)?;
                let mut d0 = f64::INFINITY;
                let mut ok = true;
                'outer: for a in &fs {
                    for b in &rs {
                        spent += 1;
                        if spent > search.pair_budget {
                            return Err(Error::PatchSearchFailed { budget: search.pair_budget });
                        }
                        if !self.communicates(a, b) {
                            ok = false;
                            break 'outer;
                        }
                        d0 = d0.min((a.x - b.x).norm());
                    }
                }
                if ok && d0 > 0.0 {
                    return Ok(Patches::Caps { f, r, d0, pairs_checked: fs.len() * rs.len() });
                }
            }
        }
        Err(Error::PatchSearchFailed { budget: search.pair_budget })
    }
}

/// Fixed unit vector orthogonal to `u`: the counter-clockwise rotation in two
/// dimensions, Gram–Schmidt against the least aligned canonical axis otherwise.
fn perpendicular<const N: usize>(u: &Vector<N>) -> Vector<N> {
    if N == 2 {
        let mut w = Vector::<N>::zeros();
        w[0] = -u[1];
        w[1] = u[0];
        return w;
    }
    let k = (0..N)
        .min_by(|&i, &j| u[i].abs().total_cmp(&u[j].abs()))
        .expect("dimension >= 2");
    let e = unit_vector::<N>(k);
    (e - u * u.dot(&e)).normalize()
}

fn complement_direction<const N: usize, R: Rng + ?Sized>(u: &Vector<N>, rng: &mut R) -> Vector<N> {
    loop {
        let g = random_direction::<N, _>(rng);
        let p = g - u * u.dot(&g);
        let n = p.norm();
        if n > 1e-6 {
            return p / n;
        }
    }
}
