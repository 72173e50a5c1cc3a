//! Radial wall laws, the diffuse-reflection sampler and the post-collision map.

mod table;

pub use table::InverseCdf;

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::{gamma, gamma_lr};

use crate::error::{Error, Result};
use crate::geometry::{random_direction, specular_reflect, unit_vector, BoundaryPoint, Vector};
use crate::quadrature::{integrate, integrate_to_infinity, Tolerance};

/// Speeds below this are redrawn.
pub const MIN_SPEED: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum LawKind {
    Maxwellian { theta: f64 },
    /// `M(v) ∝ |v|^{-alpha} 1{|v| <= 1}`; an initial-condition law only.
    TruncatedPower { alpha: f64 },
    /// Linear interpolation of `(speed, value)` pairs, zero outside the grid.
    TabulatedRadial { speeds: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone)]
enum Sampler {
    /// `scale * chi(dof)`.
    Chi { dof: usize, scale: f64 },
    /// `U^{1/p}` on `[0, 1]`.
    Power { p: f64 },
    Table(InverseCdf),
}

impl Sampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Chi { dof, scale } => {
                let s: f64 = (0..*dof).map(|_| rng.sample::<f64, _>(StandardNormal).powi(2)).sum();
                scale * s.sqrt()
            }
            Sampler::Power { p } => rng.random::<f64>().powf(1.0 / p),
            Sampler::Table(t) => t.quantile(rng.random()),
        }
    }
}

/// Angles `(theta_1, ..., theta_{n-1})` with `theta_1 in (-pi/2, pi/2)` and
/// `theta_j in [0, pi)` otherwise. Only the first `N - 1` slots are used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleVector<const N: usize> {
    pub angles: [f64; N],
}

impl<const N: usize> AngleVector<N> {
    pub fn zero() -> Self {
        Self { angles: [0.0; N] }
    }

    pub fn new(angles: &[f64]) -> Self {
        let mut a = [0.0; N];
        a[..N - 1].copy_from_slice(&angles[..N - 1]);
        Self { angles: a }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.angles[..N - 1]
    }
}

/// One reflection draw `(u, r, theta)` with law `U[0,1] ⊗ Upsilon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectionInnovation<const N: usize> {
    pub u: f64,
    pub r: f64,
    pub theta: AngleVector<N>,
}

#[derive(Debug, Clone)]
pub struct VelocityLaw<const N: usize> {
    kind: LawKind,
    /// Multiplies the raw law so that `∫ M dv = 1`.
    norm: f64,
    /// `∫_0^∞ r^n M(r) dr`, the inverse of `c_R`.
    flux_moment: f64,
    c0: f64,
    speed_sampler: Sampler,
    flux_sampler: Sampler,
}

/// Area of the unit sphere `S^{n-1}`.
pub fn sphere_area(n: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(n as f64 / 2.0) / gamma(n as f64 / 2.0)
}

/// `∫_{S^{n-1}} (u · e)_+ du`, the volume of the unit ball in dimension `n - 1`.
pub fn half_sphere_flux(n: usize) -> f64 {
    std::f64::consts::PI.powf((n as f64 - 1.0) / 2.0) / gamma((n as f64 + 1.0) / 2.0)
}

impl<const N: usize> VelocityLaw<N> {
    pub fn new(kind: LawKind) -> Result<Self> {
        let n = N as f64;
        let area = sphere_area(N);
        let tol = Tolerance::default();
        match &kind {
            LawKind::Maxwellian { theta } => {
                if !(*theta > 0.0 && theta.is_finite()) {
                    return Err(Error::InvalidConfig("temperature must be positive".into()));
                }
            }
            LawKind::TruncatedPower { alpha } => {
                if !(*alpha > 0.0 && *alpha < n) {
                    return Err(Error::InvalidConfig(format!("exponent must lie in (0, {N})")));
                }
            }
            LawKind::TabulatedRadial { speeds, values } => {
                if speeds.len() < 2 || speeds.len() != values.len() {
                    return Err(Error::InvalidConfig("tabulated law needs matching grids of length >= 2".into()));
                }
                if speeds[0] < 0.0 || speeds.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidConfig("tabulated speeds must be increasing and >= 0".into()));
                }
                if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return Err(Error::InvalidConfig("tabulated values must be finite and >= 0".into()));
                }
            }
        }
        let mut law = Self {
            kind,
            norm: 1.0,
            flux_moment: 0.0,
            c0: 0.0,
            speed_sampler: Sampler::Power { p: 1.0 },
            flux_sampler: Sampler::Power { p: 1.0 },
        };
        let mass = law.radial_moment(N - 1, tol)? * area;
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidConfig("velocity law has no mass".into()));
        }
        law.norm = 1.0 / mass;
        law.flux_moment = law.radial_moment(N, tol)?;
        law.c0 = half_sphere_flux(N) * law.flux_moment;
        let (speed_sampler, flux_sampler) = match &law.kind {
            LawKind::Maxwellian { theta } => (
                Sampler::Chi { dof: N, scale: theta.sqrt() },
                Sampler::Chi { dof: N + 1, scale: theta.sqrt() },
            ),
            LawKind::TruncatedPower { alpha } => {
                (Sampler::Power { p: n - alpha }, Sampler::Power { p: n + 1.0 - alpha })
            }
            LawKind::TabulatedRadial { speeds, .. } => {
                let (lo, hi) = (speeds[0], speeds[speeds.len() - 1]);
                let raw = |r: f64| law.raw(r);
                (
                    Sampler::Table(InverseCdf::new(|r| r.powi(N as i32 - 1) * raw(r), lo, hi)?),
                    Sampler::Table(InverseCdf::new(|r| r.powi(N as i32) * raw(r), lo, hi)?),
                )
            }
        };
        law.speed_sampler = speed_sampler;
        law.flux_sampler = flux_sampler;
        Ok(law)
    }

    pub fn maxwellian(theta: f64) -> Result<Self> {
        Self::new(LawKind::Maxwellian { theta })
    }

    pub fn kind(&self) -> &LawKind {
        &self.kind
    }

    /// Whether the law may serve as a wall law: positive near zero speed.
    pub fn is_wall_law(&self) -> bool {
        match &self.kind {
            LawKind::Maxwellian { .. } => true,
            LawKind::TruncatedPower { .. } => false,
            LawKind::TabulatedRadial { speeds, values } => speeds[0] == 0.0 && values[0] > 0.0,
        }
    }

    fn raw(&self, r: f64) -> f64 {
        match &self.kind {
            LawKind::Maxwellian { theta } => {
                (2.0 * std::f64::consts::PI * theta).powf(-(N as f64) / 2.0) * (-r * r / (2.0 * theta)).exp()
            }
            LawKind::TruncatedPower { alpha } => {
                if r > 0.0 && r <= 1.0 {
                    r.powf(-alpha)
                } else {
                    0.0
                }
            }
            LawKind::TabulatedRadial { speeds, values } => {
                if r < speeds[0] || r > speeds[speeds.len() - 1] {
                    return 0.0;
                }
                let i = speeds.partition_point(|s| *s <= r).clamp(1, speeds.len() - 1);
                let (s0, s1) = (speeds[i - 1], speeds[i]);
                let t = (r - s0) / (s1 - s0);
                values[i - 1] + t * (values[i] - values[i - 1])
            }
        }
    }

    /// `∫_0^∞ r^k M(r) dr` by 1-D quadrature.
    fn radial_moment(&self, k: usize, tol: Tolerance) -> Result<f64> {
        let f = |r: f64| r.powi(k as i32) * self.raw(r) * self.norm;
        match &self.kind {
            LawKind::Maxwellian { theta } => integrate_to_infinity(|r| f(r * theta.sqrt()) * theta.sqrt(), 0.0, tol),
            LawKind::TruncatedPower { .. } => integrate(f, 0.0, 1.0, tol),
            LawKind::TabulatedRadial { speeds, .. } => {
                speeds.windows(2).map(|w| integrate(f, w[0], w[1], tol)).sum()
            }
        }
    }

    /// Normalised density `M(v)` as a function of `|v|`.
    pub fn density_radial(&self, r: f64) -> f64 {
        self.raw(r) * self.norm
    }

    pub fn density(&self, v: &Vector<N>) -> f64 {
        self.density_radial(v.norm())
    }

    /// Interval of speeds carrying mass; the upper end may be infinite.
    pub fn speed_support(&self) -> (f64, f64) {
        match &self.kind {
            LawKind::Maxwellian { .. } => (0.0, f64::INFINITY),
            LawKind::TruncatedPower { .. } => (0.0, 1.0),
            LawKind::TabulatedRadial { speeds, .. } => (speeds[0], speeds[speeds.len() - 1]),
        }
    }

    /// Raw (pre-normalisation) mass `∫ M dv` of the configured values.
    pub fn raw_mass(&self) -> f64 {
        1.0 / self.norm
    }

    /// Flux constant `c_0 = ∫_{u·n>0} M(u) (u·n) du`.
    pub fn c0(&self) -> f64 {
        self.c0
    }

    /// `c_R` in `h_R(r) = c_R r^n M(r)`.
    pub fn c_r(&self) -> f64 {
        1.0 / self.flux_moment
    }

    /// Density of the emitted speed, `h_R(r) = c_R r^n M(r)`.
    pub fn h_r(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        self.c_r() * r.powi(N as i32) * self.density_radial(r)
    }

    /// Density of `|V|` when `V ~ M`.
    pub fn speed_density(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        sphere_area(N) * s.powi(N as i32 - 1) * self.density_radial(s)
    }

    /// CDF of `|V|` when `V ~ M`.
    pub fn speed_cdf(&self, s: f64) -> f64 {
        self.radial_cdf(s, N - 1, sphere_area(N))
    }

    /// CDF of `h_R`.
    pub fn h_r_cdf(&self, r: f64) -> f64 {
        self.radial_cdf(r, N, self.c_r())
    }

    fn radial_cdf(&self, s: f64, k: usize, scale: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match &self.kind {
            LawKind::Maxwellian { theta } => gamma_lr((k as f64 + 1.0) / 2.0, s * s / (2.0 * theta)),
            LawKind::TruncatedPower { alpha } => s.min(1.0).powf(k as f64 + 1.0 - alpha),
            LawKind::TabulatedRadial { speeds, .. } => {
                let f = |r: f64| r.powi(k as i32) * self.density_radial(r) * scale;
                let tol = Tolerance::default();
                let mut acc = 0.0;
                for w in speeds.windows(2) {
                    if s <= w[0] {
                        break;
                    }
                    acc += integrate(f, w[0], w[1].min(s), tol).unwrap_or(f64::NAN);
                }
                acc.clamp(0.0, 1.0)
            }
        }
    }

    /// Speed of `V ~ M`.
    pub fn sample_speed<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.speed_sampler.sample(rng)
    }

    /// `V ~ M`.
    pub fn sample_velocity<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector<N> {
        let s = self.sample_speed(rng);
        random_direction::<N, _>(rng) * s
    }

    /// Speed with density `h_R`, redrawn below [`MIN_SPEED`].
    pub fn sample_h_r<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let r = self.flux_sampler.sample(rng);
            if r >= MIN_SPEED {
                return r;
            }
        }
    }

    /// `(r, theta) ~ Upsilon = h_R ⊗ h_Theta`.
    pub fn sample_upsilon<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, AngleVector<N>) {
        let r = self.sample_h_r(rng);
        (r, sample_theta::<N, _>(rng))
    }

    /// A full reflection draw from `U[0,1] ⊗ Upsilon`.
    pub fn sample_innovation<R: Rng + ?Sized>(&self, rng: &mut R) -> ReflectionInnovation<N> {
        let u = rng.random::<f64>();
        let (r, theta) = self.sample_upsilon(rng);
        ReflectionInnovation { u, r, theta }
    }
}

/// Angles with density `h_Theta ∝ cos(theta_1) |sin theta_1|^{n-2} ∏ sin^{n-1-j}(theta_j)`.
pub fn sample_theta<const N: usize, R: Rng + ?Sized>(rng: &mut R) -> AngleVector<N> {
    let mut out = AngleVector::<N>::zero();
    let s = rng.random::<f64>().powf(1.0 / (N as f64 - 1.0));
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    out.angles[0] = sign * s.asin();
    if N > 2 {
        // Remaining angles from a uniform direction of S^{n-2} folded onto b_last >= 0.
        let mut b = [0.0f64; N];
        for v in b.iter_mut().take(N - 1) {
            *v = rng.sample(StandardNormal);
        }
        if b[N - 2] < 0.0 {
            for v in b.iter_mut().take(N - 1) {
                *v = -*v;
            }
        }
        tail_angles(&b[..N - 1], &mut out.angles[1..N - 1]);
    }
    out
}

/// Hyperspherical angles of a vector `b` in `R^m` with `b_m >= 0`:
/// `theta_j = atan2(|b_{j+1..}|, b_j)` and the last from `atan2(b_m, b_{m-1})`.
fn tail_angles(b: &[f64], out: &mut [f64]) {
    let m = b.len();
    for j in 0..m - 1 {
        out[j] = if j == m - 2 {
            let (y, x) = (b[m - 1], b[m - 2]);
            if y == 0.0 && x >= 0.0 {
                0.0
            } else {
                y.atan2(x)
            }
        } else {
            let rest = b[j + 1..].iter().map(|v| v * v).sum::<f64>().sqrt();
            if rest == 0.0 && b[j] >= 0.0 {
                0.0
            } else {
                rest.atan2(b[j])
            }
        };
    }
}

/// Deterministic orthonormal frame `(n_x, f_2, ..., f_n)`.
pub fn frame_at<const N: usize>(bp: &BoundaryPoint<N>) -> [Vector<N>; N] {
    let n = bp.normal;
    let mut frame = [Vector::<N>::zeros(); N];
    frame[0] = n;
    let first = (0..N).min_by(|&i, &j| n[i].abs().total_cmp(&n[j].abs())).expect("N >= 1");
    let order = std::iter::once(first).chain((0..N).filter(|&k| k != first));
    let mut filled = 1;
    for k in order {
        if filled == N {
            break;
        }
        let mut e = unit_vector::<N>(k);
        for f in frame.iter().take(filled) {
            e -= f * f.dot(&e);
        }
        let len = e.norm();
        if len > 1e-8 {
            frame[filled] = e / len;
            filled += 1;
        }
    }
    frame
}

/// Local coordinates of the unit direction with angles `theta`.
fn local_direction<const N: usize>(theta: &AngleVector<N>) -> [f64; N] {
    let mut a = [0.0; N];
    let mut prod = 1.0;
    for j in 0..N - 1 {
        a[j] = prod * theta.angles[j].cos();
        prod *= theta.angles[j].sin();
    }
    a[N - 1] = prod;
    a
}

/// `vartheta(x, theta)`: the unit direction with polar axis `n_x`.
pub fn vartheta<const N: usize>(bp: &BoundaryPoint<N>, theta: &AngleVector<N>) -> Vector<N> {
    let frame = frame_at(bp);
    let a = local_direction(theta);
    let mut u = Vector::<N>::zeros();
    for k in 0..N {
        u += frame[k] * a[k];
    }
    u
}

/// Inverse of [`vartheta`] on inward unit directions.
pub fn vartheta_inverse<const N: usize>(bp: &BoundaryPoint<N>, u: &Vector<N>) -> Result<AngleVector<N>> {
    let frame = frame_at(bp);
    let mut a = [0.0; N];
    for k in 0..N {
        a[k] = frame[k].dot(u);
    }
    if a[0] <= 0.0 {
        return Err(Error::NotInward(a[0]));
    }
    let mut out = AngleVector::<N>::zero();
    if N == 2 {
        out.angles[0] = a[1].atan2(a[0]);
        return Ok(out);
    }
    let s = a[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
    if s == 0.0 {
        return Ok(out);
    }
    let sign = match a[1..].iter().rev().find(|v| **v != 0.0) {
        Some(v) if *v < 0.0 => -1.0,
        _ => 1.0,
    };
    out.angles[0] = sign * s.atan2(a[0]);
    let mut b = [0.0; N];
    for k in 1..N {
        b[k - 1] = sign * a[k] / s;
    }
    tail_angles(&b[..N - 1], &mut out.angles[1..N - 1]);
    Ok(out)
}

/// `w(x, v, u, r, theta)`: specular when `u > alpha`, diffuse emission otherwise.
pub fn post_collision_w<const N: usize>(
    bp: &BoundaryPoint<N>,
    v_in: &Vector<N>,
    innovation: &ReflectionInnovation<N>,
    alpha: f64,
) -> Vector<N> {
    if innovation.u > alpha {
        specular_reflect(bp, v_in)
    } else {
        vartheta(bp, &innovation.theta) * innovation.r
    }
}
