//! Bounded C² domains described by a level set, with analytic fast paths for
//! balls, ellipsoids and spherical shells.
//!
//! Sign convention: `phi < 0` inside, `phi > 0` outside. Normals returned by
//! this module always point into the domain.

pub mod implicit;
mod patches;

pub use patches::{Cap, PatchSearch, Patches};

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::SVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type Vector<const N: usize> = SVector<f64, N>;

/// Relative tolerance defining "on the boundary".
pub const BOUNDARY_TOL_REL: f64 = 1e-9;
/// Departure offset used when a root search starts on the boundary.
pub const DEPARTURE_OFFSET_REL: f64 = 1e-7;
/// Number of marching steps across one diameter for generic level sets.
pub const MARCH_STEPS: f64 = 1024.0;

/// A user supplied level set. `value` must be negative inside the domain and
/// positive outside, with a non-vanishing gradient near the zero set.
pub trait LevelSet<const N: usize>: Send + Sync + Debug {
    fn value(&self, x: &Vector<N>) -> f64;
    fn gradient(&self, x: &Vector<N>) -> Vector<N>;
    /// Axis-aligned box containing the closed domain.
    fn bounds(&self) -> (Vector<N>, Vector<N>);
    fn is_convex(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone)]
pub enum Shape<const N: usize> {
    Ball { center: Vector<N>, radius: f64 },
    Ellipsoid { center: Vector<N>, semi_axes: Vector<N> },
    /// Spherical shell `inner < |x - center| < outer`.
    Annulus { center: Vector<N>, inner: f64, outer: f64 },
    Implicit(Arc<dyn LevelSet<N>>),
}

/// A point of the boundary together with its unit inward normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint<const N: usize> {
    pub x: Vector<N>,
    pub normal: Vector<N>,
}

/// Result of a ray cast: flight duration and the boundary point reached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit<const N: usize> {
    pub time: f64,
    pub point: BoundaryPoint<N>,
}

#[derive(Debug, Clone, Copy)]
enum Surface {
    Outer,
    Inner,
}

#[derive(Debug, Clone)]
pub struct Domain<const N: usize> {
    shape: Shape<N>,
    diameter: f64,
    tol: f64,
    center: Vector<N>,
    lower: Vector<N>,
    upper: Vector<N>,
}

impl<const N: usize> Domain<N> {
    pub fn new(shape: Shape<N>) -> Result<Self> {
        if N < 2 {
            return Err(Error::InvalidConfig("dimension must be at least 2".into()));
        }
        let (center, lower, upper, diameter) = match &shape {
            Shape::Ball { center, radius } => {
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::InvalidConfig("ball radius must be positive".into()));
                }
                let r = Vector::<N>::repeat(*radius);
                (*center, center - r, center + r, 2.0 * radius)
            }
            Shape::Ellipsoid { center, semi_axes } => {
                if semi_axes.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
                    return Err(Error::InvalidConfig("semi-axes must be positive".into()));
                }
                (*center, center - semi_axes, center + semi_axes, 2.0 * semi_axes.max())
            }
            Shape::Annulus { center, inner, outer } => {
                if !(*inner > 0.0 && inner < outer && outer.is_finite()) {
                    return Err(Error::InvalidConfig(
                        "annulus radii must satisfy 0 < inner < outer".into(),
                    ));
                }
                let r = Vector::<N>::repeat(*outer);
                (*center, center - r, center + r, 2.0 * outer)
            }
            Shape::Implicit(ls) => {
                let (lo, hi) = ls.bounds();
                if (0..N).any(|i| !(hi[i] > lo[i])) {
                    return Err(Error::InvalidConfig("implicit bounds are empty".into()));
                }
                (0.5 * (lo + hi), lo, hi, 0.0)
            }
        };
        let mut domain = Self { shape, diameter, tol: 0.0, center, lower, upper };
        if let Shape::Implicit(_) = domain.shape {
            // Provisional diameter from the bounding box, then refined from
            // sampled outer boundary points.
            domain.diameter = (upper - lower).norm();
            domain.tol = BOUNDARY_TOL_REL * domain.diameter;
            domain.diameter = domain.sampled_diameter()?;
        }
        domain.tol = BOUNDARY_TOL_REL * domain.diameter;
        Ok(domain)
    }

    pub fn shape(&self) -> &Shape<N> {
        &self.shape
    }

    pub fn dimension(&self) -> usize {
        N
    }

    /// Diameter `d(D)`; an upper bound of every chord length.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn boundary_tolerance(&self) -> f64 {
        self.tol
    }

    /// Reference interior-or-hull centre used for directional patch
    /// parameterisation.
    pub fn center(&self) -> Vector<N> {
        self.center
    }

    pub fn bounds(&self) -> (Vector<N>, Vector<N>) {
        (self.lower, self.upper)
    }

    pub fn is_convex(&self) -> bool {
        match &self.shape {
            Shape::Ball { .. } | Shape::Ellipsoid { .. } => true,
            Shape::Annulus { .. } => false,
            Shape::Implicit(ls) => ls.is_convex(),
        }
    }

    pub fn phi(&self, x: &Vector<N>) -> f64 {
        match &self.shape {
            Shape::Ball { center, radius } => (x - center).norm() - radius,
            Shape::Ellipsoid { center, semi_axes } => {
                let y = (x - center).component_div(semi_axes);
                (y.norm_squared() - 1.0) * 0.5 * semi_axes.min()
            }
            Shape::Annulus { center, inner, outer } => {
                let r = (x - center).norm();
                (r - inner) * (r - outer) / (outer - inner)
            }
            Shape::Implicit(ls) => ls.value(x),
        }
    }

    pub fn gradient(&self, x: &Vector<N>) -> Vector<N> {
        match &self.shape {
            Shape::Ball { center, .. } => {
                let y = x - center;
                let r = y.norm();
                if r > 0.0 {
                    y / r
                } else {
                    Vector::<N>::zeros()
                }
            }
            Shape::Ellipsoid { center, semi_axes } => {
                let y = x - center;
                let mut g = Vector::<N>::zeros();
                for i in 0..N {
                    g[i] = y[i] / (semi_axes[i] * semi_axes[i]) * semi_axes.min();
                }
                g
            }
            Shape::Annulus { center, inner, outer } => {
                let y = x - center;
                let r = y.norm();
                if r == 0.0 {
                    return Vector::<N>::zeros();
                }
                let dphi_dr = (2.0 * r - inner - outer) / (outer - inner);
                y * (dphi_dr / r)
            }
            Shape::Implicit(ls) => ls.gradient(x),
        }
    }

    /// First-order signed distance `phi / |grad phi|`.
    pub fn signed_distance_estimate(&self, x: &Vector<N>) -> f64 {
        let g = self.gradient(x).norm();
        if g > 0.0 {
            self.phi(x) / g
        } else {
            self.phi(x)
        }
    }

    pub fn contains(&self, x: &Vector<N>) -> bool {
        self.phi(x) < 0.0
    }

    pub fn on_boundary(&self, x: &Vector<N>) -> bool {
        self.signed_distance_estimate(x).abs() <= self.tol
    }

    /// Unit inward normal `-grad phi / |grad phi|` at `x`.
    pub fn inward_normal(&self, x: &Vector<N>) -> Vector<N> {
        match &self.shape {
            Shape::Annulus { center, inner, outer } => {
                // Exact normals for each sphere regardless of the product form.
                let y = x - center;
                let r = y.norm();
                if (r - inner).abs() < (r - outer).abs() {
                    y / r
                } else {
                    -y / r
                }
            }
            _ => {
                let g = self.gradient(x);
                -g / g.norm()
            }
        }
    }

    /// Projects `x` onto the boundary and attaches the inward normal.
    pub fn boundary_point(&self, x: &Vector<N>) -> BoundaryPoint<N> {
        let p = self.project(x, None);
        BoundaryPoint { x: p, normal: self.inward_normal(&p) }
    }

    fn project(&self, x: &Vector<N>, surface: Option<Surface>) -> Vector<N> {
        match &self.shape {
            Shape::Ball { center, radius } => {
                let y = x - center;
                center + y * (radius / y.norm())
            }
            Shape::Ellipsoid { center, semi_axes } => {
                let y = x - center;
                let s = y.component_div(semi_axes).norm();
                center + y / s
            }
            Shape::Annulus { center, inner, outer } => {
                let y = x - center;
                let r = y.norm();
                let target = match surface {
                    Some(Surface::Inner) => *inner,
                    Some(Surface::Outer) => *outer,
                    None => {
                        if (r - inner).abs() < (r - outer).abs() {
                            *inner
                        } else {
                            *outer
                        }
                    }
                };
                center + y * (target / r)
            }
            Shape::Implicit(ls) => {
                let mut p = *x;
                for _ in 0..4 {
                    let g = ls.gradient(&p);
                    let g2 = g.norm_squared();
                    if g2 == 0.0 {
                        break;
                    }
                    p -= g * (ls.value(&p) / g2);
                }
                p
            }
        }
    }

    /// `zeta(x, v)`: flight time from an arbitrary point of the closed domain.
    /// Points within the boundary tolerance are treated as boundary points.
    pub fn hitting_time(&self, x: &Vector<N>, v: &Vector<N>) -> Result<f64> {
        Ok(self.hit_from_point(x, v)?.time)
    }

    /// `q(x, v)`: the boundary point reached from `x` along `v`.
    pub fn hitting_point(&self, x: &Vector<N>, v: &Vector<N>) -> Result<BoundaryPoint<N>> {
        Ok(self.hit_from_point(x, v)?.point)
    }

    fn hit_from_point(&self, x: &Vector<N>, v: &Vector<N>) -> Result<Hit<N>> {
        if self.on_boundary(x) {
            let bp = BoundaryPoint { x: *x, normal: self.inward_normal(x) };
            self.hit_from_boundary(&bp, v)
        } else {
            self.hit_from_interior(x, v)
        }
    }

    /// Ray cast from a point strictly inside the domain.
    pub fn hit_from_interior(&self, x: &Vector<N>, v: &Vector<N>) -> Result<Hit<N>> {
        let speed = v.norm();
        if !(speed > 0.0) {
            return Err(Error::NonPositiveSpeed);
        }
        let (s, surface) = self.ray_root(x, v, 0.0, speed)?;
        Ok(self.make_hit(x, v, s, surface))
    }

    /// Ray cast leaving a boundary point. Incoming or tangential velocities
    /// give a zero flight and return the point itself.
    pub fn hit_from_boundary(&self, bp: &BoundaryPoint<N>, v: &Vector<N>) -> Result<Hit<N>> {
        let speed = v.norm();
        if !(speed > 0.0) {
            return Err(Error::NonPositiveSpeed);
        }
        if v.dot(&bp.normal) <= 0.0 {
            return Ok(Hit { time: 0.0, point: *bp });
        }
        let s_min = DEPARTURE_OFFSET_REL * self.diameter / speed;
        let (s, surface) = self.ray_root(&bp.x, v, s_min, speed)?;
        Ok(self.make_hit(&bp.x, v, s, surface))
    }

    fn make_hit(&self, x: &Vector<N>, v: &Vector<N>, s: f64, surface: Surface) -> Hit<N> {
        let p = self.project(&(x + v * s), Some(surface));
        Hit { time: s, point: BoundaryPoint { x: p, normal: self.inward_normal(&p) } }
    }

    fn ray_root(&self, x: &Vector<N>, v: &Vector<N>, s_min: f64, speed: f64) -> Result<(f64, Surface)> {
        match &self.shape {
            Shape::Ball { center, radius } => {
                Ok((sphere_exit(&(x - center), v, *radius), Surface::Outer))
            }
            Shape::Ellipsoid { center, semi_axes } => {
                let y = (x - center).component_div(semi_axes);
                let w = v.component_div(semi_axes);
                Ok((sphere_exit(&y, &w, 1.0), Surface::Outer))
            }
            Shape::Annulus { center, inner, outer } => {
                let y = x - center;
                let s_out = sphere_exit(&y, v, *outer);
                match sphere_entry(&y, v, *inner) {
                    Some(s_in) if s_in > s_min && s_in < s_out => Ok((s_in, Surface::Inner)),
                    _ => Ok((s_out, Surface::Outer)),
                }
            }
            Shape::Implicit(ls) => {
                let s = self.march_root(ls.as_ref(), x, v, s_min, speed)?;
                Ok((s, Surface::Outer))
            }
        }
    }

    /// Uniform marching at step `d(D) / 1024` followed by safeguarded
    /// Newton–bisection on the first inside-to-outside bracket.
    fn march_root(
        &self,
        ls: &dyn LevelSet<N>,
        x: &Vector<N>,
        v: &Vector<N>,
        s_min: f64,
        speed: f64,
    ) -> Result<f64> {
        let f = |s: f64| ls.value(&(x + v * s));
        let h = self.diameter / (MARCH_STEPS * speed);
        let s_max = s_min + (self.diameter * 1.01) / speed + h;
        let mut a = s_min;
        let mut fa = f(a);
        if fa >= 0.0 {
            // Grazing departure: the exit lies within the skipped offset.
            return Ok(s_min);
        }
        while a < s_max {
            let b = a + h;
            let fb = f(b);
            if fb >= 0.0 {
                return Ok(refine_root(&f, |s| ls.gradient(&(x + v * s)).dot(v), a, b, fa, fb));
            }
            a = b;
            fa = fb;
        }
        Err(Error::RootNotBracketed(format!(
            "no sign change of phi along the ray within {s_max:.3e} time units"
        )))
    }

    /// Outermost boundary point on the ray from the centre in direction `dir`.
    pub fn outermost(&self, dir: &Vector<N>) -> Result<BoundaryPoint<N>> {
        let u = dir.normalize();
        let p = match &self.shape {
            Shape::Ball { center, radius } => center + u * *radius,
            Shape::Ellipsoid { center, semi_axes } => {
                center + u / u.component_div(semi_axes).norm()
            }
            Shape::Annulus { center, outer, .. } => center + u * *outer,
            Shape::Implicit(ls) => {
                let reach = (self.upper - self.lower).norm();
                let far = self.center + u * reach;
                let back = -u;
                let f = |s: f64| ls.value(&(far + back * s));
                let h = reach / MARCH_STEPS;
                let mut a = 0.0;
                let mut fa = f(a);
                let mut found = None;
                while a < 2.0 * reach {
                    let b = a + h;
                    let fb = f(b);
                    if fb < 0.0 && fa >= 0.0 {
                        let g = |s: f64| -f(s);
                        let s = refine_root(&g, |s| -ls.gradient(&(far + back * s)).dot(&back), a, b, -fa, -fb);
                        found = Some(far + back * s);
                        break;
                    }
                    a = b;
                    fa = fb;
                }
                found.ok_or_else(|| {
                    Error::RootNotBracketed("ray from outside never enters the domain".into())
                })?
            }
        };
        let p = self.project(&p, Some(Surface::Outer));
        Ok(BoundaryPoint { x: p, normal: self.inward_normal(&p) })
    }

    /// Whether `bp` is the outermost boundary crossing in its own direction
    /// from the centre.
    pub fn is_outermost(&self, bp: &BoundaryPoint<N>) -> bool {
        match &self.shape {
            Shape::Ball { .. } | Shape::Ellipsoid { .. } => true,
            Shape::Annulus { center, inner, outer } => {
                (bp.x - center).norm() > 0.5 * (inner + outer)
            }
            Shape::Implicit(ls) => {
                let y = bp.x - self.center;
                let r = y.norm();
                if r == 0.0 {
                    return false;
                }
                let u = y / r;
                let reach = (self.upper - self.lower).norm();
                let h = reach / MARCH_STEPS;
                let mut s = DEPARTURE_OFFSET_REL * self.diameter.max(h);
                while s < reach {
                    if ls.value(&(bp.x + u * s)) < 0.0 {
                        return false;
                    }
                    s += h;
                }
                true
            }
        }
    }

    fn sampled_diameter(&self) -> Result<f64> {
        let pts = self.hull_samples(1024)?;
        let mut best: f64 = 0.0;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                best = best.max((pts[i] - pts[j]).norm());
            }
        }
        Ok(best * 1.002)
    }

    /// Deterministic outer-hull boundary samples.
    pub fn hull_samples(&self, count: usize) -> Result<Vec<Vector<N>>> {
        let mut rng = crate::rng::stream(0x5eed, crate::rng::Purpose::Geometry, 0);
        (0..count)
            .map(|k| {
                let dir = if N == 2 {
                    let a = 2.0 * std::f64::consts::PI * (k as f64) / (count as f64);
                    let mut d = Vector::<N>::zeros();
                    d[0] = a.cos();
                    d[1] = a.sin();
                    d
                } else {
                    random_direction::<N, _>(&mut rng)
                };
                self.outermost(&dir).map(|b| b.x)
            })
            .collect()
    }

    /// `eta_x(v) = v - 2 (v . n_x) n_x`.
    pub fn specular_reflect(&self, bp: &BoundaryPoint<N>, v: &Vector<N>) -> Vector<N> {
        specular_reflect(bp, v)
    }

    /// Mutual visibility of two boundary points: open chord inside the
    /// domain and strictly inward directions at both ends.
    pub fn communicates(&self, a: &BoundaryPoint<N>, b: &BoundaryPoint<N>) -> bool {
        let d = b.x - a.x;
        let len = d.norm();
        if len <= self.tol {
            return false;
        }
        let eps = 1e-9 * len;
        if a.normal.dot(&d) <= eps || b.normal.dot(&(-d)) <= eps {
            return false;
        }
        match &self.shape {
            Shape::Ball { .. } | Shape::Ellipsoid { .. } => true,
            Shape::Annulus { center, inner, .. } => {
                // Clearance of the segment from the inner ball; an endpoint
                // closest to the centre is on the boundary and already
                // cleared by the direction tests.
                let w = center - a.x;
                let t = w.dot(&d) / (len * len);
                if t <= 0.0 || t >= 1.0 {
                    return true;
                }
                (a.x + d * t - center).norm() > inner + self.tol
            }
            Shape::Implicit(ls) => {
                const GRID: usize = 64;
                (1..2 * GRID).all(|k| {
                    let t = k as f64 / (2 * GRID) as f64;
                    ls.value(&(a.x + d * t)) < 0.0
                })
            }
        }
    }

    /// Uniform sample of the domain.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector<N> {
        match &self.shape {
            Shape::Ball { center, radius } => {
                let u: f64 = rng.random();
                center + random_direction::<N, _>(rng) * (radius * u.powf(1.0 / N as f64))
            }
            Shape::Annulus { center, inner, outer } => {
                let lo = inner.powi(N as i32);
                let hi = outer.powi(N as i32);
                let u: f64 = rng.random();
                let r = (lo + u * (hi - lo)).powf(1.0 / N as f64);
                center + random_direction::<N, _>(rng) * r
            }
            _ => loop {
                let mut x = Vector::<N>::zeros();
                for i in 0..N {
                    x[i] = self.lower[i] + (self.upper[i] - self.lower[i]) * rng.random::<f64>();
                }
                if self.contains(&x) {
                    return x;
                }
            },
        }
    }

    /// Uniform sample of the ball `B(center, radius)`, which must lie in the domain.
    pub fn sample_in_ball<R: Rng + ?Sized>(&self, rng: &mut R, center: &Vector<N>, radius: f64) -> Vector<N> {
        let u: f64 = rng.random();
        center + random_direction::<N, _>(rng) * (radius * u.powf(1.0 / N as f64))
    }
}

pub fn specular_reflect<const N: usize>(bp: &BoundaryPoint<N>, v: &Vector<N>) -> Vector<N> {
    v - bp.normal * (2.0 * v.dot(&bp.normal))
}

/// Canonical basis vector `e_k`.
pub fn unit_vector<const N: usize>(k: usize) -> Vector<N> {
    let mut e = Vector::<N>::zeros();
    e[k] = 1.0;
    e
}

/// Uniformly distributed unit vector.
pub fn random_direction<const N: usize, R: Rng + ?Sized>(rng: &mut R) -> Vector<N> {
    loop {
        let mut g = Vector::<N>::zeros();
        for i in 0..N {
            g[i] = rng.sample(StandardNormal);
        }
        let n = g.norm();
        if n > 1e-12 {
            return g / n;
        }
    }
}

/// Larger root of `|y + s v|^2 = r^2`.
fn sphere_exit<const N: usize>(y: &Vector<N>, v: &Vector<N>, r: f64) -> f64 {
    let a = v.norm_squared();
    let b = y.dot(v);
    let c = y.norm_squared() - r * r;
    let disc = (b * b - a * c).max(0.0);
    let sq = disc.sqrt();
    if b <= 0.0 {
        (-b + sq) / a
    } else {
        // Same root without cancellation.
        let den = b + sq;
        if den > 0.0 {
            (-c / den).max(0.0)
        } else {
            0.0
        }
    }
}

/// Smaller root of `|y + s v|^2 = r^2` when the line meets the sphere.
fn sphere_entry<const N: usize>(y: &Vector<N>, v: &Vector<N>, r: f64) -> Option<f64> {
    let a = v.norm_squared();
    let b = y.dot(v);
    let c = y.norm_squared() - r * r;
    let disc = b * b - a * c;
    if disc <= 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    if b < 0.0 {
        let q = -b + sq;
        Some(c / q)
    } else {
        Some((-b - sq) / a)
    }
}

/// Newton steps kept inside a shrinking bisection bracket `[a, b]` with
/// `f(a) < 0 <= f(b)`.
fn refine_root(
    f: &dyn Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    mut a: f64,
    mut b: f64,
    _fa: f64,
    _fb: f64,
) -> f64 {
    let mut s = 0.5 * (a + b);
    for _ in 0..200 {
        let fs = f(s);
        if fs < 0.0 {
            a = s;
        } else {
            b = s;
        }
        if (b - a) <= 1e-12 * b.abs().max(1e-300) {
            break;
        }
        let d = df(s);
        let newton = if d != 0.0 { s - fs / d } else { f64::NAN };
        s = if newton > a && newton < b { newton } else { 0.5 * (a + b) };
    }
    b
}
