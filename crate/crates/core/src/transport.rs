//! Single-particle event-driven free transport with Maxwell wall reflection.

use std::cmp::Ordering;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{BoundaryPoint, Domain, Vector};
use crate::velocity_law::{post_collision_w, vartheta, ReflectionInnovation, VelocityLaw};

/// Default cap on boundary events per particle.
pub const MAX_COLLISIONS: u64 = 10_000_000;
/// Relative threshold below which an outgoing velocity counts as tangential.
pub const TANGENTIAL_EPS: f64 = 1e-12;

/// Event time kept as an unevaluated sum `hi + lo` (compensated summation).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Clock {
    hi: f64,
    lo: f64,
}

impl Clock {
    pub const ZERO: Clock = Clock { hi: 0.0, lo: 0.0 };

    pub fn new(t: f64) -> Self {
        Self { hi: t, lo: 0.0 }
    }

    pub fn value(&self) -> f64 {
        self.hi + self.lo
    }

    pub fn add(self, dt: f64) -> Self {
        // TwoSum of hi + dt, then fold the error into lo and renormalise.
        let s = self.hi + dt;
        let bb = s - self.hi;
        let err = (self.hi - (s - bb)) + (dt - bb);
        let lo = self.lo + err;
        let hi = s + lo;
        Self { hi, lo: lo - (hi - s) }
    }

    /// `self - earlier` as a plain float.
    pub fn since(&self, earlier: &Clock) -> f64 {
        (self.hi - earlier.hi) + (self.lo - earlier.lo)
    }
}

impl PartialOrd for Clock {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi)? {
            Ordering::Equal => self.lo.partial_cmp(&other.lo),
            o => Some(o),
        }
    }
}

/// Reflection probability as a function of the boundary point.
#[derive(Debug, Clone, PartialEq)]
pub enum AlphaField {
    Constant(f64),
    /// `base + amplitude * cos(frequency * angle)` with the polar angle of
    /// the point around the domain centre in the `(x_1, x_2)` plane.
    Harmonic { base: f64, amplitude: f64, frequency: f64 },
}

impl AlphaField {
    pub fn at<const N: usize>(&self, domain: &Domain<N>, bp: &BoundaryPoint<N>) -> f64 {
        match self {
            AlphaField::Constant(a) => *a,
            AlphaField::Harmonic { base, amplitude, frequency } => {
                let y = bp.x - domain.center();
                base + amplitude * (frequency * y[1].atan2(y[0])).cos()
            }
        }
    }

    pub fn min(&self) -> f64 {
        match self {
            AlphaField::Constant(a) => *a,
            AlphaField::Harmonic { base, amplitude, .. } => base - amplitude.abs(),
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            AlphaField::Constant(a) => *a,
            AlphaField::Harmonic { base, amplitude, .. } => base + amplitude.abs(),
        }
    }
}

/// Branch taken by a boundary event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reflection {
    Specular,
    Diffuse,
    /// Tangential outcome replaced by a fresh diffuse draw.
    Guarded,
}

/// Where the particle sits at its last event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Location<const N: usize> {
    Interior,
    Boundary(BoundaryPoint<N>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event<const N: usize> {
    pub time: Clock,
    pub point: BoundaryPoint<N>,
}

/// State at the last event `T_k`: position, velocity and the cached next event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleState<const N: usize> {
    pub t: Clock,
    pub x: Vector<N>,
    pub v: Vector<N>,
    pub location: Location<N>,
    pub next: Option<Event<N>>,
    pub collisions: u64,
}

impl<const N: usize> ParticleState<N> {
    /// Starts at time 0, classifying `x` as a boundary point when within the
    /// boundary tolerance.
    pub fn new(domain: &Domain<N>, x: Vector<N>, v: Vector<N>) -> Result<Self> {
        if !(v.norm() > 0.0) {
            return Err(Error::NonPositiveSpeed);
        }
        let location = if domain.on_boundary(&x) {
            Location::Boundary(domain.boundary_point(&x))
        } else {
            Location::Interior
        };
        let x = match location {
            Location::Boundary(bp) => bp.x,
            Location::Interior => x,
        };
        Ok(Self { t: Clock::ZERO, x, v, location, next: None, collisions: 0 })
    }

    pub fn position_at(&self, t: &Clock) -> Vector<N> {
        self.x + self.v * t.since(&self.t)
    }
}

/// Initial spatial law.
#[derive(Debug, Clone, PartialEq)]
pub enum SpatialLaw<const N: usize> {
    Uniform,
    Point(Vector<N>),
    Ball { center: Vector<N>, radius: f64 },
}

/// Initial velocity law.
#[derive(Debug, Clone)]
pub enum VelocityInit<const N: usize> {
    Law(VelocityLaw<N>),
    Point(Vector<N>),
    /// The wall law `M` itself.
    Equilibrium,
}

#[derive(Debug, Clone)]
pub struct InitialLaw<const N: usize> {
    pub spatial: SpatialLaw<N>,
    pub velocity: VelocityInit<N>,
}

impl<const N: usize> InitialLaw<N> {
    /// The equilibrium `mu_inf`: uniform position, velocity `M`.
    pub fn equilibrium() -> Self {
        Self { spatial: SpatialLaw::Uniform, velocity: VelocityInit::Equilibrium }
    }

    pub fn validate(&self, domain: &Domain<N>) -> Result<()> {
        match &self.spatial {
            SpatialLaw::Uniform => {}
            SpatialLaw::Point(x) => {
                if domain.phi(x) > domain.boundary_tolerance() {
                    return Err(Error::InvalidConfig("initial point lies outside the domain".into()));
                }
            }
            SpatialLaw::Ball { center, radius } => {
                if !(*radius > 0.0) || domain.signed_distance_estimate(center) > -radius {
                    return Err(Error::InvalidConfig("initial ball must lie inside the domain".into()));
                }
            }
        }
        if let VelocityInit::Point(v) = &self.velocity {
            if !(v.norm() > 0.0) {
                return Err(Error::NonPositiveSpeed);
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        domain: &Domain<N>,
        wall: &VelocityLaw<N>,
        rng: &mut R,
    ) -> (Vector<N>, Vector<N>) {
        let x = match &self.spatial {
            SpatialLaw::Uniform => domain.sample_uniform(rng),
            SpatialLaw::Point(x) => *x,
            SpatialLaw::Ball { center, radius } => domain.sample_in_ball(rng, center, *radius),
        };
        let v = match &self.velocity {
            VelocityInit::Law(law) => law.sample_velocity(rng),
            VelocityInit::Point(v) => *v,
            VelocityInit::Equilibrium => wall.sample_velocity(rng),
        };
        (x, v)
    }
}

/// Immutable model: domain, wall law, reflection field and guards.
#[derive(Debug, Clone)]
pub struct FreeTransport<const N: usize> {
    pub domain: Domain<N>,
    pub wall: VelocityLaw<N>,
    pub alpha: AlphaField,
    pub max_collisions: u64,
}

impl<const N: usize> FreeTransport<N> {
    pub fn new(domain: Domain<N>, wall: VelocityLaw<N>, alpha: AlphaField) -> Result<Self> {
        if !(alpha.min() >= 0.0 && alpha.max() <= 1.0) {
            return Err(Error::InvalidConfig("reflection field must take values in [0, 1]".into()));
        }
        if !wall.is_wall_law() {
            return Err(Error::InvalidConfig("wall law must be positive near zero speed".into()));
        }
        Ok(Self { domain, wall, alpha, max_collisions: MAX_COLLISIONS })
    }

    pub fn alpha_at(&self, bp: &BoundaryPoint<N>) -> f64 {
        self.alpha.at(&self.domain, bp)
    }

    /// Fills and returns the cached next boundary event.
    pub fn schedule_next(&self, state: &mut ParticleState<N>) -> Result<Event<N>> {
        if let Some(e) = state.next {
            return Ok(e);
        }
        let hit = match &state.location {
            Location::Interior => self.domain.hit_from_interior(&state.x, &state.v)?,
            Location::Boundary(bp) => self.domain.hit_from_boundary(bp, &state.v)?,
        };
        let e = Event { time: state.t.add(hit.time), point: hit.point };
        state.next = Some(e);
        Ok(e)
    }

    /// Moves the particle to its cached event and applies the reflection map
    /// with the given innovation. A tangential outcome is replaced by a fresh
    /// diffuse draw from `rng`.
    pub fn fire_event<R: Rng + ?Sized>(
        &self,
        state: &mut ParticleState<N>,
        innovation: &ReflectionInnovation<N>,
        rng: &mut R,
    ) -> Result<Reflection> {
        let e = self.schedule_next(state)?;
        let alpha = self.alpha_at(&e.point);
        let mut kind = if innovation.u > alpha { Reflection::Specular } else { Reflection::Diffuse };
        let v = post_collision_w(&e.point, &state.v, innovation, alpha);
        let guarded = self.guard_tangential(&e.point, v, rng);
        if guarded != v {
            kind = Reflection::Guarded;
        }
        self.land(state, e, guarded)?;
        Ok(kind)
    }

    pub(crate) fn guard_tangential<R: Rng + ?Sized>(
        &self,
        bp: &BoundaryPoint<N>,
        mut v: Vector<N>,
        rng: &mut R,
    ) -> Vector<N> {
        while v.dot(&bp.normal) <= TANGENTIAL_EPS * v.norm() {
            let (r, theta) = self.wall.sample_upsilon(rng);
            v = vartheta(bp, &theta) * r;
        }
        v
    }

    pub(crate) fn land(&self, state: &mut ParticleState<N>, e: Event<N>, v: Vector<N>) -> Result<()> {
        state.t = e.time;
        state.x = e.point.x;
        state.v = v;
        state.location = Location::Boundary(e.point);
        state.next = None;
        state.collisions += 1;
        if state.collisions > self.max_collisions {
            return Err(Error::ExplosionGuardTripped(state.collisions));
        }
        Ok(())
    }

    /// One event with a fresh innovation.
    pub fn step<R: Rng + ?Sized>(&self, state: &mut ParticleState<N>, rng: &mut R) -> Result<()> {
        let innovation = self.wall.sample_innovation(rng);
        self.fire_event(state, &innovation, rng).map(|_| ())
    }

    /// Fires every event with time `<= t`.
    pub fn advance_to<R: Rng + ?Sized>(&self, state: &mut ParticleState<N>, t: &Clock, rng: &mut R) -> Result<()> {
        while self.schedule_next(state)?.time <= *t {
            self.step(state, rng)?;
        }
        Ok(())
    }

    /// `(X_t, V_t)` with the post-collision velocity at event times.
    pub fn state_at<R: Rng + ?Sized>(
        &self,
        state: &mut ParticleState<N>,
        t: f64,
        rng: &mut R,
    ) -> Result<(Vector<N>, Vector<N>)> {
        let t = Clock::new(t);
        self.advance_to(state, &t, rng)?;
        Ok((state.position_at(&t), state.v))
    }

    /// Number of boundary events in `[0, horizon]`.
    pub fn collisions_in<R: Rng + ?Sized>(
        &self,
        state: &mut ParticleState<N>,
        horizon: f64,
        rng: &mut R,
    ) -> Result<u64> {
        let start = state.collisions;
        self.advance_to(state, &Clock::new(horizon), rng)?;
        Ok(state.collisions - start)
    }

    /// Draws `(x, v)` from `law` and wraps it in a fresh state.
    pub fn initial_state<R: Rng + ?Sized>(&self, law: &InitialLaw<N>, rng: &mut R) -> Result<ParticleState<N>> {
        let (x, v) = law.sample(&self.domain, &self.wall, rng);
        ParticleState::new(&self.domain, x, v)
    }
}
