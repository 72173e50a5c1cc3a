//! Coupling of a free-transport chain started from `f0` with one started from
//! equilibrium, using a maximal coupling of the next-collision laws.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{BoundaryPoint, Domain, Patches, Vector};
use crate::transport::{Clock, Event, FreeTransport, InitialLaw, ParticleState, Reflection};
use crate::velocity_law::{vartheta, vartheta_inverse, AngleVector, ReflectionInnovation, VelocityLaw};

/// Default cap on residual proposals per coupling attempt.
pub const RESIDUAL_BUDGET: usize = 1_000_000;
/// Default cap on joint events per pair.
pub const MAX_JOINT_EVENTS: u64 = 20_000_000;

/// Joint density of `(zeta(x, V), q(x, V))` for a diffuse emission from `x`:
/// `M(|z-x|/tau) tau^{-(n+2)} |(z-x).n_x| |(z-x).n_z| / c0`, times the
/// visibility indicator on non-convex domains.
#[derive(Debug, Clone, Copy)]
pub struct HittingDensity<'a, const N: usize> {
    pub domain: &'a Domain<N>,
    pub law: &'a VelocityLaw<N>,
    pub anchor: BoundaryPoint<N>,
}

impl<const N: usize> HittingDensity<'_, N> {
    pub fn eval(&self, tau: f64, z: &BoundaryPoint<N>) -> f64 {
        hitting_density(self.domain, self.law, &self.anchor, tau, z)
    }
}

pub fn hitting_density<const N: usize>(
    domain: &Domain<N>,
    law: &VelocityLaw<N>,
    x: &BoundaryPoint<N>,
    tau: f64,
    z: &BoundaryPoint<N>,
) -> f64 {
    if !(tau > 0.0) {
        return 0.0;
    }
    let d = z.x - x.x;
    let len = d.norm();
    if len == 0.0 {
        return 0.0;
    }
    if !domain.is_convex() && !domain.communicates(x, z) {
        return 0.0;
    }
    law.density_radial(len / tau) / law.c0() * tau.powi(-(N as i32 + 2))
        * d.dot(&x.normal).abs()
        * d.dot(&z.normal).abs()
}

/// Gate for coupling attempts.
#[derive(Debug, Clone, PartialEq)]
pub enum CouplingMode<const N: usize> {
    Convex,
    /// Attempts only when the primary collision and the stationary chain's
    /// next collision both lie in the patch `F`.
    Patch(Patches<N>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingConfig {
    /// Minimal speed of both chains for a coupling attempt.
    pub speed_threshold: f64,
    pub residual_budget: usize,
    pub max_joint_events: u64,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self { speed_threshold: 1.0, residual_budget: RESIDUAL_BUDGET, max_joint_events: MAX_JOINT_EVENTS }
    }
}

/// Absolute time and boundary point shared by both chains after a
/// successful coupling attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharedTarget<const N: usize> {
    pub time: Clock,
    pub point: BoundaryPoint<N>,
}

/// An innovation, possibly tied to a pre-computed next collision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Draw<const N: usize> {
    pub innovation: ReflectionInnovation<N>,
    pub target: Option<SharedTarget<N>>,
}

impl<const N: usize> Draw<N> {
    fn plain(innovation: ReflectionInnovation<N>) -> Self {
        Self { innovation, target: None }
    }
}

/// Outcome of one maximal-coupling draw. Target times are relative to the
/// departure from `x0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingAttempt<const N: usize> {
    pub success: bool,
    pub r: f64,
    pub theta: AngleVector<N>,
    pub r_tilde: f64,
    pub theta_tilde: AngleVector<N>,
    pub target: Option<(f64, BoundaryPoint<N>)>,
    /// Residual proposals used on failure.
    pub proposals: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Identical,
    Lambda,
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaDraw<const N: usize> {
    pub branch: Branch,
    pub q: Draw<N>,
    pub q_tilde: Draw<N>,
    /// Success flag of the maximal-coupling attempt in the `Lambda` branch.
    pub lambda_success: Option<bool>,
}

/// Position of one chain at a joint event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pos<const N: usize> {
    Boundary(BoundaryPoint<N>),
    /// Interior point with the chain's next collision point and its delay.
    Interior { x: Vector<N>, next: BoundaryPoint<N>, lag: f64 },
}

/// The coupled state `(X, V, X~, V~, Z)` between joint events.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState<const N: usize> {
    pub primary: ParticleState<N>,
    pub stationary: ParticleState<N>,
    pub z: Option<Draw<N>>,
    pub now: Clock,
    pub merged: bool,
    pub merge_time: Option<f64>,
    pub joint_events: u64,
    pub lambda_attempts: u64,
    pub lambda_successes: u64,
}

impl<const N: usize> CoupledState<N> {
    pub fn new(primary: ParticleState<N>, stationary: ParticleState<N>) -> Self {
        let mut s = Self {
            primary,
            stationary,
            z: None,
            now: Clock::ZERO,
            merged: false,
            merge_time: None,
            joint_events: 0,
            lambda_attempts: 0,
            lambda_successes: 0,
        };
        s.check_merge();
        s
    }

    /// Whether both chains are bitwise identical (collision counters aside).
    pub fn chains_identical(&self) -> bool {
        let (a, b) = (&self.primary, &self.stationary);
        a.t == b.t && a.x == b.x && a.v == b.v && a.location == b.location && a.next == b.next
    }

    fn check_merge(&mut self) {
        if !self.merged && self.z.is_none() && self.chains_identical() {
            self.merged = true;
            self.merge_time = Some(self.now.value());
        }
    }
}

/// Record of one joint event: the case-table row applied (1 to 10).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub row: u8,
    pub time: f64,
    pub z_before: bool,
    pub z_after: bool,
    pub lambda_success: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CouplingOutcome {
    Merged(f64),
    Censored(f64),
}

#[derive(Debug, Clone)]
pub struct Coupler<const N: usize> {
    pub transport: FreeTransport<N>,
    pub mode: CouplingMode<N>,
    pub config: CouplingConfig,
}

impl<const N: usize> Coupler<N> {
    pub fn new(transport: FreeTransport<N>, mode: CouplingMode<N>, config: CouplingConfig) -> Self {
        Self { transport, mode, config }
    }

    fn domain(&self) -> &Domain<N> {
        &self.transport.domain
    }

    fn wall(&self) -> &VelocityLaw<N> {
        &self.transport.wall
    }

    fn mu(&self, x: &BoundaryPoint<N>, tau: f64, z: &BoundaryPoint<N>) -> f64 {
        hitting_density(self.domain(), self.wall(), x, tau, z)
    }

    /// Maximal coupling of the diffuse emission from `x0` with the emission
    /// of a chain currently at `xt0` moving with `vt0`.
    pub fn maximal_coupling_draw<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        x0: &BoundaryPoint<N>,
        xt0: &Vector<N>,
        vt0: &Vector<N>,
    ) -> Result<CouplingAttempt<N>> {
        let hit = self.domain().hit_from_interior(xt0, vt0)?;
        self.lambda(rng, x0, &hit.point, hit.time)
    }

    fn lambda<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        x0: &BoundaryPoint<N>,
        xt: &BoundaryPoint<N>,
        lag: f64,
    ) -> Result<CouplingAttempt<N>> {
        let diameter = self.domain().diameter();
        let bound = diameter / self.config.speed_threshold.min(1.0);
        if lag > bound + self.domain().boundary_tolerance() {
            return Err(Error::LagTooLarge { lag, diameter });
        }
        let (r, theta) = self.wall().sample_upsilon(rng);
        let hit = self.domain().hit_from_boundary(x0, &(vartheta(x0, &theta) * r))?;
        let p = self.mu(x0, hit.time, &hit.point);
        let q = if hit.time > lag { self.mu(xt, hit.time - lag, &hit.point) } else { 0.0 };
        let w: f64 = rng.random();
        if p > 0.0 && w * p <= q {
            let d = hit.point.x - xt.x;
            let len = d.norm();
            let theta_tilde = vartheta_inverse(xt, &(d / len))?;
            return Ok(CouplingAttempt {
                success: true,
                r,
                theta,
                r_tilde: len / (hit.time - lag),
                theta_tilde,
                target: Some((hit.time, hit.point)),
                proposals: 0,
            });
        }
        for k in 1..=self.config.residual_budget {
            let (rt, tht) = self.wall().sample_upsilon(rng);
            let h = self.domain().hit_from_boundary(xt, &(vartheta(xt, &tht) * rt))?;
            let mt = self.mu(xt, h.time, &h.point);
            let m0 = self.mu(x0, h.time + lag, &h.point);
            let u: f64 = rng.random();
            if mt <= 0.0 || u * mt < mt - m0.min(mt) {
                return Ok(CouplingAttempt {
                    success: false,
                    r,
                    theta,
                    r_tilde: rt,
                    theta_tilde: tht,
                    target: None,
                    proposals: k,
                });
            }
        }
        Err(Error::ResidualRejectionBudgetExceeded(self.config.residual_budget))
    }

    fn lambda_allowed(&self, x: &BoundaryPoint<N>, v_minus: &Vector<N>, next: &BoundaryPoint<N>, vt: &Vector<N>) -> bool {
        let a = self.config.speed_threshold;
        if !(v_minus.norm() >= a && vt.norm() >= a) {
            return false;
        }
        match &self.mode {
            CouplingMode::Convex => true,
            CouplingMode::Patch(p) => p.in_f(self.domain(), x) && p.in_f(self.domain(), next),
        }
    }

    /// Draws the pair of innovations at a joint event where at least one
    /// chain is on the boundary.
    pub fn gamma_draw<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        now: &Clock,
        x: &Pos<N>,
        v_minus: &Vector<N>,
        xt: &Pos<N>,
        vt_minus: &Vector<N>,
    ) -> Result<GammaDraw<N>> {
        if let (Pos::Boundary(a), Pos::Boundary(b)) = (x, xt) {
            if a.x == b.x {
                let q = Draw::plain(self.wall().sample_innovation(rng));
                return Ok(GammaDraw { branch: Branch::Identical, q, q_tilde: q, lambda_success: None });
            }
        }
        if let (Pos::Boundary(a), Pos::Interior { next, lag, .. }) = (x, xt) {
            if self.lambda_allowed(a, v_minus, next, vt_minus) {
                let u: f64 = rng.random();
                let att = self.lambda(rng, a, next, *lag)?;
                let target = att.target.map(|(s, point)| SharedTarget { time: now.add(s), point });
                let q = Draw { innovation: ReflectionInnovation { u, r: att.r, theta: att.theta }, target };
                let q_tilde =
                    Draw { innovation: ReflectionInnovation { u, r: att.r_tilde, theta: att.theta_tilde }, target };
                return Ok(GammaDraw { branch: Branch::Lambda, q, q_tilde, lambda_success: Some(att.success) });
            }
        }
        let q = Draw::plain(self.wall().sample_innovation(rng));
        let q_tilde = Draw::plain(self.wall().sample_innovation(rng));
        Ok(GammaDraw { branch: Branch::Independent, q, q_tilde, lambda_success: None })
    }

    /// Reflects `state` at its cached event with `draw`, pinning the next
    /// event to the shared target after an unguarded diffuse emission.
    fn apply<R: Rng + ?Sized>(&self, state: &mut ParticleState<N>, draw: &Draw<N>, rng: &mut R) -> Result<()> {
        let outcome = self.transport.fire_event(state, &draw.innovation, rng)?;
        if let (Reflection::Diffuse, Some(t)) = (outcome, draw.target) {
            state.next = Some(Event { time: t.time, point: t.point });
        }
        Ok(())
    }

    /// Advances the pair to the next joint event and applies one row of the
    /// case table.
    pub fn coupled_step<R: Rng + ?Sized>(&self, state: &mut CoupledState<N>, rng: &mut R) -> Result<StepReport> {
        let ep = self.transport.schedule_next(&mut state.primary)?;
        let es = self.transport.schedule_next(&mut state.stationary)?;
        let now = if ep.time <= es.time { ep.time } else { es.time };
        let x_hits = ep.time == now;
        let xt_hits = es.time == now;
        let z_before = state.z.is_some();
        state.now = now;
        state.joint_events += 1;
        if state.joint_events > self.config.max_joint_events {
            return Err(Error::ExplosionGuardTripped(state.joint_events));
        }
        let v_minus = state.primary.v;
        let vt_minus = state.stationary.v;
        let x_pos = if x_hits {
            Pos::Boundary(ep.point)
        } else {
            Pos::Interior { x: state.primary.position_at(&now), next: ep.point, lag: ep.time.since(&now) }
        };
        let xt_pos = if xt_hits {
            Pos::Boundary(es.point)
        } else {
            Pos::Interior { x: state.stationary.position_at(&now), next: es.point, lag: es.time.since(&now) }
        };
        let g = self.gamma_draw(rng, &now, &x_pos, &v_minus, &xt_pos, &vt_minus)?;
        if g.branch == Branch::Lambda {
            state.lambda_attempts += 1;
            if g.lambda_success == Some(true) {
                state.lambda_successes += 1;
            }
        }
        let row = match (x_hits, xt_hits) {
            (true, false) => {
                self.apply(&mut state.primary, &g.q, rng)?;
                let lam = g.branch == Branch::Lambda;
                if state.z.is_none() {
                    state.z = Some(g.q_tilde);
                    if lam {
                        1
                    } else {
                        2
                    }
                } else if lam {
                    5
                } else {
                    6
                }
            }
            (true, true) => {
                let same = ep.point.x == es.point.x;
                self.apply(&mut state.primary, &g.q, rng)?;
                let row = match (state.z.take(), same) {
                    (None, true) => {
                        if v_minus == vt_minus {
                            let v = state.primary.v;
                            self.transport.land(&mut state.stationary, es, v)?;
                        } else {
                            self.apply(&mut state.stationary, &g.q, rng)?;
                        }
                        3
                    }
                    (None, false) => {
                        self.apply(&mut state.stationary, &g.q_tilde, rng)?;
                        4
                    }
                    (Some(z), true) => {
                        self.apply(&mut state.stationary, &z, rng)?;
                        7
                    }
                    (Some(z), false) => {
                        self.apply(&mut state.stationary, &z, rng)?;
                        8
                    }
                };
                row
            }
            (false, true) => match state.z.take() {
                None => {
                    self.apply(&mut state.stationary, &g.q_tilde, rng)?;
                    9
                }
                Some(z) => {
                    self.apply(&mut state.stationary, &z, rng)?;
                    10
                }
            },
            (false, false) => unreachable!("a joint event involves at least one chain"),
        };
        state.check_merge();
        Ok(StepReport {
            row,
            time: now.value(),
            z_before,
            z_after: state.z.is_some(),
            lambda_success: g.lambda_success,
        })
    }

    /// Runs until the chains merge or the next joint event exceeds `t_max`.
    pub fn run_until_coupled<R: Rng + ?Sized>(
        &self,
        state: &mut CoupledState<N>,
        t_max: f64,
        rng: &mut R,
    ) -> Result<CouplingOutcome> {
        loop {
            if let Some(t) = state.merge_time {
                return Ok(CouplingOutcome::Merged(t));
            }
            let ep = self.transport.schedule_next(&mut state.primary)?;
            let es = self.transport.schedule_next(&mut state.stationary)?;
            let next = if ep.time <= es.time { ep.time } else { es.time };
            if next.value() > t_max {
                return Ok(CouplingOutcome::Censored(t_max));
            }
            self.coupled_step(state, rng)?;
        }
    }

    /// Draws the primary chain from `f0` and the stationary chain from
    /// equilibrium.
    pub fn new_pair<R: Rng + ?Sized>(&self, f0: &InitialLaw<N>, rng: &mut R) -> Result<CoupledState<N>> {
        let primary = self.transport.initial_state(f0, rng)?;
        let stationary = self.transport.initial_state(&InitialLaw::equilibrium(), rng)?;
        Ok(CoupledState::new(primary, stationary))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PatchSearch, Shape};
    use crate::rng::{stream, Purpose};
    use crate::transport::AlphaField;
    use nalgebra::Vector2;

    fn disk_coupler(alpha: f64) -> Coupler<2> {
        let d = Domain::new(Shape::Ball { center: Vector2::zeros(), radius: 1.0 }).unwrap();
        let t = FreeTransport::new(d, VelocityLaw::maxwellian(1.0).unwrap(), AlphaField::Constant(alpha)).unwrap();
        Coupler::new(t, CouplingMode::Convex, CouplingConfig::default())
    }

    fn annulus_coupler() -> Coupler<2> {
        let d = Domain::new(Shape::Annulus { center: Vector2::zeros(), inner: 1.0, outer: 2.0 }).unwrap();
        let p = d.find_patches(&PatchSearch::default()).unwrap();
        let t = FreeTransport::new(d, VelocityLaw::maxwellian(1.0).unwrap(), AlphaField::Constant(1.0)).unwrap();
        Coupler::new(t, CouplingMode::Patch(p), CouplingConfig::default())
    }

    #[test]
    fn density_example_on_disk() {
        let c = disk_coupler(1.0);
        let x = c.domain().boundary_point(&Vector2::new(1.0, 0.0));
        let z = c.domain().boundary_point(&Vector2::new(-1.0, 0.0));
        let m1 = (-0.5f64).exp() / (2.0 * std::f64::consts::PI);
        let expected = m1 / c.wall().c0() * 2f64.powi(-4) * 2.0 * 2.0;
        assert!((c.mu(&x, 2.0, &z) - expected).abs() < 1e-15);
        // Tangential chord.
        let t = BoundaryPoint { x: x.x, normal: Vector2::new(0.0, 1.0) };
        assert_eq!(c.mu(&t, 2.0, &z), 0.0);
    }

    #[test]
    fn density_zero_without_visibility() {
        let c = annulus_coupler();
        let x = c.domain().boundary_point(&Vector2::new(2.0, 0.0));
        let z = c.domain().boundary_point(&Vector2::new(-2.0, 0.0));
        assert_eq!(c.mu(&x, 3.0, &z), 0.0);
    }

    #[test]
    fn zero_lag_same_point_always_succeeds() {
        let c = disk_coupler(1.0);
        let mut rng = stream(1, Purpose::Validation, 0);
        let x0 = c.domain().boundary_point(&Vector2::new(1.0, 0.0));
        for _ in 0..1000 {
            let a = c.lambda(&mut rng, &x0, &x0, 0.0).unwrap();
            assert!(a.success);
            assert!((a.r - a.r_tilde).abs() < 1e-9 * a.r.max(1.0));
            assert!((a.theta.angles[0] - a.theta_tilde.angles[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn lag_too_large_is_reported() {
        let c = disk_coupler(1.0);
        let mut rng = stream(2, Purpose::Validation, 0);
        let x0 = c.domain().boundary_point(&Vector2::new(1.0, 0.0));
        let xt = c.domain().boundary_point(&Vector2::new(-1.0, 0.0));
        assert!(matches!(c.lambda(&mut rng, &x0, &xt, 2.5), Err(Error::LagTooLarge { .. })));
    }

    #[test]
    fn gamma_branches() {
        let c = disk_coupler(1.0);
        let mut rng = stream(3, Purpose::Validation, 0);
        let bp = c.domain().boundary_point(&Vector2::new(1.0, 0.0));
        let v = Vector2::new(2.0, 0.0);
        let g = c.gamma_draw(&mut rng, &Clock::ZERO, &Pos::Boundary(bp), &v, &Pos::Boundary(bp), &v).unwrap();
        assert_eq!(g.branch, Branch::Identical);
        assert_eq!(g.q, g.q_tilde);
        let next = c.domain().boundary_point(&Vector2::new(-1.0, 0.0));
        let xt = Pos::Interior { x: Vector2::zeros(), next, lag: 2.0 };
        let g = c.gamma_draw(&mut rng, &Clock::ZERO, &Pos::Boundary(bp), &v, &xt, &Vector2::new(-0.5, 0.0)).unwrap();
        assert_eq!(g.branch, Branch::Independent);
        let xt = Pos::Interior { x: Vector2::zeros(), next, lag: 1.0 };
        let g = c.gamma_draw(&mut rng, &Clock::ZERO, &Pos::Boundary(bp), &v, &xt, &Vector2::new(-1.0, 0.0)).unwrap();
        assert_eq!(g.branch, Branch::Lambda);
        assert_eq!(g.q.innovation.u, g.q_tilde.innovation.u);
    }

    #[test]
    fn identical_start_is_merged_at_zero() {
        let c = disk_coupler(1.0);
        let mut rng = stream(4, Purpose::Validation, 0);
        let s = c.transport.initial_state(&InitialLaw::equilibrium(), &mut rng).unwrap();
        let mut pair = CoupledState::new(s, s);
        assert_eq!(c.run_until_coupled(&mut pair, 10.0, &mut rng).unwrap(), CouplingOutcome::Merged(0.0));
    }

    fn audit(c: &Coupler<2>, seed: u64, steps: usize) -> [u64; 11] {
        let mut counts = [0u64; 11];
        let mut rng = stream(seed, Purpose::Validation, 0);
        let mut pair = c.new_pair(&InitialLaw::equilibrium(), &mut rng).unwrap();
        for _ in 0..steps {
            if pair.merged {
                pair = c.new_pair(&InitialLaw::equilibrium(), &mut rng).unwrap();
            }
            let r = c.coupled_step(&mut pair, &mut rng).unwrap();
            counts[r.row as usize] += 1;
            let ok = match r.row {
                1 | 2 => !r.z_before && r.z_after,
                3 | 4 => !r.z_before && !r.z_after,
                5 | 6 => r.z_before && r.z_after,
                7 | 8 | 10 => r.z_before && !r.z_after,
                9 => !r.z_before && !r.z_after,
                _ => false,
            };
            assert!(ok, "row {} with z {} -> {}", r.row, r.z_before, r.z_after);
            assert_eq!(r.lambda_success.is_some(), matches!(r.row, 1 | 5));
        }
        counts
    }

    #[test]
    fn case_table_audit_disk() {
        let counts = audit(&disk_coupler(1.0), 5, 200_000);
        // Joint events and shared targets drive rows 3, 7 and 10.
        for row in [1, 2, 3, 5, 6, 9, 10] {
            assert!(counts[row] > 0, "row {row} never visited: {counts:?}");
        }
    }

    #[test]
    fn merged_pairs_stay_identical() {
        let c = disk_coupler(0.5);
        let mut rng = stream(6, Purpose::Validation, 0);
        let mut merged = 0;
        while merged < 20 {
            let mut pair = c.new_pair(&InitialLaw::equilibrium(), &mut rng).unwrap();
            if let CouplingOutcome::Merged(_) = c.run_until_coupled(&mut pair, 1000.0, &mut rng).unwrap() {
                merged += 1;
                for _ in 0..100 {
                    let r = c.coupled_step(&mut pair, &mut rng).unwrap();
                    assert_eq!(r.row, 3);
                    assert!(pair.chains_identical());
                }
            }
        }
    }

    #[test]
    fn annulus_pairs_merge() {
        let c = annulus_coupler();
        let mut rng = stream(7, Purpose::Validation, 0);
        let mut merged = 0;
        for _ in 0..50 {
            let mut pair = c.new_pair(&InitialLaw::equilibrium(), &mut rng).unwrap();
            if let CouplingOutcome::Merged(_) = c.run_until_coupled(&mut pair, 5000.0, &mut rng).unwrap() {
                merged += 1;
            }
        }
        assert!(merged > 25, "{merged}");
    }
}
