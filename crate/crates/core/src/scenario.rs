//! JSON scenario documents and their translation into simulation objects.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coupling::{Coupler, CouplingConfig, CouplingMode, MAX_JOINT_EVENTS, RESIDUAL_BUDGET};
use crate::error::{Error, Result};
use crate::geometry::implicit::{Peanut, Superellipsoid};
use crate::geometry::{Domain, PatchSearch, Shape, Vector};
use crate::transport::{AlphaField, FreeTransport, InitialLaw, SpatialLaw, VelocityInit};
use crate::velocity_law::{LawKind, VelocityLaw};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Ball {
        #[serde(default)]
        center: Option<Vec<f64>>,
        radius: f64,
    },
    Ellipse {
        #[serde(default)]
        center: Option<Vec<f64>>,
        semi_axes: Vec<f64>,
    },
    Annulus {
        #[serde(default)]
        center: Option<Vec<f64>>,
        inner: f64,
        outer: f64,
    },
    Implicit(ImplicitSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ImplicitSpec {
    Superellipse {
        #[serde(default)]
        center: Option<Vec<f64>>,
        semi_axes: Vec<f64>,
        exponent: f64,
    },
    Peanut {
        #[serde(default)]
        center: Option<Vec<f64>>,
        a: f64,
        c: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawSpec {
    Maxwellian { theta: f64 },
    /// Density `|v|^{-alpha}` on the unit ball.
    TruncatedPower { alpha: f64 },
    Tabulated { speeds: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaSpec {
    Constant { value: f64 },
    /// `base + amplitude * cos(frequency * angle)` over the boundary angle.
    Harmonic { base: f64, amplitude: f64, frequency: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PositionSpec {
    Uniform,
    Point { x: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocitySpec {
    /// The wall law.
    Equilibrium,
    Maxwellian { theta: f64 },
    TruncatedPower { alpha: f64 },
    Tabulated { speeds: Vec<f64>, values: Vec<f64> },
    Point { v: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default = "default_position")]
    pub position: PositionSpec,
    #[serde(default = "default_velocity")]
    pub velocity: VelocitySpec,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self { position: default_position(), velocity: default_velocity() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSpec {
    Convex,
    Patch,
    /// Convex for balls, ellipses and convex implicit shapes, patch otherwise.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    #[serde(default = "default_per_decade")]
    pub per_decade: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { t_min: default_t_min(), per_decade: default_per_decade() }
    }
}

/// A complete run description. Every field except `domain` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    pub domain: DomainSpec,
    #[serde(default = "default_wall")]
    pub wall_law: LawSpec,
    #[serde(default = "default_alpha")]
    pub alpha: AlphaSpec,
    /// Declared lower bound of the reflection field; must lie in (0, 1].
    #[serde(default = "default_alpha0")]
    pub alpha0: f64,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default = "default_pairs")]
    pub n_pairs: u64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default)]
    pub grid: GridSpec,
    /// Tail-fit window; defaults to `[10, t_max / 2]`.
    #[serde(default)]
    pub fit_window: Option<[f64; 2]>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: ModeSpec,
    #[serde(default = "default_threshold")]
    pub speed_threshold: f64,
    /// Time at which coupled marginals are compared with independent chains.
    #[serde(default = "default_probe_time")]
    pub probe_time: f64,
    /// Size of each marginal-fidelity sample (capped at `n_pairs`).
    #[serde(default = "default_marginal_samples")]
    pub marginal_samples: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_dimension() -> usize {
    2
}
fn default_wall() -> LawSpec {
    LawSpec::Maxwellian { theta: 1.0 }
}
fn default_alpha() -> AlphaSpec {
    AlphaSpec::Constant { value: 1.0 }
}
fn default_alpha0() -> f64 {
    1.0
}
fn default_position() -> PositionSpec {
    PositionSpec::Uniform
}
fn default_velocity() -> VelocitySpec {
    VelocitySpec::Equilibrium
}
fn default_pairs() -> u64 {
    10_000
}
fn default_t_max() -> f64 {
    200.0
}
fn default_t_min() -> f64 {
    0.1
}
fn default_per_decade() -> usize {
    40
}
fn default_seed() -> u64 {
    1
}
fn default_mode() -> ModeSpec {
    ModeSpec::Auto
}
fn default_threshold() -> f64 {
    1.0
}
fn default_probe_time() -> f64 {
    5.0
}
fn default_marginal_samples() -> u64 {
    10_000
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl Scenario {
    /// The unit disk with every other field at its default.
    pub fn unit_disk() -> Self {
        serde_json::from_str(r#"{"domain": {"kind": "ball", "radius": 1.0}}"#).expect("static scenario")
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let s: Scenario = serde_json::from_str(&text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn fit_window(&self) -> (f64, f64) {
        match self.fit_window {
            Some([a, b]) => (a, b),
            None => (10.0, self.t_max / 2.0),
        }
    }

    /// Checks that do not depend on the dimension parameter.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(2..=4).contains(&self.dimension) {
            return bad("dimension must be 2, 3 or 4");
        }
        if !(self.alpha0 > 0.0 && self.alpha0 <= 1.0) {
            return bad("alpha0 must lie in (0, 1]");
        }
        let (lo, hi) = match self.alpha {
            AlphaSpec::Constant { value } => (value, value),
            AlphaSpec::Harmonic { base, amplitude, .. } => (base - amplitude.abs(), base + amplitude.abs()),
        };
        if lo < self.alpha0 || hi > 1.0 {
            return bad("reflection field must satisfy alpha0 <= alpha <= 1 on the boundary");
        }
        if self.n_pairs < 1 {
            return bad("n_pairs must be at least 1");
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return bad("t_max must be positive");
        }
        if !(self.grid.t_min > 0.0 && self.grid.t_min < self.t_max) || self.grid.per_decade == 0 {
            return bad("grid needs 0 < t_min < t_max and per_decade >= 1");
        }
        let (a, b) = self.fit_window();
        if !(a > 0.0 && a < b) {
            return bad("fit window must satisfy 0 < t_lo < t_hi");
        }
        if !(self.speed_threshold > 0.0) {
            return bad("speed_threshold must be positive");
        }
        if !(self.probe_time >= 0.0) {
            return bad("probe_time must be non-negative");
        }
        Ok(())
    }

    pub fn build<const N: usize>(&self) -> Result<Model<N>> {
        self.validate()?;
        if self.dimension != N {
            return Err(Error::InvalidConfig(format!("scenario is {}-dimensional", self.dimension)));
        }
        let domain = Domain::new(build_shape::<N>(&self.domain)?)?;
        let wall = VelocityLaw::new(law_kind(&self.wall_law))?;
        let alpha = match self.alpha {
            AlphaSpec::Constant { value } => AlphaField::Constant(value),
            AlphaSpec::Harmonic { base, amplitude, frequency } => AlphaField::Harmonic { base, amplitude, frequency },
        };
        let transport = FreeTransport::new(domain, wall, alpha)?;
        let initial = self.initial_law::<N>()?;
        initial.validate(&transport.domain)?;
        let convex = transport.domain.is_convex();
        let mode = match (self.mode, convex) {
            (ModeSpec::Convex, false) => {
                return Err(Error::InvalidConfig("convex mode requested on a non-convex domain".into()))
            }
            (ModeSpec::Convex, true) | (ModeSpec::Auto, true) => CouplingMode::Convex,
            (ModeSpec::Patch, _) | (ModeSpec::Auto, false) => {
                CouplingMode::Patch(transport.domain.find_patches(&PatchSearch::default())?)
            }
        };
        let config = CouplingConfig {
            speed_threshold: self.speed_threshold,
            residual_budget: RESIDUAL_BUDGET,
            max_joint_events: MAX_JOINT_EVENTS,
        };
        Ok(Model { coupler: Coupler::new(transport, mode, config), initial })
    }

    fn initial_law<const N: usize>(&self) -> Result<InitialLaw<N>> {
        let spatial = match &self.initial.position {
            PositionSpec::Uniform => SpatialLaw::Uniform,
            PositionSpec::Point { x } => SpatialLaw::Point(vector::<N>(x, "initial point")?),
            PositionSpec::Ball { center, radius } => {
                SpatialLaw::Ball { center: vector::<N>(center, "initial ball centre")?, radius: *radius }
            }
        };
        let velocity = match &self.initial.velocity {
            VelocitySpec::Equilibrium => VelocityInit::Equilibrium,
            VelocitySpec::Maxwellian { theta } => {
                VelocityInit::Law(VelocityLaw::new(LawKind::Maxwellian { theta: *theta })?)
            }
            VelocitySpec::TruncatedPower { alpha } => {
                VelocityInit::Law(VelocityLaw::new(LawKind::TruncatedPower { alpha: *alpha })?)
            }
            VelocitySpec::Tabulated { speeds, values } => VelocityInit::Law(VelocityLaw::new(
                LawKind::TabulatedRadial { speeds: speeds.clone(), values: values.clone() },
            )?),
            VelocitySpec::Point { v } => VelocityInit::Point(vector::<N>(v, "initial velocity")?),
        };
        Ok(InitialLaw { spatial, velocity })
    }
}

/// Everything a run needs: the coupler (transport, gate, budgets) and `f0`.
#[derive(Debug, Clone)]
pub struct Model<const N: usize> {
    pub coupler: Coupler<N>,
    pub initial: InitialLaw<N>,
}

fn law_kind(spec: &LawSpec) -> LawKind {
    match spec {
        LawSpec::Maxwellian { theta } => LawKind::Maxwellian { theta: *theta },
        LawSpec::TruncatedPower { alpha } => LawKind::TruncatedPower { alpha: *alpha },
        LawSpec::Tabulated { speeds, values } => {
            LawKind::TabulatedRadial { speeds: speeds.clone(), values: values.clone() }
        }
    }
}

fn vector<const N: usize>(v: &[f64], what: &str) -> Result<Vector<N>> {
    if v.len() != N {
        return Err(Error::InvalidConfig(format!("{what} must have {N} components, got {}", v.len())));
    }
    Ok(Vector::<N>::from_column_slice(v))
}

fn center<const N: usize>(c: &Option<Vec<f64>>) -> Result<Vector<N>> {
    match c {
        Some(c) => vector::<N>(c, "domain centre"),
        None => Ok(Vector::<N>::zeros()),
    }
}

fn build_shape<const N: usize>(spec: &DomainSpec) -> Result<Shape<N>> {
    Ok(match spec {
        DomainSpec::Ball { center: c, radius } => Shape::Ball { center: center::<N>(c)?, radius: *radius },
        DomainSpec::Ellipse { center: c, semi_axes } => {
            Shape::Ellipsoid { center: center::<N>(c)?, semi_axes: vector::<N>(semi_axes, "semi_axes")? }
        }
        DomainSpec::Annulus { center: c, inner, outer } => {
            Shape::Annulus { center: center::<N>(c)?, inner: *inner, outer: *outer }
        }
        DomainSpec::Implicit(ImplicitSpec::Superellipse { center: c, semi_axes, exponent }) => {
            Shape::Implicit(Arc::new(Superellipsoid {
                center: center::<N>(c)?,
                semi_axes: vector::<N>(semi_axes, "semi_axes")?,
                exponent: *exponent,
            }))
        }
        DomainSpec::Implicit(ImplicitSpec::Peanut { center: c, a, c: waist }) => {
            Shape::Implicit(Arc::new(Peanut { center: center::<N>(c)?, a: *a, c: *waist }))
        }
    })
}
