//! Event-driven simulation of a collisionless gas in a bounded domain with
//! Maxwell wall reflection, and an exact trajectory coupling used to measure
//! the rate of convergence to equilibrium.

pub mod coupling;
pub mod error;
pub mod geometry;
pub mod quadrature;
pub mod rng;
pub mod run;
pub mod scenario;
pub mod stats;
pub mod transport;
pub mod validation;
pub mod velocity_law;

pub use error::{Error, Result};
