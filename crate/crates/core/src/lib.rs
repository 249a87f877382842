//! Wave-packet dynamics of the E×ε Jahn-Teller model realized by a
//! two-level system coupled to two degenerate cavity modes.
//!
//! The static model ([`model`], [`berry`], [`observables::timescales`],
//! [`hermite`]) is generic over [`scalar::Real`]; the grid propagator, the
//! reduced-state observables and the number-basis oracle work in `f64`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod berry;
pub mod config;
pub mod fock_oracle;
pub mod grid;
pub mod hermite;
pub mod io;
pub mod model;
pub mod observables;
pub mod propagator;
pub mod scalar;

pub use berry::{AdiabaticAngles, BerryError, PhaseMap};
pub use model::{ModelError, ModelParams, PotentialMatrix, SurfaceGeometry};
pub use scalar::Real;

/// Double-precision model parameters, the type used by the propagator.
pub type Params = ModelParams<f64>;
/// Single-precision model parameters.
pub type Params32 = ModelParams<f32>;
pub type Geometry = SurfaceGeometry<f64>;
pub type Angles = AdiabaticAngles<f64>;
pub type PhaseMap64 = PhaseMap<f64>;
