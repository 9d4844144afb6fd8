//! Spectral Galerkin simulator and Monte Carlo laboratory for stochastic convective
//! Brinkman–Forchheimer equations on the 2π-periodic box.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod checkpoint;
pub mod config;
pub mod constants;
pub mod coupling;
pub mod error;
pub mod experiment;
pub mod field;
pub mod integrator;
pub mod invariants;
pub mod noise;
pub mod operators;
pub mod records;
pub mod rng;
pub mod stats;
pub mod transform;
pub mod verify;

pub use basis::{BasisSpec, SpectralBasis};
pub use constants::{HarnackConstants, Regime};
pub use coupling::{Coupler, CouplingState, MeasureMode};
pub use error::{Error, Result};
pub use field::{Norm, RawField, VelocityField};
pub use integrator::{EnergyLedger, SimConfig, Stepper};
pub use noise::{NoiseIncrement, NoiseModel, NoiseSpec};
pub use operators::PhysParams;
pub use rng::RngKey;
pub use stats::Estimate;
pub use transform::{PhysicalField, Workspace};
pub use verify::{Ensemble, ObservableF};
