//! Simulation lab for the one-dimensional stochastic heat equation
//! `∂ₜu = κ∂ₓₓu + σ(u)ẇ` driven by space-time white noise.

pub mod estimators;
pub mod export;
pub mod kernel;
pub mod model;
pub mod quad;
pub mod noise;
pub mod oracle;
pub(crate) mod spectral;
pub mod solver;

pub use model::{Field, Grid, InitKind, InitialData, ModelError, Sigma, SigmaSpec, SimConfig};
