//! Age-structured bounded-confidence opinion dynamics.
//!
//! - [`sde`]: N-agent Euler–Maruyama simulator with ageing and opinion resets.
//! - [`pde`]: finite-volume solver for the mean-field density ρ(t, a, x).
//! - [`steady`]: stationary states as fixed points of the interaction-density map.
//! - [`reductions`]: diagnostics and closed-form reference constructions.
//! - [`experiment`]: configs, presets and the artifact writer behind the CLI.

pub mod error;
pub mod experiment;
pub mod model;
pub mod pde;
pub mod quadrature;
pub mod reductions;
pub mod sde;
pub mod steady;

pub use error::{Error, Result};
