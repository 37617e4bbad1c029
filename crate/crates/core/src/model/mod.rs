//! Model ingredients shared by the agent and density simulators.

mod age_profile;
mod distribution;
mod initial;
mod interaction;
mod kernel;
mod params;

pub use age_profile::{build_mk_kernel, stationary_age_profile, DeathRate, SUPPORT_TOLERANCE};
pub use distribution::{DistributionShape, OpinionDistribution, CDF_POINTS};
pub use initial::InitialDensity;
pub use interaction::InteractionFunction;
pub use kernel::AgeKernel;
pub use params::ModelParams;
