//! Diagnostics of densities and the closed-form reductions used as oracles.

mod clusters;
mod constructions;
mod diagnostics;
mod mean;
mod mk;

pub use clusters::{cluster_detect, cluster_detect_with, Cluster, ClusterThresholds};
pub use constructions::{
    delta_kernel_reference, mean_field_semigroup, ou_reference_solution, ou_semigroup, tau_zero_reference,
    TauZeroReference,
};
pub use diagnostics::{compute_diagnostics, variance_closed_form, Diagnostics};
pub use mean::check_mean_evolution;
pub use mk::{mk_construct_and_check, mk_refinement_study, MkCheck, MkProblem, MkReport, ResidualRow};
