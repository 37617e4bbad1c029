//! Finite-volume solver for the age-structured mean-field density.

mod grid;
mod phi;
mod run;
mod scheme;

pub use grid::DensityGrid;
pub(crate) use grid::cell_center;
pub use phi::InteractionMatrix;
pub use run::{
    cfl_check, default_dt, lambda_bound, opinion_totals, run_pde, run_pde_with, CflReport, OpinionTotals, PdeOutput,
    PdeRunConfig, Snapshot, StepDiagnostics, CFL_SAFETY, LAMBDA_MAX,
};
pub use scheme::{
    age_half_step, interaction_field, opinion_step, opinion_step_column, strang_step, InteractionField,
    StrangStepper,
};
