//! Experiment configs, the built-in presets and the runner that writes CSV artifacts.

mod config;
mod output;
mod presets;
mod runner;

pub use config::{
    parse_config, resolve_config, CheckKind, ExperimentConfig, LawSpec, Mode, ModelSection, NamedLaw, NumericsSection,
    OutputSection,
};
pub use output::{
    ArtifactWriter, ClusterRow, ConvergenceRow, DiagnosticsRow, LambdaRow, SnapshotRow, SteadyDensityRow, TotalsRow,
    TrajectoryRow, VarianceRow,
};
pub use presets::{preset, Scale, PRESETS};
pub use runner::{run_experiment, ClusterSummary, Summary, SUMMARY_VERSION};
