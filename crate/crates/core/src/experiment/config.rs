use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::presets::{preset, Scale};
use crate::model::{AgeKernel, DeathRate, DistributionShape, InteractionFunction, ModelParams, OpinionDistribution};
use crate::pde::{cfl_check, default_dt};
use crate::steady::{classical_branches, restrict, ClassicalOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Sde,
    Pde,
    SteadyState,
    TauSweep,
    ReductionCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// Age-conditional second moment against its closed form (φ ≡ 1, M ≡ 1).
    Variance,
    /// McKendrick construction and its interior residual under refinement.
    Mk,
    /// Same-age kernel, τ = 0 and OU constructions against the full solver.
    Oracles,
}

/// Opinion laws by name, including the two classical stationary states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedLaw {
    Uniform,
    ExpSkew,
    Bimodal,
    /// One-cluster stationary state of the classical mean-field equation.
    Mu1,
    /// Two-cluster stationary state of the classical mean-field equation.
    Mu2,
}

/// A named law or an explicit shape table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LawSpec {
    Named(NamedLaw),
    Shape(DistributionShape),
}

impl LawSpec {
    pub fn label(&self) -> String {
        match self {
            LawSpec::Named(n) => serde_json::to_value(n)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default(),
            LawSpec::Shape(DistributionShape::Bumps { .. }) => "bumps".into(),
            LawSpec::Shape(DistributionShape::Tabulated { .. }) => "tabulated".into(),
            LawSpec::Shape(s) => format!("{s:?}").to_lowercase(),
        }
    }

    fn needs_classical(&self) -> bool {
        matches!(self, LawSpec::Named(NamedLaw::Mu1 | NamedLaw::Mu2))
    }
}

fn default_max_age() -> f64 {
    1.0
}

fn default_lo() -> f64 {
    -1.0
}

fn default_hi() -> f64 {
    1.0
}

fn default_kernel() -> AgeKernel {
    AgeKernel::Uniform
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub tau: f64,
    pub sigma: f64,
    #[serde(default = "default_max_age")]
    pub max_age: f64,
    #[serde(default = "default_lo")]
    pub opinion_lo: f64,
    #[serde(default = "default_hi")]
    pub opinion_hi: f64,
    pub interaction: InteractionFunction,
    #[serde(default = "default_kernel")]
    pub kernel: AgeKernel,
    /// Age-zero law.
    pub mu: LawSpec,
    /// Opinion law of the initial density, with uniform ages; defaults to `mu`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho0: Option<LawSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub death_rate: Option<DeathRate>,
}

impl ModelSection {
    pub fn params(&self) -> ModelParams {
        ModelParams {
            tau: self.tau,
            sigma: self.sigma,
            max_age: self.max_age,
            opinion_lo: self.opinion_lo,
            opinion_hi: self.opinion_hi,
        }
    }

    pub fn rho0(&self) -> &LawSpec {
        self.rho0.as_ref().unwrap_or(&self.mu)
    }
}

fn default_cells() -> usize {
    200
}

fn default_agents() -> usize {
    500
}

fn default_sde_dt() -> f64 {
    0.01
}

fn default_theta() -> f64 {
    1.0
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    10_000
}

fn default_factor() -> usize {
    4
}

fn default_bins() -> usize {
    50
}

fn default_levels() -> usize {
    1
}

fn default_residual_every() -> usize {
    5
}

fn default_lambda0() -> Vec<LawSpec> {
    vec![LawSpec::Named(NamedLaw::Mu1)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSection {
    #[serde(default = "default_cells")]
    pub nx: usize,
    #[serde(default = "default_cells")]
    pub na: usize,
    /// PDE timestep; the CFL default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default)]
    pub t_final: f64,
    #[serde(default = "default_agents")]
    pub n_agents: usize,
    #[serde(default = "default_sde_dt")]
    pub sde_dt: f64,
    #[serde(default)]
    pub seed: u64,
    /// Steady-state damping.
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Age steps of the steady-state propagator; the stability default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steady_na: Option<usize>,
    /// Refinement of the grid on which μ⁽¹⁾ and μ⁽²⁾ are relaxed.
    #[serde(default = "default_factor")]
    pub reference_factor: usize,
    #[serde(default = "default_lambda0")]
    pub lambda0: Vec<LawSpec>,
    #[serde(default)]
    pub taus: Vec<f64>,
    /// Bins of the agent opinion histogram used for clusters.
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    /// Grids in a refinement study, each twice as fine as the last.
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Start of the residual window of the McKendrick check; 3T/4 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_from: Option<f64>,
    #[serde(default = "default_residual_every")]
    pub residual_every: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Full-grid snapshot stride in steps; initial and final only when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<usize>,
    /// Stride of the totals, diagnostics and cluster rows; about 100 rows when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub totals_every: Option<usize>,
    /// Agent recording stride; about 100 frames when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckKind>,
    pub model: ModelSection,
    #[serde(default = "default_numerics")]
    pub numerics: NumericsSection,
    #[serde(default)]
    pub outputs: OutputSection,
}

fn default_name() -> String {
    "custom".into()
}

fn default_numerics() -> NumericsSection {
    toml::from_str("").expect("every numerics field has a default")
}

/// Reads a config file. A top-level `preset = "name"` starts from that built-in
/// (at `scale`, or the file's own `scale` key) and overrides it field by field.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    resolve_config(None, None, Some(path))
}

/// Preset, file or both; the file wins key by key.
pub fn resolve_config(name: Option<&str>, scale: Option<Scale>, file: Option<&Path>) -> Result<ExperimentConfig> {
    let mut table = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
            text.parse::<toml::Table>()
                .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        }
        None => toml::Table::new(),
    };
    let file_preset = match table.remove("preset") {
        Some(toml::Value::String(s)) => Some(s),
        Some(_) => return Err(Error::Validation(vec!["preset: expected a preset name".into()])),
        None => None,
    };
    let file_scale = match table.remove("scale") {
        Some(v) => Some(
            v.try_into::<Scale>()
                .map_err(|_| Error::Validation(vec!["scale: expected \"desk\" or \"paper\"".into()]))?,
        ),
        None => None,
    };
    let scale = scale.or(file_scale).unwrap_or(Scale::Desk);
    let merged = match name.map(str::to_owned).or(file_preset) {
        Some(p) => {
            let base = preset(&p, scale)?;
            let mut base = toml::Table::try_from(&base).map_err(|e| Error::Parse(e.to_string()))?;
            merge(&mut base, table);
            base
        }
        None => table,
    };
    let cfg: ExperimentConfig = toml::Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Validation(vec![e.message().trim().to_string()]))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Overrides `base` with `top`, descending into tables that both sides have.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) if !is_tagged(b, &t) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Tagged tables with a different `kind` replace rather than merge.
fn is_tagged(b: &toml::Table, t: &toml::Table) -> bool {
    match (b.get("kind"), t.get("kind")) {
        (Some(x), Some(y)) => x != y,
        _ => false,
    }
}

impl ExperimentConfig {
    /// Field errors first, then the CFL check of every PDE grid the run will use.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let m = &self.model;
        let n = &self.numerics;
        if let Err(e) = self.model.params().validate() {
            errs.push(format!("model: {e}"));
        }
        if let Err(e) = m.interaction.validate() {
            errs.push(format!("model.interaction: {e}"));
        }
        if let Err(e) = m.kernel.validate() {
            errs.push(format!("model.kernel: {e}"));
        }
        if n.nx < 2 || n.nx % 2 != 0 {
            errs.push(format!("numerics.nx: must be even and at least 2, got {}", n.nx));
        }
        if n.na == 0 {
            errs.push("numerics.na: must be positive".into());
        }
        if let Some(dt) = n.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                errs.push(format!("numerics.dt: must be positive, got {dt}"));
            }
        }
        let dynamic = matches!(self.mode, Mode::Sde | Mode::Pde | Mode::ReductionCheck);
        if dynamic && !(n.t_final > 0.0 && n.t_final.is_finite()) {
            errs.push(format!("numerics.t_final: must be positive, got {}", n.t_final));
        }
        match self.mode {
            Mode::Sde => {
                if n.n_agents == 0 {
                    errs.push("numerics.n_agents: must be positive".into());
                }
                if !(n.sde_dt > 0.0 && n.sde_dt.is_finite()) {
                    errs.push(format!("numerics.sde_dt: must be positive, got {}", n.sde_dt));
                }
                if n.histogram_bins == 0 {
                    errs.push("numerics.histogram_bins: must be positive".into());
                }
                if m.kernel == AgeKernel::DeltaSameAge {
                    errs.push("model.kernel: the same-age delta kernel needs the density model".into());
                }
            }
            Mode::SteadyState | Mode::TauSweep => {
                if !(n.theta > 0.0 && n.theta <= 1.0) {
                    errs.push(format!("numerics.theta: outside (0, 1], got {}", n.theta));
                }
                if !(n.tol > 0.0) {
                    errs.push(format!("numerics.tol: must be positive, got {}", n.tol));
                }
                if n.lambda0.is_empty() {
                    errs.push("numerics.lambda0: at least one starting law is needed".into());
                }
                if n.reference_factor == 0 {
                    errs.push("numerics.reference_factor: must be at least 1".into());
                }
                if self.mode == Mode::TauSweep {
                    if n.taus.is_empty() {
                        errs.push("numerics.taus: required for mode tau_sweep".into());
                    }
                    if let Some(t) = n.taus.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
                        errs.push(format!("numerics.taus: every tau must be positive, got {t}"));
                    }
                } else if !(m.tau > 0.0) {
                    errs.push("model.tau: steady states need tau > 0".into());
                }
            }
            Mode::Pde => {}
            Mode::ReductionCheck => match self.check {
                None => errs.push("check: required for mode reduction_check".into()),
                Some(CheckKind::Variance) => {
                    if m.interaction != InteractionFunction::Constant || m.kernel != AgeKernel::Uniform {
                        errs.push("check: the variance closed form needs interaction constant and kernel uniform".into());
                    }
                    if n.levels == 0 {
                        errs.push("numerics.levels: must be at least 1".into());
                    }
                }
                Some(CheckKind::Mk) => {
                    if m.death_rate.is_none() {
                        errs.push("model.death_rate: required for check mk".into());
                    }
                    if n.levels == 0 {
                        errs.push("numerics.levels: must be at least 1".into());
                    }
                }
                Some(CheckKind::Oracles) => {}
            },
        }
        if self.check.is_some() && self.mode != Mode::ReductionCheck {
            errs.push("check: only meaningful for mode reduction_check".into());
        }
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        for (params, dt, nx, na) in self.pde_grids() {
            let report = cfl_check(&params, nx, na, dt);
            if !report.is_ok() {
                return Err(Error::CflViolation(report));
            }
        }
        Ok(())
    }

    /// PDE timestep for a grid, the configured one or the CFL default.
    pub fn pde_dt(&self, params: &ModelParams, f: &InteractionFunction, kernel: &AgeKernel, nx: usize, na: usize) -> f64 {
        self.numerics.dt.unwrap_or_else(|| default_dt(params, f, kernel, nx, na))
    }

    /// Every (params, dt, nx, na) the run steps the density with.
    fn pde_grids(&self) -> Vec<(ModelParams, f64, usize, usize)> {
        let m = &self.model;
        let n = &self.numerics;
        let p = m.params();
        let one = |p: ModelParams, f: &InteractionFunction, k: &AgeKernel, s: usize| {
            let (nx, na) = (n.nx * s, n.na * s);
            let dt = self.pde_dt(&p, f, k, n.nx, n.na) / s as f64;
            (p, dt, nx, na)
        };
        match (self.mode, self.check) {
            (Mode::Pde, _) => vec![one(p, &m.interaction, &m.kernel, 1)],
            (Mode::ReductionCheck, Some(CheckKind::Variance | CheckKind::Mk)) => (0..n.levels)
                .map(|l| one(p, &m.interaction, &m.kernel, 1 << l))
                .collect(),
            (Mode::ReductionCheck, Some(CheckKind::Oracles)) => {
                let tau0 = ModelParams { tau: 0.0, ..p };
                vec![
                    one(p, &m.interaction, &AgeKernel::DeltaSameAge, 1),
                    one(tau0, &m.interaction, &m.kernel, 1),
                    one(p, &InteractionFunction::Constant, &AgeKernel::Uniform, 1),
                ]
            }
            _ => Vec::new(),
        }
    }

    /// Cell masses of a law on `nx` cells; μ⁽¹⁾ and μ⁽²⁾ are relaxed on a finer grid.
    pub fn law_masses(&self, law: &LawSpec, nx: usize) -> Result<Vec<f64>> {
        let m = &self.model;
        let (lo, hi) = (m.opinion_lo, m.opinion_hi);
        let shape = match law {
            LawSpec::Named(NamedLaw::Mu1 | NamedLaw::Mu2) => {
                let (one, two) = classical_branches(
                    &m.interaction,
                    m.sigma,
                    nx,
                    self.numerics.reference_factor.max(1),
                    lo,
                    hi,
                    &ClassicalOptions::default(),
                )?;
                return Ok(if *law == LawSpec::Named(NamedLaw::Mu1) { one } else { two });
            }
            LawSpec::Named(NamedLaw::Uniform) => DistributionShape::Uniform,
            LawSpec::Named(NamedLaw::ExpSkew) => DistributionShape::ExpSkew,
            LawSpec::Named(NamedLaw::Bimodal) => DistributionShape::Bimodal,
            LawSpec::Shape(DistributionShape::Tabulated { masses }) if masses.len() % nx == 0 && masses.len() > nx => {
                return Ok(restrict(masses, masses.len() / nx));
            }
            LawSpec::Shape(s) => s.clone(),
        };
        OpinionDistribution::new(shape, lo, hi)?.discretize(nx)
    }

    /// The law as a distribution; classical states become tables on `nx` cells.
    pub fn law(&self, law: &LawSpec, nx: usize) -> Result<OpinionDistribution> {
        let (lo, hi) = (self.model.opinion_lo, self.model.opinion_hi);
        if law.needs_classical() {
            let masses = self.law_masses(law, nx)?;
            return OpinionDistribution::new(DistributionShape::Tabulated { masses }, lo, hi);
        }
        let shape = match law {
            LawSpec::Named(NamedLaw::Uniform) => DistributionShape::Uniform,
            LawSpec::Named(NamedLaw::ExpSkew) => DistributionShape::ExpSkew,
            LawSpec::Named(NamedLaw::Bimodal) => DistributionShape::Bimodal,
            LawSpec::Named(_) => unreachable!("classical states handled above"),
            LawSpec::Shape(s) => s.clone(),
        };
        OpinionDistribution::new(shape, lo, hi)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.outputs
            .dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("out").join(&self.name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    const MINIMAL: &str = r#"
mode = "pde"
[model]
tau = 0.1
sigma = 0.1
interaction = { kind = "constant" }
mu = "uniform"
[numerics]
nx = 20
na = 10
t_final = 0.1
"#;

    #[test]
    fn minimal_file_parses() {
        let f = write(MINIMAL);
        let cfg = parse_config(f.path()).unwrap();
        assert_eq!(cfg.mode, Mode::Pde);
        assert_eq!(cfg.model.kernel, AgeKernel::Uniform);
        assert_eq!(cfg.model.rho0(), &LawSpec::Named(NamedLaw::Uniform));
        assert_eq!(cfg.numerics.n_agents, 500);
        assert_eq!(cfg.name, "custom");
    }

    #[test]
    fn missing_field_is_named() {
        let f = write(&MINIMAL.replace("sigma = 0.1\n", ""));
        let err = parse_config(f.path()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(matches!(&err, Error::Validation(v) if v.iter().any(|m| m.contains("sigma"))), "{err}");
    }

    #[test]
    fn unknown_field_is_rejected() {
        let f = write(&MINIMAL.replace("na = 10", "na = 10\nnz = 3"));
        let err = parse_config(f.path()).unwrap_err();
        assert!(err.to_string().contains("nz"), "{err}");
    }

    #[test]
    fn syntax_error_is_a_parse_error() {
        let f = write("mode = \n");
        assert!(matches!(parse_config(f.path()), Err(Error::Parse(_))));
    }

    #[test]
    fn preset_fields_can_be_overridden() {
        let f = write("preset = \"fig3b\"\n[model]\nsigma = 0.02\n[numerics]\nnx = 40\n");
        let cfg = parse_config(f.path()).unwrap();
        assert_eq!(cfg.model.sigma, 0.02);
        assert_eq!(cfg.model.tau, 0.05);
        assert_eq!(cfg.numerics.nx, 40);
        assert_eq!(cfg.numerics.na, 200);
        assert_eq!(cfg.model.interaction, InteractionFunction::BoundedConfidence { r1: 0.4, r2: 0.5 });
    }

    #[test]
    fn a_new_kind_replaces_the_table() {
        let f = write("preset = \"fig3b\"\n[model.interaction]\nkind = \"constant\"\n");
        assert_eq!(parse_config(f.path()).unwrap().model.interaction, InteractionFunction::Constant);
    }

    #[test]
    fn oversized_timestep_is_a_cfl_error() {
        let f = write(&MINIMAL.replace("t_final = 0.1", "t_final = 0.1\ndt = 5.0"));
        let err = parse_config(f.path()).unwrap_err();
        assert!(matches!(err, Error::CflViolation(_)));
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn mode_requirements() {
        let f = write(&MINIMAL.replace("\"pde\"", "\"reduction_check\""));
        let err = parse_config(f.path()).unwrap_err();
        assert!(err.to_string().contains("check"), "{err}");
        let f = write(&MINIMAL.replace("\"pde\"", "\"tau_sweep\""));
        assert!(parse_config(f.path()).unwrap_err().to_string().contains("numerics.taus"));
    }

    #[test]
    fn shape_tables_and_names() {
        let text = MINIMAL.replace("mu = \"uniform\"", "mu = { kind = \"bumps\", centers = [0.0], width = 0.2 }\nrho0 = \"bimodal\"");
        let f = write(&text);
        let cfg = parse_config(f.path()).unwrap();
        assert!(matches!(cfg.model.mu, LawSpec::Shape(DistributionShape::Bumps { .. })));
        assert_eq!(cfg.model.rho0().label(), "bimodal");
        let m = cfg.law_masses(&cfg.model.mu, 20).unwrap();
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = preset("nonuniqueness", Scale::Desk).unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
