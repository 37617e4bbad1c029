//! Built-in experiments for every figure and check, at desk and paper resolution.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::config::{
    CheckKind, ExperimentConfig, LawSpec, Mode, ModelSection, NamedLaw, NumericsSection, OutputSection,
};
use crate::model::{AgeKernel, DeathRate, DistributionShape, InteractionFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// 200 × 200 density grids, CFL-derived timesteps.
    #[default]
    Desk,
    /// 500 × 500 density grids, Δt = 0.001.
    Paper,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            _ => Err(Error::Validation(vec![format!("scale: expected desk or paper, got {s}")])),
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Desk => "desk",
            Scale::Paper => "paper",
        })
    }
}

pub const PRESETS: &[&str] = &[
    "fig2a",
    "fig2b",
    "fig2c",
    "fig2d",
    "fig3a",
    "fig3b",
    "fig3c",
    "fig3d",
    "fig3e",
    "fig3f",
    "variance",
    "nonuniqueness",
    "tau_sweep",
    "mk",
    "oracles",
];

fn bc(r1: f64, r2: f64) -> InteractionFunction {
    InteractionFunction::BoundedConfidence { r1, r2 }
}

fn named(n: NamedLaw) -> LawSpec {
    LawSpec::Named(n)
}

fn bump(width: f64) -> LawSpec {
    LawSpec::Shape(DistributionShape::Bumps {
        centers: vec![0.0],
        width,
    })
}

fn model(tau: f64, sigma: f64, interaction: InteractionFunction, rho0: NamedLaw) -> ModelSection {
    ModelSection {
        tau,
        sigma,
        max_age: 1.0,
        opinion_lo: -1.0,
        opinion_hi: 1.0,
        interaction,
        kernel: AgeKernel::Uniform,
        mu: named(NamedLaw::Uniform),
        rho0: (rho0 != NamedLaw::Uniform).then_some(named(rho0)),
        death_rate: None,
    }
}

fn numerics() -> NumericsSection {
    toml::from_str("").expect("every numerics field has a default")
}

fn pde_numerics(scale: Scale, t_final: f64) -> NumericsSection {
    let mut n = numerics();
    n.t_final = t_final;
    if scale == Scale::Paper {
        n.nx = 500;
        n.na = 500;
        n.dt = Some(0.001);
    }
    n
}

fn sde_numerics(t_final: f64) -> NumericsSection {
    let mut n = numerics();
    n.t_final = t_final;
    n.n_agents = 500;
    n.sde_dt = 0.01;
    n
}

fn steady_numerics(scale: Scale) -> NumericsSection {
    let mut n = numerics();
    if scale == Scale::Paper {
        n.nx = 500;
        n.reference_factor = 2;
    }
    n
}

fn experiment(name: &str, mode: Mode, model: ModelSection, numerics: NumericsSection) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        mode,
        check: None,
        model,
        numerics,
        outputs: OutputSection::default(),
    }
}

/// The named built-in at the given numerics profile.
pub fn preset(name: &str, scale: Scale) -> Result<ExperimentConfig> {
    use NamedLaw::{Bimodal, ExpSkew, Uniform};
    let one = InteractionFunction::Constant;
    let cfg = match name {
        "fig2a" => experiment(name, Mode::Sde, model(0.05, 0.05, one, ExpSkew), sde_numerics(150.0)),
        "fig2b" => experiment(name, Mode::Sde, model(0.05, 0.015, bc(0.4, 0.5), Uniform), sde_numerics(50.0)),
        "fig2c" => experiment(name, Mode::Sde, model(0.01, 0.001, bc(0.14, 0.16), Uniform), sde_numerics(1000.0)),
        "fig2d" => experiment(name, Mode::Sde, model(0.1, 0.015, bc(0.48, 0.58), Bimodal), sde_numerics(500.0)),
        "fig3a" => experiment(name, Mode::Pde, model(0.1, 0.1, one, Uniform), pde_numerics(scale, 5.0)),
        "fig3b" => experiment(name, Mode::Pde, model(0.05, 0.015, bc(0.4, 0.5), Uniform), pde_numerics(scale, 20.0)),
        "fig3c" => experiment(name, Mode::Pde, model(0.05, 0.05, bc(0.5, 0.6), Uniform), pde_numerics(scale, 60.0)),
        "fig3d" => experiment(name, Mode::Pde, model(0.001, 0.015, bc(0.1, 0.11), Uniform), pde_numerics(scale, 600.0)),
        "fig3e" => experiment(name, Mode::Pde, model(0.05, 0.015, bc(0.48, 0.58), Uniform), pde_numerics(scale, 200.0)),
        "fig3f" => experiment(name, Mode::Pde, model(0.1, 0.015, bc(0.48, 0.58), Bimodal), pde_numerics(scale, 1000.0)),
        "variance" => {
            let mut n = pde_numerics(scale, 5.0);
            n.levels = if scale == Scale::Desk { 2 } else { 1 };
            let mut c = experiment(name, Mode::ReductionCheck, model(0.1, 0.1, one, Uniform), n);
            c.check = Some(CheckKind::Variance);
            c
        }
        "nonuniqueness" | "tau_sweep" => {
            let mut m = model(0.15, 0.05, bc(0.5, 0.6), Uniform);
            m.mu = named(NamedLaw::Mu2);
            let mut n = steady_numerics(scale);
            if name == "nonuniqueness" {
                n.lambda0 = vec![named(NamedLaw::Mu2), named(NamedLaw::Mu1)];
                experiment(name, Mode::SteadyState, m, n)
            } else {
                n.lambda0 = vec![named(NamedLaw::Mu1)];
                n.taus = match scale {
                    Scale::Desk => vec![0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4],
                    Scale::Paper => (0..=18).map(|i| 0.05 + 0.025 * i as f64).collect(),
                };
                experiment(name, Mode::TauSweep, m, n)
            }
        }
        "mk" => {
            let mut m = model(1.0, 0.05, one, Uniform);
            m.mu = bump(0.2);
            m.death_rate = Some(DeathRate::Reciprocal);
            let mut n = numerics();
            n.nx = 50;
            n.na = 50;
            n.t_final = 2.0;
            n.levels = if scale == Scale::Desk { 3 } else { 4 };
            n.residual_from = Some(1.5);
            n.residual_every = 5;
            let mut c = experiment(name, Mode::ReductionCheck, m, n);
            c.check = Some(CheckKind::Mk);
            c.outputs.totals_every = Some(10);
            c
        }
        "oracles" => {
            let mut m = model(2.0, 0.3, bc(0.4, 0.5), Uniform);
            m.mu = bump(0.3);
            let mut n = numerics();
            n.nx = 64;
            n.na = 32;
            n.t_final = 1.0;
            let mut c = experiment(name, Mode::ReductionCheck, m, n);
            c.check = Some(CheckKind::Oracles);
            c
        }
        _ => {
            return Err(Error::Validation(vec![format!(
                "preset: unknown name {name}; known: {}",
                PRESETS.join(", ")
            )]))
        }
    };
    Ok(cfg)
}
