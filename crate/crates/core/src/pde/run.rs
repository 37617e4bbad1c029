use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AgeKernel, InitialDensity, InteractionFunction, ModelParams, OpinionDistribution};
use crate::pde::{DensityGrid, StrangStepper};

/// Bound on |Λ| used for the advective CFL number.
pub const LAMBDA_MAX: f64 = 2.0;
/// Fraction of the tightest CFL bound used for the default timestep.
pub const CFL_SAFETY: f64 = 0.8;
const MASS_DRIFT_LIMIT: f64 = 1e-6;
const VALUE_LIMIT: f64 = 1e6;

/// Courant numbers of a grid/timestep pair and the bounds they break.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CflReport {
    /// (τ/2)·Δt/Δa.
    pub age: f64,
    /// Δt·Λ_max/Δx.
    pub advective: f64,
    /// σ²·Δt/Δx².
    pub diffusive: f64,
    pub violations: Vec<String>,
}

impl CflReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for CflReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "age {:.4}, advective {:.4}, diffusive {:.4}",
            self.age, self.advective, self.diffusive
        )?;
        if !self.violations.is_empty() {
            write!(f, " ({})", self.violations.join(", "))?;
        }
        Ok(())
    }
}

pub fn cfl_check(params: &ModelParams, nx: usize, na: usize, dt: f64) -> CflReport {
    let dx = params.opinion_width() / nx as f64;
    let da = params.max_age / na as f64;
    let age = 0.5 * params.tau * dt / da;
    let advective = dt * LAMBDA_MAX / dx;
    let diffusive = params.sigma * params.sigma * dt / (dx * dx);
    let mut violations = Vec::new();
    if !(dt > 0.0) || !dt.is_finite() {
        violations.push(format!("timestep {dt} must be positive"));
    }
    if age > 1.0 {
        violations.push(format!("age bound (tau/2) dt/da = {age:.4} > 1"));
    }
    if advective > 1.0 {
        violations.push(format!("advective bound dt Lambda_max/dx = {advective:.4} > 1"));
    }
    if diffusive > 1.0 {
        violations.push(format!("diffusive bound sigma^2 dt/dx^2 = {diffusive:.4} > 1"));
    }
    CflReport {
        age,
        advective,
        diffusive,
        violations,
    }
}

/// A priori bound on |Λ|: M_max · sup |ϕ| over the domain width, capped at [`LAMBDA_MAX`].
pub fn lambda_bound(f: &InteractionFunction, kernel: &AgeKernel, width: f64) -> f64 {
    match kernel {
        AgeKernel::DeltaSameAge => LAMBDA_MAX,
        k => (k.max_value() * f.varphi_bound(width)).min(LAMBDA_MAX),
    }
}

/// CFL_SAFETY × the tightest of the three CFL bounds and the centred-flux
/// stability bound Δt·L² ≤ σ², with L from [`lambda_bound`].
pub fn default_dt(params: &ModelParams, f: &InteractionFunction, kernel: &AgeKernel, nx: usize, na: usize) -> f64 {
    let dx = params.opinion_width() / nx as f64;
    let da = params.max_age / na as f64;
    let mut bound = dx / LAMBDA_MAX;
    if params.tau > 0.0 {
        bound = bound.min(2.0 * da / params.tau);
    }
    if params.sigma > 0.0 {
        let s2 = params.sigma * params.sigma;
        let l = lambda_bound(f, kernel, params.opinion_width());
        bound = bound.min(dx * dx / s2);
        if l > 0.0 {
            bound = bound.min(s2 / (l * l));
        }
    }
    CFL_SAFETY * bound
}

#[derive(Debug, Clone)]
pub struct PdeRunConfig {
    pub params: ModelParams,
    pub f: InteractionFunction,
    pub kernel: AgeKernel,
    pub mu: OpinionDistribution,
    pub rho0: InitialDensity,
    pub nx: usize,
    pub na: usize,
    pub dt: f64,
    pub t_final: f64,
    /// Full-grid snapshot stride in steps (0: initial and final only).
    pub snapshot_every: usize,
    /// Stride for recording P(t, ·) (0: initial and final only).
    pub totals_every: usize,
}

impl PdeRunConfig {
    /// Number of steps and the timestep that lands exactly on `t_final`.
    pub fn schedule(&self) -> (usize, f64) {
        if self.t_final <= 0.0 {
            return (0, self.dt);
        }
        let n = (self.t_final / self.dt - 1e-9).ceil().max(1.0) as usize;
        (n, self.t_final / n as f64)
    }
}

/// Per-step scalar diagnostics of a density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub t: f64,
    pub mass: f64,
    pub min_density: f64,
    /// m̄ = ∫∫ x ρ.
    pub mean_opinion: f64,
    /// ∫ ρ(a, lo) da from the first opinion cell.
    pub boundary_density_lo: f64,
    /// ∫ ρ(a, hi) da from the last opinion cell.
    pub boundary_density_hi: f64,
    /// Σ_j ρ(j, last age) Δx.
    pub last_age_mass: f64,
    /// Σ_j x_j ρ(j, last age) Δx.
    pub last_age_moment: f64,
}

impl StepDiagnostics {
    pub fn of(rho: &DensityGrid, t: f64) -> Self {
        let (nx, na) = (rho.nx(), rho.na());
        let (dx, da) = (rho.dx(), rho.da());
        let xs: Vec<f64> = (0..nx).map(|j| rho.x_center(j)).collect();
        let mut mass = 0.0;
        let mut moment = 0.0;
        let mut lo = 0.0;
        let mut hi = 0.0;
        let mut last_mass = 0.0;
        let mut last_moment = 0.0;
        for k in 0..na {
            let col = rho.column(k);
            let mut cm = 0.0;
            let mut cx = 0.0;
            for (r, x) in col.iter().zip(&xs) {
                cm += r;
                cx += r * x;
            }
            mass += cm;
            moment += cx;
            lo += col[0];
            hi += col[nx - 1];
            if k == na - 1 {
                last_mass = cm * dx;
                last_moment = cx * dx;
            }
        }
        Self {
            t,
            mass: mass * dx * da,
            min_density: rho.min_value(),
            mean_opinion: moment * dx * da,
            boundary_density_lo: lo * da,
            boundary_density_hi: hi * da,
            last_age_mass: last_mass,
            last_age_moment: last_moment,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub grid: DensityGrid,
}

#[derive(Debug, Clone)]
pub struct OpinionTotals {
    pub t: f64,
    /// P(t, x_j) = Σ_k ρ(j, k) Δa.
    pub density: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PdeOutput {
    pub dt: f64,
    pub steps: usize,
    pub snapshots: Vec<Snapshot>,
    pub totals: Vec<OpinionTotals>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub final_grid: DensityGrid,
}

impl PdeOutput {
    /// max |mass(t) − 1| over the recorded steps.
    pub fn max_mass_drift(&self) -> f64 {
        self.diagnostics.iter().map(|d| (d.mass - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn min_density(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.min_density).fold(f64::INFINITY, f64::min)
    }
}

pub fn opinion_totals(rho: &DensityGrid) -> Vec<f64> {
    let da = rho.da();
    let mut p = vec![0.0; rho.nx()];
    for k in 0..rho.na() {
        for (pj, r) in p.iter_mut().zip(rho.column(k)) {
            *pj += r;
        }
    }
    p.iter_mut().for_each(|v| *v *= da);
    p
}

/// Steps the density to `t_final` with Strang splitting.
pub fn run_pde(cfg: &PdeRunConfig) -> Result<PdeOutput> {
    run_pde_with(cfg, |_, _| {})
}

/// As [`run_pde`], calling `observe(t, ρ)` after every step.
pub fn run_pde_with<F: FnMut(f64, &DensityGrid)>(cfg: &PdeRunConfig, mut observe: F) -> Result<PdeOutput> {
    if !(cfg.t_final >= 0.0) {
        return Err(Error::InvalidParams(format!("t_final must be >= 0, got {}", cfg.t_final)));
    }
    let mut stepper = StrangStepper::new(&cfg.params, &cfg.f, &cfg.kernel, &cfg.mu, cfg.nx, cfg.na, cfg.dt)?;
    let (steps, dt) = cfg.schedule();
    if dt != cfg.dt {
        stepper = StrangStepper::new(&cfg.params, &cfg.f, &cfg.kernel, &cfg.mu, cfg.nx, cfg.na, dt)?;
    }
    let mut rho = cfg.rho0.to_grid(&cfg.params, cfg.nx, cfg.na)?;
    let mass0 = rho.total_mass();
    let mut diagnostics = Vec::with_capacity(steps + 1);
    let mut snapshots = vec![Snapshot { t: 0.0, grid: rho.clone() }];
    let mut totals = vec![OpinionTotals { t: 0.0, density: opinion_totals(&rho) }];
    diagnostics.push(StepDiagnostics::of(&rho, 0.0));
    for n in 1..=steps {
        stepper.step(&mut rho);
        let t = n as f64 * dt;
        let d = StepDiagnostics::of(&rho, t);
        if !d.mass.is_finite() || (d.mass - mass0).abs() > MASS_DRIFT_LIMIT {
            return Err(Error::Diverged {
                time: t,
                reason: format!("mass drifted to {}", d.mass),
            });
        }
        let peak = rho.max_value();
        if !(peak <= VALUE_LIMIT) {
            return Err(Error::Diverged {
                time: t,
                reason: format!("density reached {peak:e}"),
            });
        }
        diagnostics.push(d);
        observe(t, &rho);
        if (cfg.snapshot_every > 0 && n % cfg.snapshot_every == 0) || n == steps {
            snapshots.push(Snapshot { t, grid: rho.clone() });
        }
        if (cfg.totals_every > 0 && n % cfg.totals_every == 0) || n == steps {
            totals.push(OpinionTotals { t, density: opinion_totals(&rho) });
        }
    }
    Ok(PdeOutput {
        dt,
        steps,
        snapshots,
        totals,
        diagnostics,
        final_grid: rho,
    })
}
