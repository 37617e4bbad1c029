//! Stationary states as fixed points of λ ↦ F(λ), where F propagates the age-zero
//! law μ through ages under the frozen field of λ and averages over ages with M.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AgeKernel, DistributionShape, InteractionFunction, ModelParams, OpinionDistribution};
use crate::pde::{lambda_bound, opinion_step_column, DensityGrid, InteractionMatrix, CFL_SAFETY, LAMBDA_MAX};
use crate::reductions::{cluster_detect, ClusterThresholds};

/// Column norm above which age propagation counts as diverged.
const COLUMN_LIMIT: f64 = 1e6;
/// Width of the Gaussian seeds used for μ⁽¹⁾ and μ⁽²⁾.
pub const SEED_WIDTH: f64 = 0.15;

/// Fixed-point problem on an opinion grid of `nx` cells and `na` age steps.
#[derive(Debug, Clone)]
pub struct SteadyConfig {
    pub params: ModelParams,
    pub f: InteractionFunction,
    /// Must depend on the target age only and integrate to one.
    pub kernel: AgeKernel,
    /// Age-zero law as cell masses.
    pub mu: Vec<f64>,
    pub na: usize,
    /// Damping θ ∈ (0, 1]: λ ← (1 − θ)λ + θF(λ).
    pub theta: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl SteadyConfig {
    /// Defaults: θ = 1, tol 1e−8, 10⁴ iterations, age steps from [`auto_age_steps`].
    pub fn new(params: ModelParams, f: InteractionFunction, kernel: AgeKernel, mu: Vec<f64>) -> Self {
        let na = auto_age_steps(&params, &f, &kernel, mu.len());
        Self {
            params,
            f,
            kernel,
            mu,
            na,
            theta: 1.0,
            tol: 1e-8,
            max_iter: 10_000,
        }
    }

    pub fn nx(&self) -> usize {
        self.mu.len()
    }

    pub fn dx(&self) -> f64 {
        self.params.opinion_width() / self.nx() as f64
    }

    pub fn da(&self) -> f64 {
        self.params.max_age / self.na as f64
    }

    fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.f.validate()?;
        if self.params.tau <= 0.0 {
            return Err(Error::InvalidParams(
                "steady states of the age model need tau > 0".into(),
            ));
        }
        if self.na == 0 {
            return Err(Error::InvalidParams("at least one age step is needed".into()));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::InvalidParams(format!("damping {} outside (0, 1]", self.theta)));
        }
        self.kernel.check_normalized(self.params.max_age)?;
        check_in_k(&self.mu, "mu")
    }
}

/// Smallest age step count for which the propagator is stable (CFL and centred-flux
/// bounds with Δa/τ in the role of Δt), with a margin,
/// rounded up to a multiple of the kernel table length.
pub fn auto_age_steps(params: &ModelParams, f: &InteractionFunction, kernel: &AgeKernel, nx: usize) -> usize {
    let dx = params.opinion_width() / nx as f64;
    let lambda = lambda_bound(f, kernel, params.opinion_width()).max(1e-12);
    let mut da = params.tau * dx / lambda;
    if params.sigma > 0.0 {
        let s2 = params.sigma * params.sigma;
        da = da.min(params.tau * dx * dx / s2).min(params.tau * s2 / (lambda * lambda));
    }
    let mut na = (params.max_age / (CFL_SAFETY * da)).ceil().max(1.0) as usize;
    if let AgeKernel::OfTargetAgeOnly { values } = kernel {
        let l = values.len();
        na = na.div_ceil(l) * l;
    }
    na
}

fn check_in_k(v: &[f64], name: &str) -> Result<()> {
    let total: f64 = v.iter().sum();
    if v.iter().any(|m| !(*m >= -1e-10)) || (total - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParams(format!(
            "{name} must be nonnegative cell masses summing to 1 (sum {total})"
        )));
    }
    Ok(())
}

/// Id + Δa·Ω for the field of a fixed λ.
#[derive(Debug, Clone)]
pub struct Propagator {
    /// Λ at the nx + 1 interfaces; boundary entries are never used.
    pub lambda_field: Vec<f64>,
    sigma: f64,
    dx: f64,
    /// Δa/τ: the opinion "time" covered by one age step.
    step: f64,
    na: usize,
}

impl Propagator {
    pub fn na(&self) -> usize {
        self.na
    }

    /// One age step applied to cell masses.
    pub fn apply(&self, m: &mut [f64]) {
        opinion_step_column(m, &self.lambda_field, self.sigma, self.step, self.dx);
    }

    /// Dense Ω (row-major nx × nx), so that the step is Id + Δa·Ω.
    pub fn omega(&self, da: f64) -> Vec<f64> {
        let nx = self.lambda_field.len() - 1;
        let mut out = vec![0.0; nx * nx];
        for j in 0..nx {
            let mut e = vec![0.0; nx];
            e[j] = 1.0;
            self.apply(&mut e);
            e[j] -= 1.0;
            for i in 0..nx {
                out[i * nx + j] = e[i] / da;
            }
        }
        out
    }
}

pub fn build_propagator(lambda: &[f64], cfg: &SteadyConfig) -> Result<Propagator> {
    let phi = InteractionMatrix::build(&cfg.f, cfg.nx(), cfg.params.opinion_lo, cfg.params.opinion_hi)?;
    build_propagator_with(&phi, lambda, cfg)
}

fn build_propagator_with(phi: &InteractionMatrix, lambda: &[f64], cfg: &SteadyConfig) -> Result<Propagator> {
    if cfg.params.tau <= 0.0 {
        return Err(Error::InvalidParams("the propagator divides by tau; tau must be > 0".into()));
    }
    let nx = cfg.nx();
    if lambda.len() != nx {
        return Err(Error::InvalidParams(format!("lambda has {} cells, mu has {nx}", lambda.len())));
    }
    let dx = cfg.dx();
    let density: Vec<f64> = lambda.iter().map(|m| m / dx).collect();
    let mut field = vec![0.0; nx + 1];
    phi.apply(&density, &mut field);
    Ok(Propagator {
        lambda_field: field,
        sigma: cfg.params.sigma,
        dx,
        step: cfg.da() / cfg.params.tau,
        na: cfg.na,
    })
}

/// Cell masses of ρ at the age nodes a_k = kΔa, k = 0..=na.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgeColumns {
    pub nx: usize,
    pub na: usize,
    /// `masses[k * nx + j]`.
    pub masses: Vec<f64>,
}

impl AgeColumns {
    pub fn column(&self, k: usize) -> &[f64] {
        &self.masses[k * self.nx..(k + 1) * self.nx]
    }

    /// Cell-averaged density on `na` age cells (mean of the two bounding nodes).
    pub fn to_grid(&self, params: &ModelParams) -> Result<DensityGrid> {
        let mut g = DensityGrid::zeros(self.nx, self.na, params.opinion_lo, params.opinion_hi, params.max_age)?;
        let dx = g.dx();
        for k in 0..self.na {
            let (a, b) = (self.column(k), self.column(k + 1));
            for j in 0..self.nx {
                g.set(j, k, 0.5 * (a[j] + b[j]) / dx);
            }
        }
        Ok(g)
    }
}

/// Columns (Id + Δa·Ω)^k μ by repeated application.
pub fn propagate_age(p: &Propagator, mu: &[f64]) -> Result<AgeColumns> {
    let nx = mu.len();
    let mut masses = Vec::with_capacity(nx * (p.na + 1));
    masses.extend_from_slice(mu);
    let mut m = mu.to_vec();
    for k in 1..=p.na {
        p.apply(&mut m);
        let norm = m.iter().map(|v| v.abs()).sum::<f64>();
        if !(norm <= COLUMN_LIMIT) {
            return Err(Error::Diverged {
                time: k as f64 / p.na as f64,
                reason: format!("age column {k} has norm {norm:e}; more age steps are needed"),
            });
        }
        masses.extend_from_slice(&m);
    }
    Ok(AgeColumns {
        nx,
        na: p.na,
        masses,
    })
}

/// λ′ = Σ_k M(a_k)·ρ_k·Δa with the age integral taken by the trapezoid rule per cell.
fn average_over_age(cols: &AgeColumns, cfg: &SteadyConfig) -> Vec<f64> {
    let weights = cfg.kernel.target_weights(cfg.na).expect("target-only kernel");
    let da = cfg.da();
    let mut out = vec![0.0; cols.nx];
    for (k, w) in weights.iter().enumerate() {
        let c = 0.5 * w * da;
        let (a, b) = (cols.column(k), cols.column(k + 1));
        for j in 0..cols.nx {
            out[j] += c * (a[j] + b[j]);
        }
    }
    out
}

/// Shared state for repeated evaluations of F.
struct FMap<'a> {
    cfg: &'a SteadyConfig,
    phi: InteractionMatrix,
}

impl<'a> FMap<'a> {
    fn new(cfg: &'a SteadyConfig) -> Result<Self> {
        cfg.validate()?;
        let phi = InteractionMatrix::build(&cfg.f, cfg.nx(), cfg.params.opinion_lo, cfg.params.opinion_hi)?;
        Ok(Self { cfg, phi })
    }

    fn profile(&self, lambda: &[f64]) -> Result<AgeColumns> {
        let p = build_propagator_with(&self.phi, lambda, self.cfg)?;
        propagate_age(&p, &self.cfg.mu)
    }

    fn apply(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        Ok(average_over_age(&self.profile(lambda)?, self.cfg))
    }
}

pub fn apply_f(lambda: &[f64], cfg: &SteadyConfig) -> Result<Vec<f64>> {
    check_in_k(lambda, "lambda")?;
    FMap::new(cfg)?.apply(lambda)
}

/// ‖F(λ) − λ‖_∞.
pub fn residual(lambda: &[f64], cfg: &SteadyConfig) -> Result<f64> {
    let next = apply_f(lambda, cfg)?;
    Ok(sup_distance(&next, lambda))
}

pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[derive(Debug, Clone, Serialize)]
pub struct SteadyStateResult {
    pub lambda: Vec<f64>,
    pub columns: AgeColumns,
    pub iterations: usize,
    /// ‖F(λ) − λ‖_∞ at the returned λ.
    pub residual_inf: f64,
    pub converged: bool,
    /// Residual after every iteration.
    pub history: Vec<f64>,
}

/// Damped Picard iteration λ ← (1 − θ)λ + θF(λ) until the update is below `cfg.tol`.
pub fn fixed_point_iterate(lambda0: &[f64], cfg: &SteadyConfig) -> Result<SteadyStateResult> {
    check_in_k(lambda0, "lambda0")?;
    let map = FMap::new(cfg)?;
    let mut lambda = lambda0.to_vec();
    let mut history = Vec::new();
    for it in 1..=cfg.max_iter {
        let image = map.apply(&lambda)?;
        let res = sup_distance(&image, &lambda);
        history.push(res);
        let next: Vec<f64> = if cfg.theta == 1.0 {
            image
        } else {
            lambda.iter().zip(&image).map(|(l, f)| (1.0 - cfg.theta) * l + cfg.theta * f).collect()
        };
        let step = sup_distance(&next, &lambda);
        lambda = next;
        if step < cfg.tol {
            let columns = map.profile(&lambda)?;
            let residual_inf = sup_distance(&average_over_age(&columns, cfg), &lambda);
            return Ok(SteadyStateResult {
                lambda,
                columns,
                iterations: it,
                residual_inf,
                converged: true,
                history,
            });
        }
    }
    let residual = history.last().copied().unwrap_or(f64::INFINITY);
    Err(Error::NotConverged {
        iterations: cfg.max_iter,
        residual,
        last: lambda,
    })
}

/// Stepping budget and stationarity test for [`classical_mf_steady_state`].
#[derive(Debug, Clone, Copy)]
pub struct ClassicalOptions {
    pub tol: f64,
    pub patience: usize,
    pub max_steps: usize,
}

impl Default for ClassicalOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            patience: 100,
            max_steps: 1_000_000,
        }
    }
}

/// Relaxes the single-age mean-field equation (no ageing) from `seed` until
/// ‖Δp‖_∞/Δt < tol holds for `patience` consecutive steps; returns cell masses.
pub fn classical_mf_steady_state(
    f: &InteractionFunction,
    sigma: f64,
    seed: &[f64],
    lo: f64,
    hi: f64,
    opts: &ClassicalOptions,
) -> Result<Vec<f64>> {
    let nx = seed.len();
    let phi = InteractionMatrix::build(f, nx, lo, hi)?;
    let dx = (hi - lo) / nx as f64;
    let mut dt = dx / LAMBDA_MAX;
    if sigma > 0.0 {
        let l = lambda_bound(f, &AgeKernel::Uniform, hi - lo);
        dt = dt.min(dx * dx / (sigma * sigma)).min(sigma * sigma / (l * l));
    }
    dt *= CFL_SAFETY;
    let total: f64 = seed.iter().sum();
    let mut rho: Vec<f64> = seed.iter().map(|m| m / total / dx).collect();
    let mut prev = rho.clone();
    let mut field = vec![0.0; nx + 1];
    let mut calm = 0;
    let mut change = f64::INFINITY;
    for _ in 0..opts.max_steps {
        phi.apply(&rho, &mut field);
        prev.copy_from_slice(&rho);
        opinion_step_column(&mut rho, &field, sigma, dt, dx);
        change = sup_distance(&rho, &prev) * dx / dt;
        if !change.is_finite() {
            return Err(Error::Diverged {
                time: 0.0,
                reason: "classical relaxation produced non-finite values".into(),
            });
        }
        if change < opts.tol {
            calm += 1;
            if calm >= opts.patience {
                return Ok(rho.iter().map(|r| r * dx).collect());
            }
        } else {
            calm = 0;
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_steps,
        residual: change,
        last: rho.iter().map(|r| r * dx).collect(),
    })
}

/// Cell masses of Gaussian bumps of width [`SEED_WIDTH`] at `centers`.
pub fn bump_seed(centers: &[f64], nx: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
    OpinionDistribution::new(
        DistributionShape::Bumps {
            centers: centers.to_vec(),
            width: SEED_WIDTH,
        },
        lo,
        hi,
    )?
    .discretize(nx)
}

/// One-cluster and two-cluster classical states μ⁽¹⁾, μ⁽²⁾ on `nx` cells, relaxed on a
/// grid `factor` times finer (seeds at 0 and ±(hi − lo)/4 about the centre) and restricted.
pub fn classical_branches(
    f: &InteractionFunction,
    sigma: f64,
    nx: usize,
    factor: usize,
    lo: f64,
    hi: f64,
    opts: &ClassicalOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if factor == 0 {
        return Err(Error::InvalidParams("reference grid factor must be >= 1".into()));
    }
    let fine = nx * factor;
    let (c, q) = (0.5 * (lo + hi), 0.25 * (hi - lo));
    let one = classical_mf_steady_state(f, sigma, &bump_seed(&[c], fine, lo, hi)?, lo, hi, opts)?;
    let two = classical_mf_steady_state(f, sigma, &bump_seed(&[c - q, c + q], fine, lo, hi)?, lo, hi, opts)?;
    Ok((restrict(&one, factor), restrict(&two, factor)))
}

/// Sums blocks of `factor` fine cells into coarse cells.
pub fn restrict(fine: &[f64], factor: usize) -> Vec<f64> {
    assert!(factor > 0 && fine.len() % factor == 0, "grid sizes are not nested");
    fine.chunks(factor).map(|c| c.iter().sum()).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub tau: f64,
    pub peaks: Option<usize>,
    pub result: Option<SteadyStateResult>,
    pub error: Option<String>,
}

/// Fixed point per τ from the same λ0; failures are recorded and the sweep continues.
pub fn tau_sweep(lambda0: &[f64], taus: &[f64], base: &SteadyConfig, thresholds: &ClusterThresholds) -> Vec<SweepEntry> {
    taus.iter().map(|&tau| sweep_point(lambda0, tau, base, thresholds)).collect()
}

pub fn sweep_point(lambda0: &[f64], tau: f64, base: &SteadyConfig, thresholds: &ClusterThresholds) -> SweepEntry {
    let mut cfg = base.clone();
    cfg.params.tau = tau;
    cfg.na = auto_age_steps(&cfg.params, &cfg.f, &cfg.kernel, cfg.nx());
    let xs: Vec<f64> = (0..cfg.nx())
        .map(|j| crate::pde::cell_center(cfg.params.opinion_lo, cfg.params.opinion_hi, cfg.nx(), j))
        .collect();
    match fixed_point_iterate(lambda0, &cfg) {
        Ok(r) => SweepEntry {
            tau,
            peaks: Some(crate::reductions::cluster_detect_with(&r.lambda, &xs, thresholds).len()),
            result: Some(r),
            error: None,
        },
        Err(e) => SweepEntry {
            tau,
            peaks: None,
            result: None,
            error: Some(e.to_string()),
        },
    }
}

/// Peak count of a cell-mass profile with the default thresholds.
pub fn peak_count(lambda: &[f64], lo: f64, hi: f64) -> usize {
    let nx = lambda.len();
    let xs: Vec<f64> = (0..nx).map(|j| crate::pde::cell_center(lo, hi, nx, j)).collect();
    cluster_detect(lambda, &xs).len()
}
