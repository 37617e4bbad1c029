//! Solutions with McKendrick ageing built from the uniform-age model.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{build_mk_kernel, stationary_age_profile, AgeKernel, DeathRate, InitialDensity};
use crate::pde::{interaction_field, run_pde_with, DensityGrid, InteractionMatrix, PdeRunConfig};

/// A death process, its stationary age profile and the kernels on either side of the correspondence.
#[derive(Debug, Clone)]
pub struct MkProblem {
    /// d(a_k) at the age-cell centres.
    pub death_rate: Vec<f64>,
    /// Stationary profile at the age-cell centres, Σ π Δa = 1.
    pub pi: Vec<f64>,
    pub base: AgeKernel,
    /// M′(a, b) = M(a, b) π(b).
    pub derived: AgeKernel,
    pub max_age: f64,
}

impl MkProblem {
    pub fn new(death: &DeathRate, base: AgeKernel, na: usize, max_age: f64) -> Result<Self> {
        let pi = stationary_age_profile(|a| death.rate(a, max_age), na, max_age)?;
        let da = max_age / na as f64;
        let death_rate = (0..na).map(|k| death.rate((k as f64 + 0.5) * da, max_age)).collect();
        let derived = build_mk_kernel(&base, &pi)?;
        Ok(Self {
            death_rate,
            pi,
            base,
            derived,
            max_age,
        })
    }

    pub fn na(&self) -> usize {
        self.pi.len()
    }

    /// ρ = q·π column by column.
    pub fn lift(&self, q: &DensityGrid) -> DensityGrid {
        let mut rho = q.clone();
        for (k, p) in self.pi.iter().enumerate() {
            rho.column_mut(k).iter_mut().for_each(|v| *v *= p);
        }
        rho
    }
}

/// Where and how often the residual is sampled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MkCheck {
    /// First time at which the residual is evaluated.
    pub residual_from: f64,
    /// Step stride between evaluations.
    pub residual_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualRow {
    pub refinement_level: usize,
    pub max_residual: f64,
    pub mean_residual: f64,
}

#[derive(Debug, Clone)]
pub struct MkReport {
    /// ρ(T) = q(T)·π.
    pub rho: DensityGrid,
    /// Age marginal of ρ at t = 0, every `totals_every` steps and at T.
    pub marginals: Vec<(f64, Vec<f64>)>,
    pub max_residual: f64,
    pub mean_residual: f64,
    /// (t, age cell, opinion cell) of the largest residual.
    pub worst_cell: (f64, usize, usize),
    pub samples: usize,
}

/// Solves the uniform-age problem with M′ for q, lifts it to ρ = q·π and evaluates the
/// McKendrick equation on the strict interior of the grid.
pub fn mk_construct_and_check(mk: &MkProblem, cfg: &PdeRunConfig, check: &MkCheck) -> Result<MkReport> {
    if cfg.na != mk.na() {
        return Err(Error::InvalidParams(format!(
            "age profile has {} cells, grid has {}",
            mk.na(),
            cfg.na
        )));
    }
    if !matches!(cfg.rho0, InitialDensity::UniformAge(_)) {
        return Err(Error::InvalidParams("q0 must have a uniform age profile".into()));
    }
    if cfg.na < 4 || cfg.nx < 4 {
        return Err(Error::InvalidParams("residual needs at least 4 cells per axis".into()));
    }
    if (cfg.params.max_age - mk.max_age).abs() > 1e-12 {
        return Err(Error::InvalidParams("age profile and model disagree on the maximal age".into()));
    }
    let mut run = cfg.clone();
    run.kernel = mk.derived.clone();
    let p = &cfg.params;
    let phi = InteractionMatrix::build(&cfg.f, cfg.nx, p.opinion_lo, p.opinion_hi)?;
    let (steps, dt) = run.schedule();
    let every = check.residual_every.max(1);

    let q0 = run.rho0.to_grid(p, run.nx, run.na)?;
    let mut marginals = vec![(0.0, marginal(&mk.lift(&q0)))];
    let mut window: Vec<DensityGrid> = vec![mk.lift(&q0)];
    let mut n = 0usize;
    let mut acc = Accumulator::default();
    let mut failure: Option<Error> = None;

    let out = run_pde_with(&run, |t, q| {
        n += 1;
        let rho = mk.lift(q);
        if (run.totals_every > 0 && n % run.totals_every == 0) || n == steps {
            marginals.push((t, marginal(&rho)));
        }
        window.push(rho);
        if window.len() > 3 {
            window.remove(0);
        }
        // residual at step n − 1 once its neighbours are in
        let centre = n - 1;
        let t_centre = centre as f64 * dt;
        if window.len() == 3 && centre % every == 0 && t_centre >= check.residual_from && failure.is_none() {
            match interior_residual(mk, &window, &phi, p.tau, p.sigma, dt) {
                Ok(r) => acc.add(t_centre, r, cfg.nx - 2),
                Err(e) => failure = Some(e),
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    if acc.samples == 0 {
        return Err(Error::InvalidParams("residual window contains no steps".into()));
    }
    Ok(MkReport {
        rho: mk.lift(&out.final_grid),
        marginals,
        max_residual: acc.max,
        mean_residual: acc.sum / acc.count as f64,
        worst_cell: acc.worst,
        samples: acc.samples,
    })
}

#[derive(Default)]
struct Accumulator {
    max: f64,
    sum: f64,
    count: usize,
    samples: usize,
    worst: (f64, usize, usize),
}

impl Accumulator {
    /// `r` holds the interior cells age-major, `width` per age row.
    fn add(&mut self, t: f64, r: Vec<f64>, width: usize) {
        self.samples += 1;
        for (i, v) in r.into_iter().enumerate() {
            if v > self.max {
                self.max = v;
                self.worst = (t, 1 + i / width, 1 + i % width);
            }
            self.sum += v;
            self.count += 1;
        }
    }
}

fn marginal(rho: &DensityGrid) -> Vec<f64> {
    (0..rho.na()).map(|k| rho.column_mass(k)).collect()
}

/// |∂tρ + τ∂aρ + ∂x F̃[ρ] + τ d ρ| with centred differences, skipping the first age
/// cell, the last two age cells and the boundary opinion cells.
fn interior_residual(
    mk: &MkProblem,
    window: &[DensityGrid],
    phi: &InteractionMatrix,
    tau: f64,
    sigma: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    let (before, now, after) = (&window[0], &window[1], &window[2]);
    let field = interaction_field(now, phi, &mk.base)?;
    let (nx, na) = (now.nx(), now.na());
    let (dx, da) = (now.dx(), now.da());
    let d = 0.5 * sigma * sigma / dx;
    let mut out = Vec::with_capacity((nx - 2) * (na - 3));
    for k in 1..na - 2 {
        let col = now.column(k);
        let lam = field.column(k);
        let flux = |i: usize| 0.5 * (col[i - 1] + col[i]) * lam[i] - d * (col[i] - col[i - 1]);
        for j in 1..nx - 1 {
            let dt_rho = (after.get(j, k) - before.get(j, k)) / (2.0 * dt);
            let da_rho = (now.get(j, k + 1) - now.get(j, k - 1)) / (2.0 * da);
            let dx_flux = (flux(j + 1) - flux(j)) / dx;
            out.push((dt_rho + tau * da_rho + dx_flux + tau * mk.death_rate[k] * col[j]).abs());
        }
    }
    Ok(out)
}

/// Residual of [`mk_construct_and_check`] on `levels` grids, each doubling both cell
/// counts and halving the timestep of the one before.
pub fn mk_refinement_study(
    death: &DeathRate,
    base: &AgeKernel,
    cfg: &PdeRunConfig,
    check: &MkCheck,
    levels: usize,
) -> Result<Vec<(ResidualRow, MkReport)>> {
    let mut rows = Vec::with_capacity(levels);
    for level in 0..levels {
        let s = 1usize << level;
        let mut c = cfg.clone();
        c.nx = cfg.nx * s;
        c.na = cfg.na * s;
        c.dt = cfg.dt / s as f64;
        c.totals_every = cfg.totals_every * s;
        c.snapshot_every = cfg.snapshot_every * s;
        let mk = MkProblem::new(death, base.clone(), c.na, cfg.params.max_age)?;
        let ch = MkCheck {
            residual_from: check.residual_from,
            residual_every: check.residual_every * s,
        };
        let report = mk_construct_and_check(&mk, &c, &ch)?;
        rows.push((
            ResidualRow {
                refinement_level: level,
                max_residual: report.max_residual,
                mean_residual: report.mean_residual,
            },
            report,
        ));
    }
    Ok(rows)
}
