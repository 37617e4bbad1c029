//! Executes a validated experiment and writes its artifacts and `summary.json`.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::Result;
use crate::experiment::config::{CheckKind, ExperimentConfig, LawSpec, Mode, NamedLaw};
use crate::experiment::output::{
    cluster_rows, convergence_rows, lambda_rows, snapshot_rows, steady_rows, trajectory_rows, ArtifactWriter,
    DiagnosticsRow, TotalsRow, VarianceRow,
};
use crate::model::{AgeKernel, DeathRate, InitialDensity, InteractionFunction, ModelParams};
use crate::pde::{cell_center, run_pde, run_pde_with, PdeOutput, PdeRunConfig};
use crate::reductions::{
    cluster_detect, compute_diagnostics, delta_kernel_reference, mk_refinement_study, ou_reference_solution,
    tau_zero_reference, check_mean_evolution, variance_closed_form, Cluster, ClusterThresholds, MkCheck, MkProblem,
};
use crate::sde::{opinion_histogram, run_sde, SdeRunConfig, GENERATOR};
use crate::steady::{
    classical_branches, fixed_point_iterate, l1_distance, residual, sweep_point, ClassicalOptions, SteadyConfig,
    SteadyStateResult, SweepEntry,
};

pub const SUMMARY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub count: usize,
    pub positions: Vec<f64>,
    pub masses: Vec<f64>,
}

impl From<&[Cluster]> for ClusterSummary {
    fn from(c: &[Cluster]) -> Self {
        Self {
            count: c.len(),
            positions: c.iter().map(|c| c.position).collect(),
            masses: c.iter().map(|c| c.mass).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub name: String,
    pub mode: Mode,
    pub check: Option<CheckKind>,
    pub seed: u64,
    pub version: String,
    pub runtime_seconds: f64,
    /// Largest |total mass − 1| over every step or fixed point of the run.
    pub mass_drift: f64,
    pub residuals: BTreeMap<String, f64>,
    /// Clusters of the final (or first-branch) opinion profile.
    pub clusters: ClusterSummary,
    /// Mode-specific results.
    pub details: serde_json::Value,
    pub files: Vec<String>,
}

struct Outcome {
    mass_drift: f64,
    residuals: BTreeMap<String, f64>,
    clusters: Vec<Cluster>,
    details: serde_json::Value,
}

/// Runs `cfg` writing everything under `out`; sweep points and steady branches
/// are spread over `jobs` threads, each writing its own subdirectory.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<Summary> {
    cfg.validate()?;
    let start = Instant::now();
    let mut w = ArtifactWriter::create(out)?;
    let o = match cfg.mode {
        Mode::Sde => sde_mode(cfg, &mut w)?,
        Mode::Pde => pde_mode(cfg, &mut w)?,
        Mode::SteadyState => steady_mode(cfg, &mut w, jobs)?,
        Mode::TauSweep => sweep_mode(cfg, &mut w, jobs)?,
        Mode::ReductionCheck => match cfg.check.expect("validated") {
            CheckKind::Variance => variance_check(cfg, &mut w)?,
            CheckKind::Mk => mk_check(cfg, &mut w)?,
            CheckKind::Oracles => oracle_check(cfg, &mut w)?,
        },
    };
    let summary = Summary {
        schema_version: SUMMARY_VERSION,
        name: cfg.name.clone(),
        mode: cfg.mode,
        check: cfg.check,
        seed: cfg.numerics.seed,
        version: env!("CARGO_PKG_VERSION").into(),
        runtime_seconds: start.elapsed().as_secs_f64(),
        mass_drift: o.mass_drift,
        residuals: o.residuals,
        clusters: ClusterSummary::from(o.clusters.as_slice()),
        details: o.details,
        files: w.files().to_vec(),
    };
    w.json("summary.json", &summary)?;
    Ok(summary)
}

fn centers(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|j| cell_center(lo, hi, n, j)).collect()
}

fn stride(configured: Option<usize>, steps: usize, scale: usize) -> usize {
    configured.unwrap_or((steps / 100).max(1)) * scale
}

/// Order-preserving map over `items` on up to `jobs` scoped threads.
fn par_map<T: Sync, R: Send, F: Fn(&T) -> R + Sync>(items: &[T], jobs: usize, f: F) -> Vec<R> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(f).collect();
    }
    let mut out: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..jobs)
            .map(|w| {
                let f = &f;
                s.spawn(move || {
                    items
                        .iter()
                        .enumerate()
                        .skip(w)
                        .step_by(jobs)
                        .map(|(i, x)| (i, f(x)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker thread panicked") {
                out[i] = Some(r);
            }
        }
    });
    out.into_iter().map(|r| r.expect("every item mapped")).collect()
}

/// Opinion laws as cell masses, relaxing the classical states at most once.
struct Laws<'a> {
    cfg: &'a ExperimentConfig,
    nx: usize,
    classical: Option<(Vec<f64>, Vec<f64>)>,
}

impl<'a> Laws<'a> {
    fn new(cfg: &'a ExperimentConfig, nx: usize) -> Self {
        Self { cfg, nx, classical: None }
    }

    fn masses(&mut self, law: &LawSpec) -> Result<Vec<f64>> {
        let which = match law {
            LawSpec::Named(NamedLaw::Mu1) => 0,
            LawSpec::Named(NamedLaw::Mu2) => 1,
            _ => return self.cfg.law_masses(law, self.nx),
        };
        if self.classical.is_none() {
            let m = &self.cfg.model;
            self.classical = Some(classical_branches(
                &m.interaction,
                m.sigma,
                self.nx,
                self.cfg.numerics.reference_factor,
                m.opinion_lo,
                m.opinion_hi,
                &ClassicalOptions::default(),
            )?);
        }
        let (one, two) = self.classical.as_ref().expect("just set");
        Ok(if which == 0 { one.clone() } else { two.clone() })
    }
}

fn pde_config(
    cfg: &ExperimentConfig,
    f: InteractionFunction,
    kernel: AgeKernel,
    params: ModelParams,
    scale: usize,
) -> Result<PdeRunConfig> {
    let n = &cfg.numerics;
    let (nx, na) = (n.nx * scale, n.na * scale);
    let dt = cfg.pde_dt(&params, &f, &kernel, n.nx, n.na) / scale as f64;
    let mu = cfg.law(&cfg.model.mu, nx)?;
    let rho0 = InitialDensity::UniformAge(cfg.law(cfg.model.rho0(), nx)?);
    let mut pc = PdeRunConfig {
        params,
        f,
        kernel,
        mu,
        rho0,
        nx,
        na,
        dt,
        t_final: n.t_final,
        snapshot_every: cfg.outputs.snapshot_every.map(|s| s * scale).unwrap_or(0),
        totals_every: 0,
    };
    let (steps, _) = pc.schedule();
    pc.totals_every = stride(cfg.outputs.totals_every, steps / scale, scale);
    Ok(pc)
}

fn base_pde_config(cfg: &ExperimentConfig, scale: usize) -> Result<PdeRunConfig> {
    let m = &cfg.model;
    pde_config(cfg, m.interaction, m.kernel.clone(), m.params(), scale)
}

fn totals_clusters(p: &[f64], lo: f64, hi: f64) -> Vec<Cluster> {
    let nx = p.len();
    let dx = (hi - lo) / nx as f64;
    let masses: Vec<f64> = p.iter().map(|v| v * dx).collect();
    cluster_detect(&masses, &centers(lo, hi, nx))
}

/// Totals, diagnostics (at the totals stride) and clusters of a PDE run.
fn write_pde_series(w: &mut ArtifactWriter, prefix: &str, pc: &PdeRunConfig, out: &PdeOutput) -> Result<Vec<(f64, Vec<Cluster>)>> {
    let (lo, hi) = (pc.params.opinion_lo, pc.params.opinion_hi);
    let every = pc.totals_every.max(1);
    w.csv(
        &format!("{prefix}diagnostics.csv"),
        out.diagnostics
            .iter()
            .enumerate()
            .filter(|(n, _)| n % every == 0 || *n == out.steps)
            .map(|(_, d)| DiagnosticsRow::from(d)),
    )?;
    w.csv(
        &format!("{prefix}totals.csv"),
        out.totals.iter().flat_map(|s| {
            s.density.iter().enumerate().map(move |(j, &v)| TotalsRow {
                t: s.t,
                opinion_index: j,
                total_density: v,
            })
        }),
    )?;
    let series: Vec<(f64, Vec<Cluster>)> = out
        .totals
        .iter()
        .map(|s| (s.t, totals_clusters(&s.density, lo, hi)))
        .collect();
    let rows: Vec<_> = series.iter().flat_map(|(t, c)| cluster_rows(*t, c)).collect();
    if !rows.is_empty() {
        w.csv(&format!("{prefix}clusters.csv"), rows)?;
    }
    Ok(series)
}

fn pde_mode(cfg: &ExperimentConfig, w: &mut ArtifactWriter) -> Result<Outcome> {
    let pc = base_pde_config(cfg, 1)?;
    let rho0 = pc.rho0.to_grid(&pc.params, pc.nx, pc.na)?;
    let symmetric = pc.params.is_symmetric_domain() && pc.mu.is_symmetric() && rho0.mirror_defect() == 0.0;
    let uniform_age = matches!(pc.rho0, InitialDensity::UniformAge(_));
    let level = 1.0 / pc.params.max_age;
    let (mut mirror, mut age_defect) = (0.0f64, 0.0f64);
    let out = run_pde_with(&pc, |_, g| {
        if symmetric {
            mirror = mirror.max(g.mirror_defect());
        }
        if uniform_age {
            for k in 0..g.na() {
                age_defect = age_defect.max((g.column_mass(k) - level).abs());
            }
        }
    })?;
    w.csv("snapshot.csv", out.snapshots.iter().flat_map(|s| snapshot_rows(s.t, &s.grid)))?;
    let series = write_pde_series(w, "", &pc, &out)?;
    let mut residuals = BTreeMap::new();
    if pc.kernel.is_symmetric() {
        residuals.insert("mean_evolution".into(), check_mean_evolution(&out.diagnostics, &pc.params, &pc.kernel, &pc.mu, pc.nx)?);
    }
    if symmetric {
        residuals.insert("mirror_defect".into(), mirror);
    }
    if uniform_age {
        residuals.insert("age_marginal_defect".into(), age_defect);
    }
    let counts: Vec<(f64, usize)> = series.iter().map(|(t, c)| (*t, c.len())).collect();
    Ok(Outcome {
        mass_drift: out.max_mass_drift(),
        residuals,
        clusters: series.last().map(|(_, c)| c.clone()).unwrap_or_default(),
        details: json!({
            "nx": pc.nx,
            "na": pc.na,
            "dt": out.dt,
            "steps": out.steps,
            "min_density": out.min_density(),
            "cluster_counts": counts,
        }),
    })
}

fn sde_mode(cfg: &ExperimentConfig, w: &mut ArtifactWriter) -> Result<Outcome> {
    let m = &cfg.model;
    let n = &cfg.numerics;
    let mut sc = SdeRunConfig {
        params: m.params(),
        f: m.interaction,
        kernel: m.kernel.clone(),
        mu: cfg.law(&m.mu, n.nx)?,
        rho0: InitialDensity::UniformAge(cfg.law(m.rho0(), n.nx)?),
        n_agents: n.n_agents,
        dt: n.sde_dt,
        t_final: n.t_final,
        seed: n.seed,
        record_every: 0,
    };
    sc.record_every = stride(cfg.outputs.record_every, sc.schedule().0, 1);
    let out = run_sde(&sc)?;
    w.csv("trajectory.csv", trajectory_rows(&out.frames))?;
    w.json(
        "metadata.json",
        &json!({
            "config": cfg,
            "seed": n.seed,
            "generator": GENERATOR,
            "version": env!("CARGO_PKG_VERSION"),
        }),
    )?;
    let (lo, hi) = (m.opinion_lo, m.opinion_hi);
    let xs = centers(lo, hi, n.histogram_bins);
    let series: Vec<(f64, Vec<Cluster>)> = out
        .frames
        .iter()
        .map(|f| (f.time, cluster_detect(&opinion_histogram(&f.opinions, lo, hi, n.histogram_bins), &xs)))
        .collect();
    let rows: Vec<_> = series.iter().flat_map(|(t, c)| cluster_rows(*t, c)).collect();
    if !rows.is_empty() {
        w.csv("clusters.csv", rows)?;
    }
    let last = out.final_population();
    Ok(Outcome {
        mass_drift: (last.len() as f64 / n.n_agents as f64 - 1.0).abs(),
        residuals: BTreeMap::new(),
        clusters: series.last().map(|(_, c)| c.clone()).unwrap_or_default(),
        details: json!({
            "n_agents": n.n_agents,
            "dt": out.dt,
            "steps": out.steps,
            "frames": out.frames.len(),
            "final_mean_opinion": last.mean_opinion(),
            "generator": GENERATOR,
        }),
    })
}

fn steady_base(cfg: &ExperimentConfig, mu: Vec<f64>) -> SteadyConfig {
    let m = &cfg.model;
    let n = &cfg.numerics;
    let mut sc = SteadyConfig::new(m.params(), m.interaction, m.kernel.clone(), mu);
    sc.theta = n.theta;
    sc.tol = n.tol;
    sc.max_iter = n.max_iter;
    if let Some(na) = n.steady_na {
        sc.na = na;
    }
    sc
}

fn lambda_clusters(lambda: &[f64], cfg: &ExperimentConfig) -> Vec<Cluster> {
    let m = &cfg.model;
    cluster_detect(lambda, &centers(m.opinion_lo, m.opinion_hi, lambda.len()))
}

/// Largest |Σλ − 1| and |column mass − 1| of a fixed point.
fn steady_mass_drift(r: &SteadyStateResult) -> f64 {
    let c = &r.columns;
    let mut d = (r.lambda.iter().sum::<f64>() - 1.0).abs();
    for k in 0..c.na {
        d = d.max((c.column(k).iter().sum::<f64>() - 1.0).abs());
    }
    d
}

fn branch_dirs(labels: &[String]) -> Vec<String> {
    labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            if labels.iter().filter(|o| *o == l).count() > 1 {
                format!("lambda0_{l}_{i}")
            } else {
                format!("lambda0_{l}")
            }
        })
        .collect()
}

fn steady_mode(cfg: &ExperimentConfig, w: &mut ArtifactWriter, jobs: usize) -> Result<Outcome> {
    let n = &cfg.numerics;
    let mut laws = Laws::new(cfg, n.nx);
    let mu = laws.masses(&cfg.model.mu)?;
    let sc = steady_base(cfg, mu.clone());
    let starts: Vec<Vec<f64>> = n.lambda0.iter().map(|l| laws.masses(l)).collect::<Result<_>>()?;
    let labels: Vec<String> = n.lambda0.iter().map(LawSpec::label).collect();
    let dirs = branch_dirs(&labels);
    let results = par_map(&starts, jobs, |l0| fixed_point_iterate(l0, &sc));
    let results: Vec<SteadyStateResult> = results.into_iter().collect::<Result<_>>()?;

    w.csv("mu.csv", lambda_rows(&mu))?;
    let mut residuals = BTreeMap::new();
    residuals.insert("mu_fixed_point".into(), residual(&mu, &sc)?);
    let mut drift = 0.0f64;
    let mut branches = Vec::new();
    for ((r, dir), label) in results.iter().zip(&dirs).zip(&labels) {
        w.csv(&format!("{dir}/rho.csv"), steady_rows(&r.columns.to_grid(&cfg.model.params())?))?;
        w.csv(&format!("{dir}/lambda.csv"), lambda_rows(&r.lambda))?;
        w.csv(&format!("{dir}/convergence.csv"), convergence_rows(&r.history))?;
        residuals.insert(dir.clone(), r.residual_inf);
        drift = drift.max(steady_mass_drift(r));
        let cl = lambda_clusters(&r.lambda, cfg);
        branches.push(json!({
            "lambda0": label,
            "dir": dir,
            "iterations": r.iterations,
            "residual_inf": r.residual_inf,
            "converged": r.converged,
            "peaks": cl.len(),
            "clusters": ClusterSummary::from(cl.as_slice()),
            "l1_to_mu": l1_distance(&r.lambda, &mu),
        }));
    }
    let mut gaps = Vec::new();
    for i in 0..results.len() {
        for j in i + 1..results.len() {
            gaps.push(json!({ "a": dirs[i], "b": dirs[j], "l1": l1_distance(&results[i].lambda, &results[j].lambda) }));
        }
    }
    Ok(Outcome {
        mass_drift: drift,
        residuals,
        clusters: lambda_clusters(&results[0].lambda, cfg),
        details: json!({
            "nx": sc.nx(),
            "na": sc.na,
            "branches": branches,
            "l1_gaps": gaps,
        }),
    })
}

fn sweep_mode(cfg: &ExperimentConfig, w: &mut ArtifactWriter, jobs: usize) -> Result<Outcome> {
    let n = &cfg.numerics;
    let mut laws = Laws::new(cfg, n.nx);
    let mu = laws.masses(&cfg.model.mu)?;
    let start = laws.masses(&n.lambda0[0])?;
    let sc = steady_base(cfg, mu.clone());
    let thresholds = ClusterThresholds::default();
    let entries = par_map(&n.taus, jobs, |&tau| match n.steady_na {
        None => sweep_point(&start, tau, &sc, &thresholds),
        Some(na) => {
            let mut c = sc.clone();
            c.params.tau = tau;
            c.na = na;
            match fixed_point_iterate(&start, &c) {
                Ok(r) => SweepEntry {
                    tau,
                    peaks: Some(lambda_clusters(&r.lambda, cfg).len()),
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
    });
    let mut residuals = BTreeMap::new();
    let mut drift = 0.0f64;
    let mut points = Vec::new();
    let mut last = Vec::new();
    for e in &entries {
        let dir = format!("tau_{:.4}", e.tau);
        match &e.result {
            Some(r) => {
                w.csv(&format!("{dir}/lambda.csv"), lambda_rows(&r.lambda))?;
                w.csv(&format!("{dir}/convergence.csv"), convergence_rows(&r.history))?;
                residuals.insert(dir.clone(), r.residual_inf);
                drift = drift.max(steady_mass_drift(r));
                last = lambda_clusters(&r.lambda, cfg);
                points.push(json!({
                    "tau": e.tau,
                    "dir": dir,
                    "na": r.columns.na,
                    "peaks": e.peaks,
                    "clusters": ClusterSummary::from(last.as_slice()),
                    "converged": r.converged,
                    "iterations": r.iterations,
                    "residual_inf": r.residual_inf,
                    "l1_to_mu": l1_distance(&r.lambda, &mu),
                    "l1_to_lambda0": l1_distance(&r.lambda, &start),
                    "error": null,
                }));
            }
            None => points.push(json!({
                "tau": e.tau,
                "dir": null,
                "converged": false,
                "error": e.error,
            })),
        }
    }
    w.csv("mu.csv", lambda_rows(&mu))?;
    Ok(Outcome {
        mass_drift: drift,
        residuals,
        clusters: last,
        details: json!({ "nx": sc.nx(), "lambda0": n.lambda0[0].label(), "points": points }),
    })
}

fn second_moment(masses: &[f64], lo: f64, hi: f64) -> f64 {
    let n = masses.len();
    masses.iter().enumerate().map(|(j, m)| m * cell_center(lo, hi, n, j).powi(2)).sum()
}

fn variance_check(cfg: &ExperimentConfig, w: &mut ArtifactWriter) -> Result<Outcome> {
    let mut residuals = BTreeMap::new();
    let mut levels = Vec::new();
    let mut drift = 0.0f64;
    let mut clusters = Vec::new();
    let mut errors = Vec::new();
    for level in 0..cfg.numerics.levels {
        let pc = base_pde_config(cfg, 1 << level)?;
        let p = pc.params;
        let (lo, hi) = (p.opinion_lo, p.opinion_hi);
        let var_mu = second_moment(&pc.mu.discretize(pc.nx)?, lo, hi);
        let rho0_law = pc.rho0.opinion_law().expect("uniform-age initial density");
        let var_rho0 = second_moment(&rho0_law.discretize(pc.nx)?, lo, hi);
        let ages: Vec<f64> = (0..pc.na).map(|k| (k as f64 + 0.5) * p.max_age / pc.na as f64).collect();
        let mut rows = Vec::new();
        let mut worst = 0.0f64;
        let mut record = |t: f64, g: &crate::pde::DensityGrid| {
            let d = compute_diagnostics(g);
            for (k, &a) in ages.iter().enumerate() {
                let exact = variance_closed_form(t, a, &p, var_mu, |_| var_rho0);
                worst = worst.max((d.variance_by_age[k] - exact).abs());
                rows.push(VarianceRow {
                    t,
                    age_index: k,
                    v_numeric: d.variance_by_age[k],
                    v_closed_form: exact,
                });
            }
        };
        record(0.0, &pc.rho0.to_grid(&p, pc.nx, pc.na)?);
        let (steps, _) = pc.schedule();
        let every = pc.totals_every.max(1);
        let mut step = 0usize;
        let out = run_pde_with(&pc, |t, g| {
            step += 1;
            if step % every == 0 || step == steps {
                record(t, g);
            }
        })?;
        let prefix = if level == 0 { String::new() } else { format!("level_{level}/") };
        w.csv(&format!("{prefix}variance.csv"), rows)?;
        let series = write_pde_series(w, &prefix, &pc, &out)?;
        if level == 0 {
            clusters = series.last().map(|(_, c)| c.clone()).unwrap_or_default();
            residuals.insert("variance_max_error".into(), worst);
        } else {
            residuals.insert(format!("variance_max_error_level{level}"), worst);
        }
        drift = drift.max(out.max_mass_drift());
        errors.push(worst);
        levels.push(json!({ "level": level, "nx": pc.nx, "na": pc.na, "dt": out.dt, "max_error": worst }));
    }
    if errors.len() >= 2 {
        residuals.insert("variance_refinement_ratio".into(), errors[1] / errors[0]);
    }
    Ok(Outcome {
        mass_drift: drift,
        residuals,
        clusters,
        details: json!({ "levels": levels }),
    })
}

fn mk_check(cfg: &ExperimentConfig, w: &mut ArtifactWriter) -> Result<Outcome> {
    let death: DeathRate = cfg.model.death_rate.expect("validated");
    let n = &cfg.numerics;
    let pc = base_pde_config(cfg, 1)?;
    let check = MkCheck {
        residual_from: n.residual_from.unwrap_or(0.75 * n.t_final),
        residual_every: n.residual_every,
    };
    let study = mk_refinement_study(&death, &cfg.model.kernel, &pc, &check, n.levels)?;
    w.csv("residual.csv", study.iter().map(|(row, _)| *row))?;
    let (_, first) = &study[0];
    w.csv("rho_final.csv", snapshot_rows(n.t_final, &first.rho))?;
    let mut residuals = BTreeMap::new();
    let mut drift = 0.0f64;
    let mut marginal_dev = 0.0f64;
    let mut exact_dev = 0.0f64;
    let a_max = cfg.model.max_age;
    for (row, report) in &study {
        let na = report.rho.na();
        let da = a_max / na as f64;
        let pi = MkProblem::new(&death, cfg.model.kernel.clone(), na, a_max)?.pi;
        for (_, m) in &report.marginals {
            drift = drift.max((m.iter().sum::<f64>() * da - 1.0).abs());
            for (k, (v, p)) in m.iter().zip(&pi).enumerate() {
                marginal_dev = marginal_dev.max((v - p).abs());
                if death == DeathRate::Reciprocal {
                    let a = (k as f64 + 0.5) * da;
                    exact_dev = exact_dev.max((v - 2.0 * (1.0 - a / a_max) / a_max).abs());
                }
            }
        }
        let key = if row.refinement_level == 0 {
            "mk_max_residual".to_string()
        } else {
            format!("mk_max_residual_level{}", row.refinement_level)
        };
        residuals.insert(key, row.max_residual);
    }
    residuals.insert("marginal_deviation".into(), marginal_dev);
    if death == DeathRate::Reciprocal {
        residuals.insert("marginal_deviation_exact".into(), exact_dev);
    }
    let ratios: Vec<f64> = study.windows(2).map(|p| p[0].0.max_residual / p[1].0.max_residual).collect();
    if let Some(worst) = ratios.iter().copied().reduce(f64::min) {
        residuals.insert("mk_refinement_ratio".into(), worst);
    }
    let (lo, hi) = (cfg.model.opinion_lo, cfg.model.opinion_hi);
    let p_final = crate::pde::opinion_totals(&first.rho);
    Ok(Outcome {
        mass_drift: drift,
        residuals,
        clusters: totals_clusters(&p_final, lo, hi),
        details: json!({
            "residual_from": check.residual_from,
            "levels": study.iter().map(|(row, r)| json!({
                "level": row.refinement_level,
                "nx": r.rho.nx(),
                "na": r.rho.na(),
                "max_residual": row.max_residual,
                "mean_residual": row.mean_residual,
                "samples": r.samples,
                "worst_cell": r.worst_cell,
            })).collect::<Vec<_>>(),
            "ratios": ratios,
        }),
    })
}

fn oracle_check(cfg: &ExperimentConfig, w: &mut ArtifactWriter) -> Result<Outcome> {
    let m = &cfg.model;
    let p = m.params();
    let mut residuals = BTreeMap::new();
    let mut drift = 0.0f64;
    let mut clusters = Vec::new();

    let delta = pde_config(cfg, m.interaction, AgeKernel::DeltaSameAge, p, 1)?;
    let full = run_pde(&delta)?;
    let built = delta_kernel_reference(&delta)?;
    residuals.insert("delta_kernel".into(), full.final_grid.sup_distance(&built));
    drift = drift.max(full.max_mass_drift());
    w.csv("delta_kernel/solver.csv", snapshot_rows(delta.t_final, &full.final_grid))?;
    w.csv("delta_kernel/construction.csv", snapshot_rows(delta.t_final, &built))?;
    if let Some(last) = full.totals.last() {
        clusters = totals_clusters(&last.density, m.opinion_lo, m.opinion_hi);
    }

    let tau0 = pde_config(cfg, m.interaction, m.kernel.clone(), ModelParams { tau: 0.0, ..p }, 1)?;
    let full = run_pde(&tau0)?;
    let built = tau_zero_reference(&tau0)?;
    residuals.insert("tau_zero".into(), full.final_grid.sup_distance(&built.grid));
    drift = drift.max(full.max_mass_drift());
    w.csv("tau_zero/solver.csv", snapshot_rows(tau0.t_final, &full.final_grid))?;
    w.csv("tau_zero/construction.csv", snapshot_rows(tau0.t_final, &built.grid))?;

    let ou = pde_config(cfg, InteractionFunction::Constant, AgeKernel::Uniform, p, 1)?;
    let full = run_pde(&ou)?;
    let built = ou_reference_solution(&ou)?;
    residuals.insert("ou".into(), full.final_grid.sup_distance(&built));
    drift = drift.max(full.max_mass_drift());
    w.csv("ou/solver.csv", snapshot_rows(ou.t_final, &full.final_grid))?;
    w.csv("ou/construction.csv", snapshot_rows(ou.t_final, &built))?;

    Ok(Outcome {
        mass_drift: drift,
        residuals,
        clusters,
        details: json!({ "nx": delta.nx, "na": delta.na, "dt": full.dt }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::presets::{preset, Scale};

    #[test]
    fn par_map_keeps_order() {
        let v: Vec<usize> = (0..11).collect();
        assert_eq!(par_map(&v, 3, |x| x * x), v.iter().map(|x| x * x).collect::<Vec<_>>());
        assert_eq!(par_map(&v, 1, |x| x + 1)[10], 11);
    }

    #[test]
    fn small_pde_run_writes_schemas() {
        let mut cfg = preset("fig3b", Scale::Desk).unwrap();
        cfg.numerics.nx = 40;
        cfg.numerics.na = 20;
        cfg.numerics.t_final = 0.5;
        let dir = tempfile::tempdir().unwrap();
        let s = run_experiment(&cfg, dir.path(), 1).unwrap();
        assert_eq!(s.schema_version, SUMMARY_VERSION);
        assert!(s.mass_drift < 1e-9);
        assert!(s.residuals["mirror_defect"] <= 1e-12);
        assert!(s.residuals["age_marginal_defect"] <= 1e-12);
        let head = |f: &str| {
            std::fs::read_to_string(dir.path().join(f))
                .unwrap()
                .lines()
                .next()
                .unwrap()
                .to_string()
        };
        assert_eq!(head("snapshot.csv"), "t,age_index,opinion_index,density");
        assert_eq!(head("diagnostics.csv"), "t,mass,min_density,mean_opinion,boundary_density_lo,boundary_density_hi");
        assert_eq!(head("totals.csv"), "t,opinion_index,total_density");
        let summary: Summary =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary.files, s.files);
    }

    #[test]
    fn sde_run_is_reproducible() {
        let mut cfg = preset("fig2b", Scale::Desk).unwrap();
        cfg.numerics.n_agents = 30;
        cfg.numerics.t_final = 0.5;
        cfg.numerics.seed = 7;
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_experiment(&cfg, a.path(), 1).unwrap();
        run_experiment(&cfg, b.path(), 1).unwrap();
        let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("trajectory.csv")).unwrap();
        assert_eq!(read(&a), read(&b));
        let meta: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(a.path().join("metadata.json")).unwrap()).unwrap();
        assert_eq!(meta["seed"], 7);
        assert_eq!(meta["generator"], GENERATOR);
    }

    #[test]
    fn sweep_jobs_do_not_change_results() {
        let mut cfg = preset("tau_sweep", Scale::Desk).unwrap();
        cfg.numerics.nx = 40;
        cfg.model.mu = LawSpec::Named(NamedLaw::Uniform);
        cfg.numerics.lambda0 = vec![LawSpec::Named(NamedLaw::Uniform)];
        cfg.numerics.taus = vec![0.3, 0.4];
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let sa = run_experiment(&cfg, a.path(), 1).unwrap();
        let sb = run_experiment(&cfg, b.path(), 2).unwrap();
        assert_eq!(sa.residuals, sb.residuals);
        for f in &sa.files {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }
}
