//! N-agent simulator: Euler–Maruyama opinions, deterministic ageing, reflecting
//! opinion bounds and opinion resampling at the maximal age.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AgeKernel, InitialDensity, InteractionFunction, ModelParams, OpinionDistribution};
use crate::pde::DensityGrid;

/// Name of the generator recorded in run metadata.
pub const GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentPopulation {
    pub ages: Vec<f64>,
    pub opinions: Vec<f64>,
    /// Time of the last reset; −∞ for agents present from the start.
    pub entry_times: Vec<f64>,
    pub time: f64,
}

impl AgentPopulation {
    pub fn len(&self) -> usize {
        self.ages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ages.is_empty()
    }

    pub fn mean_opinion(&self) -> f64 {
        self.opinions.iter().sum::<f64>() / self.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct SdeRunConfig {
    pub params: ModelParams,
    pub f: InteractionFunction,
    pub kernel: AgeKernel,
    pub mu: OpinionDistribution,
    pub rho0: InitialDensity,
    pub n_agents: usize,
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    /// Record the population every this many steps (0: initial and final only).
    pub record_every: usize,
}

impl SdeRunConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.f.validate()?;
        self.kernel.validate()?;
        if matches!(self.kernel, AgeKernel::DeltaSameAge) {
            return Err(delta_rejected());
        }
        if self.n_agents == 0 {
            return Err(Error::InvalidParams("n_agents must be positive".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParams(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_final >= 0.0) {
            return Err(Error::InvalidParams(format!("t_final must be >= 0, got {}", self.t_final)));
        }
        Ok(())
    }

    /// Number of steps and the timestep that lands exactly on `t_final`.
    pub fn schedule(&self) -> (usize, f64) {
        if self.t_final <= 0.0 {
            return (0, self.dt);
        }
        let n = (self.t_final / self.dt - 1e-9).ceil().max(1.0) as usize;
        (n, self.t_final / n as f64)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

fn delta_rejected() -> Error {
    Error::KernelRejected("the same-age delta kernel has no meaning for a finite population".into())
}

/// Ages and opinions drawn independently per agent from `rho0`.
pub fn init_population<R: Rng + ?Sized>(cfg: &SdeRunConfig, rng: &mut R) -> AgentPopulation {
    let n = cfg.n_agents;
    let mut ages = Vec::with_capacity(n);
    let mut opinions = Vec::with_capacity(n);
    for _ in 0..n {
        let (a, x) = cfg.rho0.sample(&cfg.params, rng);
        ages.push(a);
        opinions.push(x);
    }
    AgentPopulation {
        ages,
        opinions,
        entry_times: vec![f64::NEG_INFINITY; n],
        time: 0.0,
    }
}

/// drift_i = (1/N) Σ_j M(a_i, a_j)·ϕ(x_j − x_i).
pub fn drift(pop: &AgentPopulation, f: &InteractionFunction, kernel: &AgeKernel, max_age: f64) -> Result<Vec<f64>> {
    let n = pop.len();
    let weights: Option<Vec<f64>> = match kernel {
        AgeKernel::Uniform => Some(vec![1.0; n]),
        AgeKernel::OfTargetAgeOnly { .. } => Some(
            pop.ages
                .iter()
                .map(|&a| kernel.eval(0.0, a, max_age))
                .collect::<Result<Vec<_>>>()?,
        ),
        AgeKernel::Tabulated { .. } => None,
        AgeKernel::DeltaSameAge => return Err(delta_rejected()),
    };
    match weights {
        Some(w) => Ok(match *f {
            InteractionFunction::Constant => constant_drift(&pop.opinions, &w),
            InteractionFunction::BoundedConfidence { r1, r2 } => banded_drift(&pop.opinions, &w, f, r1, r2),
        }),
        None => {
            let mut out = vec![0.0; n];
            for (i, o) in out.iter_mut().enumerate() {
                let (ai, xi) = (pop.ages[i], pop.opinions[i]);
                let mut acc = 0.0;
                for j in 0..n {
                    acc += kernel.eval(ai, pop.ages[j], max_age)? * f.varphi(pop.opinions[j] - xi);
                }
                *o = acc / n as f64;
            }
            Ok(out)
        }
    }
}

fn constant_drift(x: &[f64], w: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let sw: f64 = w.iter().sum();
    let swx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    x.iter().map(|xi| (swx - sw * xi) / n).collect()
}

/// Sorted sweep: inside r1 the weight is exactly 1, so those neighbours enter through
/// prefix sums; only the band r1 ≤ |x_j − x_i| ≤ r2 is evaluated pairwise.
fn banded_drift(x: &[f64], w: &[f64], f: &InteractionFunction, r1: f64, r2: f64) -> Vec<f64> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let ws: Vec<f64> = order.iter().map(|&i| w[i]).collect();
    let mut pw = vec![0.0; n + 1];
    let mut pwx = vec![0.0; n + 1];
    for j in 0..n {
        pw[j + 1] = pw[j] + ws[j];
        pwx[j + 1] = pwx[j] + ws[j] * xs[j];
    }
    let mut out = vec![0.0; n];
    for (s, &i) in order.iter().enumerate() {
        let xi = xs[s];
        let lo_band = xs.partition_point(|&y| xi - y > r2);
        let lo_core = xs.partition_point(|&y| xi - y >= r1);
        let hi_core = xs.partition_point(|&y| y - xi < r1);
        let hi_band = xs.partition_point(|&y| y - xi <= r2);
        let mut acc = (pwx[hi_core] - pwx[lo_core]) - xi * (pw[hi_core] - pw[lo_core]);
        for j in (lo_band..lo_core).chain(hi_core..hi_band) {
            acc += ws[j] * f.varphi(xs[j] - xi);
        }
        out[i] = acc / n as f64;
    }
    out
}

/// Folds `x` into `[lo, hi]` by reflecting about whichever bound it violates.
pub fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    let mut y = x;
    while y < lo || y > hi {
        if y > hi {
            y = 2.0 * hi - y;
        }
        if y < lo {
            y = 2.0 * lo - y;
        }
    }
    y
}

/// One Euler–Maruyama step with the drift of the pre-step state, then ageing and resets.
pub fn em_step<R: Rng + ?Sized>(pop: &mut AgentPopulation, cfg: &SdeRunConfig, dt: f64, rng: &mut R) -> Result<()> {
    let p = &cfg.params;
    let d = drift(pop, &cfg.f, &cfg.kernel, p.max_age)?;
    let noise = p.sigma * dt.sqrt();
    for (x, di) in pop.opinions.iter_mut().zip(&d) {
        let xi: f64 = rng.sample(StandardNormal);
        *x = reflect(*x + di * dt + noise * xi, p.opinion_lo, p.opinion_hi);
    }
    let t_end = pop.time + dt;
    let age_step = p.tau * dt;
    for i in 0..pop.len() {
        let mut a = pop.ages[i] + age_step;
        if a >= p.max_age {
            while a >= p.max_age {
                a -= p.max_age;
            }
            pop.opinions[i] = cfg.mu.sample(rng);
            pop.entry_times[i] = t_end - a / p.tau;
        }
        pop.ages[i] = a;
    }
    pop.time = t_end;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SdeOutput {
    pub dt: f64,
    pub steps: usize,
    /// Recorded populations, first one at t = 0, last one at `t_final`.
    pub frames: Vec<AgentPopulation>,
}

impl SdeOutput {
    pub fn final_population(&self) -> &AgentPopulation {
        self.frames.last().expect("at least the initial frame")
    }
}

pub fn run_sde(cfg: &SdeRunConfig) -> Result<SdeOutput> {
    cfg.validate()?;
    let mut rng = cfg.rng();
    let mut pop = init_population(cfg, &mut rng);
    let (steps, dt) = cfg.schedule();
    let mut frames = vec![pop.clone()];
    for n in 1..=steps {
        em_step(&mut pop, cfg, dt, &mut rng)?;
        pop.time = n as f64 * dt;
        if (cfg.record_every > 0 && n % cfg.record_every == 0) || n == steps {
            frames.push(pop.clone());
        }
    }
    Ok(SdeOutput { dt, steps, frames })
}

/// Histogram of the population as a cell-averaged density.
pub fn empirical_density(pop: &AgentPopulation, params: &ModelParams, nx: usize, na: usize) -> Result<DensityGrid> {
    let mut g = DensityGrid::zeros(nx, na, params.opinion_lo, params.opinion_hi, params.max_age)?;
    let (dx, da) = (g.dx(), g.da());
    let w = 1.0 / (pop.len() as f64 * dx * da);
    for (&a, &x) in pop.ages.iter().zip(&pop.opinions) {
        let j = (((x - params.opinion_lo) / dx).floor().max(0.0) as usize).min(nx - 1);
        let k = ((a / da).floor().max(0.0) as usize).min(na - 1);
        let v = g.get(j, k);
        g.set(j, k, v + w);
    }
    Ok(g)
}

/// Histogram of opinions only, as cell masses.
pub fn opinion_histogram(opinions: &[f64], lo: f64, hi: f64, nx: usize) -> Vec<f64> {
    let dx = (hi - lo) / nx as f64;
    let mut h = vec![0.0; nx];
    let w = 1.0 / opinions.len() as f64;
    for &x in opinions {
        let j = (((x - lo) / dx).floor().max(0.0) as usize).min(nx - 1);
        h[j] += w;
    }
    h
}
