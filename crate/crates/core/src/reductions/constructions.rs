//! Per-age constructions of the full solution in the reducible cases.

use crate::error::{Error, Result};
use crate::model::{AgeKernel, InteractionFunction};
use crate::pde::{opinion_step_column, DensityGrid, InteractionMatrix, PdeRunConfig};

/// Number of substeps and substep length covering a time span `s` with steps of at most `dt`.
fn substeps(s: f64, dt: f64) -> (usize, f64) {
    if s <= 0.0 {
        return (0, dt);
    }
    let n = (s / dt - 1e-9).ceil().max(1.0) as usize;
    (n, s / n as f64)
}

/// Evolves one opinion column for a time `s` under the classical mean-field
/// equation with the field Λ = Φ·col recomputed every substep.
pub fn mean_field_semigroup(col: &mut [f64], s: f64, phi: &InteractionMatrix, sigma: f64, dt: f64, dx: f64) {
    let (n, h) = substeps(s, dt);
    let mut lambda = vec![0.0; col.len() + 1];
    for _ in 0..n {
        phi.apply(col, &mut lambda);
        opinion_step_column(col, &lambda, sigma, h, dx);
    }
}

/// Evolves one opinion column for a time `s` under the Ornstein–Uhlenbeck
/// Fokker–Planck operator (field Λ(x) = −x) with no-flux walls.
pub fn ou_semigroup(col: &mut [f64], s: f64, ifaces: &[f64], sigma: f64, dt: f64, dx: f64) {
    let (n, h) = substeps(s, dt);
    let lambda: Vec<f64> = ifaces.iter().map(|x| -x).collect();
    for _ in 0..n {
        opinion_step_column(col, &lambda, sigma, h, dx);
    }
}

/// Opinion column of ρ0 at a continuous age `b`, linearly interpolated between age cell centres.
fn column_at_age(g: &DensityGrid, b: f64) -> Vec<f64> {
    let (k0, k1, w) = age_weights(g, b);
    if w == 0.0 {
        return g.column(k0).to_vec();
    }
    g.column(k0).iter().zip(g.column(k1)).map(|(p, q)| (1.0 - w) * p + w * q).collect()
}

fn age_weights(g: &DensityGrid, b: f64) -> (usize, usize, f64) {
    let na = g.na();
    let pos = (b / g.da() - 0.5).clamp(0.0, (na - 1) as f64);
    let k0 = pos.floor() as usize;
    let w = pos - k0 as f64;
    if w < 1e-12 || k0 + 1 >= na {
        (k0, k0, 0.0)
    } else {
        (k0, k0 + 1, w)
    }
}

fn age_mass_at(g: &DensityGrid, b: f64) -> f64 {
    let (k0, k1, w) = age_weights(g, b);
    (1.0 - w) * g.column_mass(k0) + w * g.column_mass(k1)
}

/// Builds every age column from either the age-zero law or ρ0, transported along
/// characteristics and evolved by `evolve(column, elapsed)`.
fn characteristic_construction<E: FnMut(&mut [f64], f64)>(cfg: &PdeRunConfig, mut evolve: E) -> Result<DensityGrid> {
    let p = &cfg.params;
    let rho0 = cfg.rho0.to_grid(p, cfg.nx, cfg.na)?;
    let mu = cfg.mu.discretize(cfg.nx)?;
    let t = cfg.t_final;
    let tau = p.tau;
    let mut out = rho0.clone();
    let dx = out.dx();
    for k in 0..cfg.na {
        let a = out.a_center(k);
        let mut col = if a <= tau * t {
            // born at time t − a/τ carrying the mass that left age A then
            let m = age_mass_at(&rho0, (a - tau * t).rem_euclid(p.max_age));
            let col: Vec<f64> = mu.iter().map(|v| m * v / dx).collect();
            evolve_owned(col, a / tau, &mut evolve)
        } else {
            evolve_owned(column_at_age(&rho0, a - tau * t), t, &mut evolve)
        };
        out.column_mut(k).swap_with_slice(&mut col);
    }
    Ok(out)
}

fn evolve_owned<E: FnMut(&mut [f64], f64)>(mut col: Vec<f64>, s: f64, evolve: &mut E) -> Vec<f64> {
    evolve(&mut col, s);
    col
}

fn is_uniform_kernel(kernel: &AgeKernel) -> bool {
    match kernel {
        AgeKernel::Uniform => true,
        AgeKernel::OfTargetAgeOnly { values } => values.iter().all(|v| *v == 1.0),
        AgeKernel::Tabulated { values, .. } => values.iter().all(|v| *v == 1.0),
        AgeKernel::DeltaSameAge => false,
    }
}

/// ρ(t, ·, ·) for φ ≡ 1, M ≡ 1 and symmetric data, built column by column from the OU semigroup.
pub fn ou_reference_solution(cfg: &PdeRunConfig) -> Result<DensityGrid> {
    let p = &cfg.params;
    p.validate()?;
    if cfg.f != InteractionFunction::Constant {
        return Err(Error::InvalidParams("OU reduction needs phi = 1".into()));
    }
    if !is_uniform_kernel(&cfg.kernel) {
        return Err(Error::KernelRejected("OU reduction needs M = 1".into()));
    }
    if !p.is_symmetric_domain() || !cfg.mu.is_symmetric() {
        return Err(Error::InvalidParams("OU reduction needs a symmetric domain and age-zero law".into()));
    }
    let rho0 = cfg.rho0.to_grid(p, cfg.nx, cfg.na)?;
    if rho0.mirror_defect() > 1e-12 {
        return Err(Error::InvalidParams("OU reduction needs a symmetric initial density".into()));
    }
    if (rho0.total_mass() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParams(format!(
            "OU reduction needs unit initial mass, got {}",
            rho0.total_mass()
        )));
    }
    let ifaces: Vec<f64> = (0..=cfg.nx).map(|i| rho0.x_iface(i)).collect();
    let (sigma, dt, dx) = (p.sigma, cfg.dt, rho0.dx());
    characteristic_construction(cfg, |col, s| ou_semigroup(col, s, &ifaces, sigma, dt, dx))
}

/// ρ(t, ·, ·) for the same-age kernel, each age evolved independently by the classical mean-field semigroup.
pub fn delta_kernel_reference(cfg: &PdeRunConfig) -> Result<DensityGrid> {
    let p = &cfg.params;
    p.validate()?;
    cfg.f.validate()?;
    if cfg.kernel != AgeKernel::DeltaSameAge {
        return Err(Error::KernelRejected("per-age construction needs the same-age kernel".into()));
    }
    let phi = InteractionMatrix::build(&cfg.f, cfg.nx, p.opinion_lo, p.opinion_hi)?;
    let (sigma, dt) = (p.sigma, cfg.dt);
    let dx = p.opinion_width() / cfg.nx as f64;
    characteristic_construction(cfg, |col, s| mean_field_semigroup(col, s, &phi, sigma, dt, dx))
}

/// Construction of the τ = 0 solution.
#[derive(Debug, Clone)]
pub struct TauZeroReference {
    pub grid: DensityGrid,
    /// ρ(t, 0, ·) = μ · ∫ρ0(A, y) dy, constant in time.
    pub age_zero: Vec<f64>,
    /// u(t, ·) = Σ_b M(b) ρ(t, b, ·) Δa.
    pub u: Vec<f64>,
}

/// τ = 0: evolves u by the classical mean-field equation, then every age column under the field of u.
pub fn tau_zero_reference(cfg: &PdeRunConfig) -> Result<TauZeroReference> {
    let p = &cfg.params;
    p.validate()?;
    cfg.f.validate()?;
    if p.tau != 0.0 {
        return Err(Error::InvalidParams(format!("tau = 0 construction needs tau = 0, got {}", p.tau)));
    }
    let weights = cfg
        .kernel
        .target_weights(cfg.na)
        .ok_or_else(|| Error::KernelRejected("tau = 0 construction needs a target-age kernel".into()))?;
    cfg.kernel.validate()?;
    let mut rho = cfg.rho0.to_grid(p, cfg.nx, cfg.na)?;
    let (nx, na, dx, da) = (rho.nx(), rho.na(), rho.dx(), rho.da());
    let mu = cfg.mu.discretize(nx)?;
    let last = rho.column_mass(na - 1);
    let age_zero: Vec<f64> = mu.iter().map(|m| m * last / dx).collect();
    let mut u = vec![0.0; nx];
    for (l, w) in weights.iter().enumerate() {
        let w = w * da;
        if w == 0.0 {
            continue;
        }
        for (uj, r) in u.iter_mut().zip(rho.column(l)) {
            *uj += w * r;
        }
    }
    let phi = InteractionMatrix::build(&cfg.f, nx, p.opinion_lo, p.opinion_hi)?;
    let (n, h) = substeps(cfg.t_final, cfg.dt);
    let mut lambda = vec![0.0; nx + 1];
    for _ in 0..n {
        phi.apply(&u, &mut lambda);
        for k in 0..na {
            opinion_step_column(rho.column_mut(k), &lambda, p.sigma, h, dx);
        }
        opinion_step_column(&mut u, &lambda, p.sigma, h, dx);
    }
    Ok(TauZeroReference { grid: rho, age_zero, u })
}
