use serde::Serialize;

use crate::model::ModelParams;
use crate::pde::DensityGrid;

/// Marginals and moments of one density snapshot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    /// P(x_j) = Σ_k ρ(j, k) Δa.
    pub total_opinion_density: Vec<f64>,
    /// π(a_k) = Σ_j ρ(j, k) Δx.
    pub age_marginal: Vec<f64>,
    /// Conditional mean opinion at each age (0 where π vanishes).
    pub mean_by_age: Vec<f64>,
    pub overall_mean: f64,
    /// Conditional second moment about 0 at each age.
    pub variance_by_age: Vec<f64>,
}

pub fn compute_diagnostics(rho: &DensityGrid) -> Diagnostics {
    let (nx, na) = (rho.nx(), rho.na());
    let (dx, da) = (rho.dx(), rho.da());
    let xs: Vec<f64> = (0..nx).map(|j| rho.x_center(j)).collect();
    let mut p = vec![0.0; nx];
    let mut pi = Vec::with_capacity(na);
    let mut m = Vec::with_capacity(na);
    let mut v = Vec::with_capacity(na);
    let mut overall = 0.0;
    for k in 0..na {
        let col = rho.column(k);
        let (mut mass, mut first, mut second) = (0.0, 0.0, 0.0);
        for ((r, x), pj) in col.iter().zip(&xs).zip(p.iter_mut()) {
            *pj += r * da;
            mass += r;
            first += r * x;
            second += r * x * x;
        }
        let mass = mass * dx;
        pi.push(mass);
        if mass > 0.0 {
            m.push(first * dx / mass);
            v.push(second * dx / mass);
        } else {
            m.push(0.0);
            v.push(0.0);
        }
        overall += first * dx * da;
    }
    Diagnostics {
        total_opinion_density: p,
        age_marginal: pi,
        mean_by_age: m,
        overall_mean: overall,
        variance_by_age: v,
    }
}

/// Second moment of the age-a opinion law at time t when φ ≡ 1 and M ≡ 1.
///
/// `var_rho0_at(b)` is the second moment of ρ0(b, ·).
pub fn variance_closed_form<F: Fn(f64) -> f64>(t: f64, a: f64, params: &ModelParams, var_mu: f64, var_rho0_at: F) -> f64 {
    let half = 0.5 * params.sigma * params.sigma;
    let tau = params.tau;
    if a <= tau * t {
        let s = if tau > 0.0 { a / tau } else { 0.0 };
        half + (var_mu - half) * (-2.0 * s).exp()
    } else {
        half + (var_rho0_at(a - tau * t) - half) * (-2.0 * t).exp()
    }
}
