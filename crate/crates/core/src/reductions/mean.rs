use crate::error::{Error, Result};
use crate::model::{AgeKernel, ModelParams, OpinionDistribution};
use crate::pde::{cell_center, StepDiagnostics};

/// Largest gap between the centred difference of m̄(t) and the birth/death plus
/// boundary-noise prediction, over the interior of a recorded run.
///
/// The prediction is τ(π(A)∫xμ − m(t, A)) + (σ²/2)(∫ρ(·, lo) da − ∫ρ(·, hi) da),
/// read off the last age cell and the boundary opinion cells.
pub fn check_mean_evolution(
    series: &[StepDiagnostics],
    params: &ModelParams,
    kernel: &AgeKernel,
    mu: &OpinionDistribution,
    nx: usize,
) -> Result<f64> {
    if !kernel.is_symmetric() {
        return Err(Error::KernelRejected("mean evolution needs M(a, b) = M(b, a)".into()));
    }
    let masses = mu.discretize(nx)?;
    let (lo, hi) = (params.opinion_lo, params.opinion_hi);
    let mu_mean: f64 = masses.iter().enumerate().map(|(j, m)| m * cell_center(lo, hi, nx, j)).sum();
    let half = 0.5 * params.sigma * params.sigma;
    let predicted = |d: &StepDiagnostics| {
        params.tau * (d.last_age_mass * mu_mean - d.last_age_moment) + half * (d.boundary_density_lo - d.boundary_density_hi)
    };
    let mut worst: f64 = 0.0;
    for w in series.windows(3) {
        let slope = (w[2].mean_opinion - w[0].mean_opinion) / (w[2].t - w[0].t);
        worst = worst.max((slope - predicted(&w[1])).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn asymmetric_kernel_is_refused() {
        let k = AgeKernel::OfTargetAgeOnly { values: vec![1.0, 2.0] };
        let p = ModelParams::default();
        let mu = OpinionDistribution::uniform(-1.0, 1.0);
        assert!(check_mean_evolution(&[], &p, &k, &mu, 10).is_err());
        assert_eq!(check_mean_evolution(&[], &p, &AgeKernel::Uniform, &mu, 10).unwrap(), 0.0);
    }
}
