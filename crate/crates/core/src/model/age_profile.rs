//! Stationary age profiles of an age-dependent death process and the kernel
//! that folds such a profile into the age interactions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::AgeKernel;
use crate::quadrature::adaptive_simpson;

/// π(A⁻)/max π above this means the death rate does not confine ages to [0, A].
pub const SUPPORT_TOLERANCE: f64 = 1e-6;
/// Relative distance below A at which π(A⁻) is probed.
const SUPPORT_PROBE: f64 = 1e-9;

/// Named death-rate families d(a).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeathRate {
    /// d(a) = 1 / (A − a); stationary profile 2(1 − a/A)/A.
    Reciprocal,
    /// d ≡ c.
    Constant { rate: f64 },
    /// d(a) = max(0, 1/(A − a) − 1/width): zero until the last `width` of ages.
    TerminalSpike { width: f64 },
}

impl DeathRate {
    pub fn rate(&self, a: f64, max_age: f64) -> f64 {
        match *self {
            DeathRate::Reciprocal => 1.0 / (max_age - a),
            DeathRate::Constant { rate } => rate,
            DeathRate::TerminalSpike { width } => (1.0 / (max_age - a) - 1.0 / width).max(0.0),
        }
    }
}

/// π(a) ∝ exp(−∫₀ᵃ d) at the `na` age-cell centres, normalized so Σ π Δa = 1.
pub fn stationary_age_profile<D: Fn(f64) -> f64>(death_rate: D, na: usize, max_age: f64) -> Result<Vec<f64>> {
    if na == 0 {
        return Err(Error::InvalidParams("age profile needs at least one cell".into()));
    }
    let da = max_age / na as f64;
    let tol = 1e-13;
    let mut cumulative = 0.0;
    let mut prev = 0.0;
    let mut log_pi = Vec::with_capacity(na);
    for k in 0..na {
        let a = (k as f64 + 0.5) * da;
        cumulative += adaptive_simpson(&death_rate, prev, a, tol);
        prev = a;
        log_pi.push(-cumulative);
    }
    if log_pi.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams("death rate integral is not finite".into()));
    }
    let probe = max_age * (1.0 - SUPPORT_PROBE);
    let tail = cumulative + adaptive_simpson(&death_rate, prev, probe, tol);
    let log_max = log_pi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ratio = (-tail - log_max).exp();
    if !(ratio <= SUPPORT_TOLERANCE) {
        return Err(Error::NonCompactSupport { ratio });
    }
    let mut pi: Vec<f64> = log_pi.iter().map(|l| (l - log_max).exp()).collect();
    let total: f64 = pi.iter().sum::<f64>() * da;
    for p in pi.iter_mut() {
        *p /= total;
    }
    Ok(pi)
}

/// M′(a, b) = M(a, b)·π(b). Target-only kernels stay target-only.
pub fn build_mk_kernel(base: &AgeKernel, pi: &[f64]) -> Result<AgeKernel> {
    let na = pi.len();
    match base {
        AgeKernel::Uniform => Ok(AgeKernel::OfTargetAgeOnly { values: pi.to_vec() }),
        AgeKernel::OfTargetAgeOnly { .. } => {
            let m = base.target_weights(na).expect("target-only kernel");
            Ok(AgeKernel::OfTargetAgeOnly {
                values: m.iter().zip(pi).map(|(m, p)| m * p).collect(),
            })
        }
        AgeKernel::Tabulated { .. } => {
            let mut table = base.full_table(na).expect("tabulated kernel");
            for k in 0..na {
                for l in 0..na {
                    table[k * na + l] *= pi[l];
                }
            }
            Ok(AgeKernel::Tabulated { n: na, values: table })
        }
        AgeKernel::DeltaSameAge => Err(Error::KernelRejected(
            "the delta kernel cannot absorb an age profile".into(),
        )),
    }
}
