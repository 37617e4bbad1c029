use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Age-interaction kernel M(a, b): how strongly an agent of age `a` listens to one of age `b`.
///
/// Tables are piecewise constant on a uniform grid of `[0, A)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgeKernel {
    /// M ≡ 1.
    Uniform,
    /// M(a, b) = M(b), one value per age cell.
    OfTargetAgeOnly { values: Vec<f64> },
    /// Full table, row-major: `values[k * n + l] = M(a_k, a_l)`.
    Tabulated { n: usize, values: Vec<f64> },
    /// M(a, b) = δ_a(b). Only meaningful for the density model.
    DeltaSameAge,
}

impl AgeKernel {
    pub fn validate(&self) -> Result<()> {
        let values: &[f64] = match self {
            AgeKernel::Uniform | AgeKernel::DeltaSameAge => return Ok(()),
            AgeKernel::OfTargetAgeOnly { values } => values,
            AgeKernel::Tabulated { n, values } => {
                if values.len() != n * n {
                    return Err(Error::InvalidParams(format!(
                        "tabulated kernel needs {} entries, got {}",
                        n * n,
                        values.len()
                    )));
                }
                values
            }
        };
        if values.is_empty() {
            return Err(Error::InvalidParams("empty age kernel table".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParams(format!("age kernel entry {v} is not >= 0")));
        }
        Ok(())
    }

    /// Integral of M(b) over `[0, max_age]` for kernels that depend on the target age only.
    pub fn target_integral(&self, max_age: f64) -> Option<f64> {
        match self {
            AgeKernel::Uniform => Some(max_age),
            AgeKernel::OfTargetAgeOnly { values } => {
                let da = max_age / values.len() as f64;
                Some(values.iter().sum::<f64>() * da)
            }
            _ => None,
        }
    }

    /// Checks ∫ M(b) db = 1, as required on the steady-state path.
    pub fn check_normalized(&self, max_age: f64) -> Result<()> {
        match self.target_integral(max_age) {
            Some(total) if (total - 1.0).abs() <= 1e-12 => Ok(()),
            Some(total) => Err(Error::InvalidParams(format!(
                "age kernel must integrate to 1, got {total}"
            ))),
            None => Err(Error::KernelRejected(
                "kernel must depend on the target age only".into(),
            )),
        }
    }

    pub fn max_value(&self) -> f64 {
        match self {
            AgeKernel::Uniform => 1.0,
            AgeKernel::OfTargetAgeOnly { values } | AgeKernel::Tabulated { values, .. } => {
                values.iter().cloned().fold(0.0, f64::max)
            }
            AgeKernel::DeltaSameAge => f64::INFINITY,
        }
    }

    /// M(a, b) at the agent level.
    pub fn eval(&self, a: f64, b: f64, max_age: f64) -> Result<f64> {
        match self {
            AgeKernel::Uniform => Ok(1.0),
            AgeKernel::OfTargetAgeOnly { values } => Ok(values[cell_of(b, max_age, values.len())]),
            AgeKernel::Tabulated { n, values } => {
                Ok(values[cell_of(a, max_age, *n) * n + cell_of(b, max_age, *n)])
            }
            AgeKernel::DeltaSameAge => Err(Error::KernelRejected(
                "delta same-age kernel has no agent-level meaning".into(),
            )),
        }
    }

    /// M(a, b) = M(b, a) everywhere.
    pub fn is_symmetric(&self) -> bool {
        match self {
            AgeKernel::Uniform | AgeKernel::DeltaSameAge => true,
            AgeKernel::OfTargetAgeOnly { values } => values.windows(2).all(|w| w[0] == w[1]),
            AgeKernel::Tabulated { n, values } => {
                (0..*n).all(|k| (0..*n).all(|l| values[k * n + l] == values[l * n + k]))
            }
        }
    }

    /// Target-age weights resampled onto `na` age cells (cell-centre lookup).
    pub fn target_weights(&self, na: usize) -> Option<Vec<f64>> {
        match self {
            AgeKernel::Uniform => Some(vec![1.0; na]),
            AgeKernel::OfTargetAgeOnly { values } => Some(resample(values, na)),
            _ => None,
        }
    }

    /// Full table M(a_k, a_l) on `na` cells, row-major. `None` for the delta kernel.
    pub fn full_table(&self, na: usize) -> Option<Vec<f64>> {
        match self {
            AgeKernel::Uniform => Some(vec![1.0; na * na]),
            AgeKernel::OfTargetAgeOnly { values } => {
                let row = resample(values, na);
                Some((0..na).flat_map(|_| row.iter().cloned()).collect())
            }
            AgeKernel::Tabulated { n, values } => {
                let mut out = Vec::with_capacity(na * na);
                for k in 0..na {
                    let src_k = resample_index(k, na, *n);
                    for l in 0..na {
                        out.push(values[src_k * n + resample_index(l, na, *n)]);
                    }
                }
                Some(out)
            }
            AgeKernel::DeltaSameAge => None,
        }
    }
}

fn cell_of(a: f64, max_age: f64, n: usize) -> usize {
    let k = (a / max_age * n as f64).floor();
    if k < 0.0 {
        0
    } else {
        (k as usize).min(n - 1)
    }
}

fn resample_index(k: usize, na: usize, n: usize) -> usize {
    if na == n {
        k
    } else {
        (((k as f64 + 0.5) / na as f64 * n as f64) as usize).min(n - 1)
    }
}

fn resample(values: &[f64], na: usize) -> Vec<f64> {
    (0..na).map(|k| values[resample_index(k, na, values.len())]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(AgeKernel::OfTargetAgeOnly { values: vec![1.0, -0.1] }.validate().is_err());
        assert!(AgeKernel::Tabulated { n: 2, values: vec![1.0; 3] }.validate().is_err());
        assert!(AgeKernel::Tabulated { n: 2, values: vec![1.0; 4] }.validate().is_ok());
    }

    #[test]
    fn normalization_of_target_kernels() {
        let n = 50;
        let values: Vec<f64> = (0..n).map(|k| 2.0 * (1.0 - (k as f64 + 0.5) / n as f64)).collect();
        let k = AgeKernel::OfTargetAgeOnly { values };
        assert!(k.check_normalized(1.0).is_ok());
        assert!(AgeKernel::Uniform.check_normalized(1.0).is_ok());
        assert!(AgeKernel::DeltaSameAge.check_normalized(1.0).is_err());
        assert!(AgeKernel::OfTargetAgeOnly { values: vec![2.0; 4] }.check_normalized(1.0).is_err());
    }

    #[test]
    fn lookups() {
        let k = AgeKernel::OfTargetAgeOnly { values: vec![1.0, 3.0] };
        assert_eq!(k.eval(0.9, 0.2, 1.0).unwrap(), 1.0);
        assert_eq!(k.eval(0.1, 0.7, 1.0).unwrap(), 3.0);
        assert_eq!(k.target_weights(4).unwrap(), vec![1.0, 1.0, 3.0, 3.0]);
        assert!(AgeKernel::DeltaSameAge.eval(0.1, 0.1, 1.0).is_err());

        let t = AgeKernel::Tabulated { n: 2, values: vec![1.0, 2.0, 2.0, 5.0] };
        assert!(t.is_symmetric());
        assert_eq!(t.eval(0.7, 0.1, 1.0).unwrap(), 2.0);
        let full = t.full_table(4).unwrap();
        assert_eq!(full[3 * 4 + 3], 5.0);
        assert_eq!(full[1], 1.0);
        assert!(!AgeKernel::Tabulated { n: 2, values: vec![1.0, 2.0, 0.0, 5.0] }.is_symmetric());
    }
}
