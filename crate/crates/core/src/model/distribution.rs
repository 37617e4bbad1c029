use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;

/// Points in the tabulated CDF used for inverse-CDF sampling.
pub const CDF_POINTS: usize = 4096;
const QUAD_TOL: f64 = 1e-12;

/// Shape of an opinion law, as named in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionShape {
    Uniform,
    /// ∝ exp(−10 (1 − x)²), skewed towards positive opinions.
    ExpSkew,
    /// ∝ exp(−10 (0.8 + x)²) + exp(−10 x²): peaks at 0 and −0.8.
    Bimodal,
    /// Sum of Gaussian bumps exp(−(x − c)² / (2 w²)).
    Bumps { centers: Vec<f64>, width: f64 },
    /// Cell masses on a uniform grid of the opinion domain.
    Tabulated { masses: Vec<f64> },
}

impl DistributionShape {
    fn raw_density(&self, x: f64) -> f64 {
        match self {
            DistributionShape::Uniform => 1.0,
            DistributionShape::ExpSkew => (-10.0 * (1.0 - x) * (1.0 - x)).exp(),
            DistributionShape::Bimodal => {
                (-10.0 * (0.8 + x) * (0.8 + x)).exp() + (-10.0 * x * x).exp()
            }
            DistributionShape::Bumps { centers, width } => {
                let s = 2.0 * width * width;
                centers.iter().map(|c| (-(x - c) * (x - c) / s).exp()).sum()
            }
            DistributionShape::Tabulated { .. } => unreachable!("tabulated densities are piecewise constant"),
        }
    }

    /// Mirror symmetric about zero (on a symmetric domain).
    pub fn is_symmetric(&self) -> bool {
        match self {
            DistributionShape::Uniform => true,
            DistributionShape::ExpSkew | DistributionShape::Bimodal => false,
            DistributionShape::Bumps { centers, .. } => {
                let mut a: Vec<f64> = centers.clone();
                let mut b: Vec<f64> = centers.iter().map(|c| -c).collect();
                a.sort_by(f64::total_cmp);
                b.sort_by(f64::total_cmp);
                a == b
            }
            DistributionShape::Tabulated { masses } => {
                let n = masses.len();
                (0..n / 2).all(|j| masses[j] == masses[n - 1 - j])
            }
        }
    }
}

/// A normalized opinion law on `[lo, hi]` with a tabulated CDF for sampling.
#[derive(Debug, Clone)]
pub struct OpinionDistribution {
    shape: DistributionShape,
    lo: f64,
    hi: f64,
    /// Normalization constant κ for analytic shapes (1 for tabulated ones).
    kappa: f64,
    cdf_nodes: Vec<f64>,
    cdf: Vec<f64>,
}

impl OpinionDistribution {
    pub fn new(shape: DistributionShape, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::InvalidParams(format!("empty opinion domain [{lo}, {hi}]")));
        }
        match &shape {
            DistributionShape::Tabulated { masses } => {
                if masses.is_empty() || masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
                    return Err(Error::InvalidParams(
                        "tabulated distribution needs nonnegative cell masses".into(),
                    ));
                }
                let total: f64 = masses.iter().sum();
                if total <= 0.0 {
                    return Err(Error::InvalidParams("tabulated distribution has zero mass".into()));
                }
                let masses: Vec<f64> = masses.iter().map(|m| m / total).collect();
                let n = masses.len();
                let w = (hi - lo) / n as f64;
                let cdf_nodes: Vec<f64> = (0..=n).map(|i| lo + i as f64 * w).collect();
                let mut cdf = Vec::with_capacity(n + 1);
                let mut acc = 0.0;
                cdf.push(0.0);
                for m in &masses {
                    acc += m;
                    cdf.push(acc);
                }
                Ok(Self {
                    shape: DistributionShape::Tabulated { masses },
                    lo,
                    hi,
                    kappa: 1.0,
                    cdf_nodes,
                    cdf,
                })
            }
            DistributionShape::Bumps { centers, width } if centers.is_empty() || !(*width > 0.0) => Err(
                Error::InvalidParams("bumps need at least one centre and a positive width".into()),
            ),
            _ => {
                let raw = |x: f64| shape.raw_density(x);
                let step = (hi - lo) / (CDF_POINTS - 1) as f64;
                let cdf_nodes: Vec<f64> = (0..CDF_POINTS).map(|k| lo + k as f64 * step).collect();
                let mut cdf = Vec::with_capacity(CDF_POINTS);
                let mut acc = 0.0;
                cdf.push(0.0);
                for w in cdf_nodes.windows(2) {
                    acc += adaptive_simpson(&raw, w[0], w[1], QUAD_TOL / CDF_POINTS as f64);
                    cdf.push(acc);
                }
                let total = adaptive_simpson(&raw, lo, hi, QUAD_TOL);
                if !(total > 0.0) {
                    return Err(Error::InvalidParams("distribution has zero mass".into()));
                }
                let last = *cdf.last().unwrap();
                for c in cdf.iter_mut() {
                    *c /= last;
                }
                Ok(Self {
                    shape,
                    lo,
                    hi,
                    kappa: 1.0 / total,
                    cdf_nodes,
                    cdf,
                })
            }
        }
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        Self::new(DistributionShape::Uniform, lo, hi).expect("uniform law on a valid domain")
    }

    pub fn shape(&self) -> &DistributionShape {
        &self.shape
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn is_symmetric(&self) -> bool {
        self.lo == -self.hi && self.shape.is_symmetric()
    }

    /// Normalized density at `x` (zero outside the domain).
    pub fn density(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        match &self.shape {
            DistributionShape::Tabulated { masses } => {
                let n = masses.len();
                let w = (self.hi - self.lo) / n as f64;
                let j = (((x - self.lo) / w) as usize).min(n - 1);
                masses[j] / w
            }
            shape => self.kappa * shape.raw_density(x),
        }
    }

    /// Mass of the interval `[a, b]` ⊂ `[lo, hi]`.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        match &self.shape {
            DistributionShape::Tabulated { masses } => {
                let n = masses.len();
                let w = (self.hi - self.lo) / n as f64;
                let mut total = 0.0;
                for (j, m) in masses.iter().enumerate() {
                    let c0 = self.lo + j as f64 * w;
                    let overlap = (b.min(c0 + w) - a.max(c0)).max(0.0);
                    total += m * overlap / w;
                }
                total
            }
            shape => self.kappa * adaptive_simpson(&|x: f64| shape.raw_density(x), a, b, QUAD_TOL),
        }
    }

    /// Cell masses on `nx` equal cells of the domain; nonnegative, summing to 1.
    pub fn discretize(&self, nx: usize) -> Result<Vec<f64>> {
        if nx < 2 || nx % 2 != 0 {
            return Err(Error::OddGrid(nx));
        }
        if let DistributionShape::Tabulated { masses } = &self.shape {
            if masses.len() == nx {
                return Ok(masses.clone());
            }
        }
        let symmetric = self.is_symmetric();
        let dx = (self.hi - self.lo) / nx as f64;
        let mut masses = vec![0.0; nx];
        let upto = if symmetric { nx / 2 } else { nx };
        for (j, m) in masses.iter_mut().enumerate().take(upto) {
            let a = self.lo + j as f64 * dx;
            *m = self.mass_between(a, a + dx).max(0.0);
        }
        if symmetric {
            for j in 0..nx / 2 {
                masses[nx - 1 - j] = masses[j];
            }
        }
        let total: f64 = masses.iter().sum();
        for m in masses.iter_mut() {
            *m /= total;
        }
        Ok(masses)
    }

    /// One draw by inverse CDF with linear interpolation.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let i = self.cdf.partition_point(|&c| c <= u).clamp(1, self.cdf.len() - 1) - 1;
        let (c0, c1) = (self.cdf[i], self.cdf[i + 1]);
        let (x0, x1) = (self.cdf_nodes[i], self.cdf_nodes[i + 1]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        (x0 + t * (x1 - x0)).clamp(self.lo, self.hi)
    }
}
