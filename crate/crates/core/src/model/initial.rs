use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{ModelParams, OpinionDistribution};
use crate::pde::DensityGrid;

/// Initial joint law of (age, opinion).
#[derive(Debug, Clone)]
pub enum InitialDensity {
    /// Uniform ages, opinions from the given law independently of age.
    UniformAge(OpinionDistribution),
    /// Tabulated age density (one value per age cell, ∫ = 1) times an opinion law.
    Separable {
        age_density: Vec<f64>,
        opinion: OpinionDistribution,
    },
    /// Joint density on a grid (ages conditional on the cell).
    Grid(DensityGrid),
}

impl InitialDensity {
    /// Cell-averaged density on an `nx` × `na` grid of the model domain.
    pub fn to_grid(&self, params: &ModelParams, nx: usize, na: usize) -> Result<DensityGrid> {
        let (lo, hi, a) = (params.opinion_lo, params.opinion_hi, params.max_age);
        match self {
            InitialDensity::UniformAge(dist) => {
                let masses = dist.discretize(nx)?;
                DensityGrid::separable(&vec![1.0 / a; na], &masses, lo, hi, a)
            }
            InitialDensity::Separable { age_density, opinion } => {
                if age_density.len() != na {
                    return Err(Error::InvalidParams(format!(
                        "age density has {} cells, grid has {na}",
                        age_density.len()
                    )));
                }
                let masses = opinion.discretize(nx)?;
                DensityGrid::separable(age_density, &masses, lo, hi, a)
            }
            InitialDensity::Grid(g) => {
                if g.nx() != nx || g.na() != na {
                    return Err(Error::InvalidParams(format!(
                        "initial grid is {}x{}, run grid is {nx}x{na}",
                        g.nx(),
                        g.na()
                    )));
                }
                Ok(g.clone())
            }
        }
    }

    /// One (age, opinion) draw.
    pub fn sample<R: Rng + ?Sized>(&self, params: &ModelParams, rng: &mut R) -> (f64, f64) {
        let a_max = params.max_age;
        match self {
            InitialDensity::UniformAge(dist) => {
                let age = rng.random::<f64>() * a_max;
                (age, dist.sample(rng))
            }
            InitialDensity::Separable { age_density, opinion } => {
                let na = age_density.len();
                let k = pick_cell(age_density, rng);
                let age = (k as f64 + rng.random::<f64>()) * a_max / na as f64;
                (age.min(a_max * (1.0 - f64::EPSILON)), opinion.sample(rng))
            }
            InitialDensity::Grid(g) => {
                let idx = pick_cell(g.values(), rng);
                let (k, j) = (idx / g.nx(), idx % g.nx());
                let age = (k as f64 + rng.random::<f64>()) * g.da();
                let x = g.x_iface(j) + rng.random::<f64>() * g.dx();
                (age.min(a_max * (1.0 - f64::EPSILON)), x.clamp(params.opinion_lo, params.opinion_hi))
            }
        }
    }

    /// Opinion law used for every age, when there is one.
    pub fn opinion_law(&self) -> Option<&OpinionDistribution> {
        match self {
            InitialDensity::UniformAge(d) | InitialDensity::Separable { opinion: d, .. } => Some(d),
            InitialDensity::Grid(_) => None,
        }
    }
}

fn pick_cell<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().map(|w| w.max(0.0)).sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        let w = w.max(0.0);
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}
