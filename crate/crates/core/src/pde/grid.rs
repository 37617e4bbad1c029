use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cell-averaged joint density ρ on an age × opinion grid.
///
/// Storage is age-major: `values[k * nx + j]` is the density in age cell `k`,
/// opinion cell `j`, so every age column is a contiguous slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    nx: usize,
    na: usize,
    lo: f64,
    hi: f64,
    max_age: f64,
    values: Vec<f64>,
}

impl DensityGrid {
    pub fn zeros(nx: usize, na: usize, lo: f64, hi: f64, max_age: f64) -> Result<Self> {
        if nx < 2 || nx % 2 != 0 {
            return Err(Error::OddGrid(nx));
        }
        if na == 0 {
            return Err(Error::InvalidParams("age grid needs at least one cell".into()));
        }
        if !(lo < hi) || !(max_age > 0.0) {
            return Err(Error::InvalidParams("empty grid domain".into()));
        }
        Ok(Self {
            nx,
            na,
            lo,
            hi,
            max_age,
            values: vec![0.0; nx * na],
        })
    }

    /// ρ(a_k, x_j) = age_density[k] · masses[j] / dx.
    pub fn separable(age_density: &[f64], masses: &[f64], lo: f64, hi: f64, max_age: f64) -> Result<Self> {
        let mut g = Self::zeros(masses.len(), age_density.len(), lo, hi, max_age)?;
        let dx = g.dx();
        for (k, p) in age_density.iter().enumerate() {
            for (j, m) in masses.iter().enumerate() {
                g.values[k * g.nx + j] = p * m / dx;
            }
        }
        Ok(g)
    }

    pub fn from_values(nx: usize, na: usize, lo: f64, hi: f64, max_age: f64, values: Vec<f64>) -> Result<Self> {
        let mut g = Self::zeros(nx, na, lo, hi, max_age)?;
        if values.len() != nx * na {
            return Err(Error::InvalidParams(format!(
                "grid needs {} values, got {}",
                nx * na,
                values.len()
            )));
        }
        g.values = values;
        Ok(g)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn na(&self) -> usize {
        self.na
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn max_age(&self) -> f64 {
        self.max_age
    }

    pub fn dx(&self) -> f64 {
        (self.hi - self.lo) / self.nx as f64
    }

    pub fn da(&self) -> f64 {
        self.max_age / self.na as f64
    }

    /// Opinion-cell centre, computed symmetrically about the domain midpoint.
    pub fn x_center(&self, j: usize) -> f64 {
        cell_center(self.lo, self.hi, self.nx, j)
    }

    /// Interface `i` (0..=nx); interface `i` is the left edge of cell `i`.
    pub fn x_iface(&self, i: usize) -> f64 {
        interface(self.lo, self.hi, self.nx, i)
    }

    pub fn a_center(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.da()
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[k * self.nx + j]
    }

    pub fn set(&mut self, j: usize, k: usize, v: f64) {
        self.values[k * self.nx + j] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.values[k * self.nx..(k + 1) * self.nx]
    }

    pub fn column_mut(&mut self, k: usize) -> &mut [f64] {
        let nx = self.nx;
        &mut self.values[k * nx..(k + 1) * nx]
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx() * self.da()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Σ_j ρ(j, k) dx.
    pub fn column_mass(&self, k: usize) -> f64 {
        self.column(k).iter().sum::<f64>() * self.dx()
    }

    /// max |ρ(a, x) − ρ(a, −x)| over the grid.
    pub fn mirror_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..self.na {
            let col = self.column(k);
            for j in 0..self.nx / 2 {
                worst = worst.max((col[j] - col[self.nx - 1 - j]).abs());
            }
        }
        worst
    }

    /// max |a − b| over matching cells.
    pub fn sup_distance(&self, other: &DensityGrid) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "grid shapes differ");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn cell_center(lo: f64, hi: f64, nx: usize, j: usize) -> f64 {
    let c = 0.5 * (lo + hi);
    c + centered_center(lo, hi, nx, j)
}

pub(crate) fn interface(lo: f64, hi: f64, nx: usize, i: usize) -> f64 {
    let c = 0.5 * (lo + hi);
    c + centered_iface(lo, hi, nx, i)
}

/// Cell centre relative to the domain midpoint; exactly odd under j → nx − 1 − j.
pub(crate) fn centered_center(lo: f64, hi: f64, nx: usize, j: usize) -> f64 {
    let half = 0.5 * (hi - lo);
    half * (2.0 * j as f64 + 1.0 - nx as f64) / nx as f64
}

/// Interface relative to the domain midpoint; exactly odd under i → nx − i.
pub(crate) fn centered_iface(lo: f64, hi: f64, nx: usize, i: usize) -> f64 {
    let half = 0.5 * (hi - lo);
    half * (2.0 * i as f64 - nx as f64) / nx as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_is_mirror_exact() {
        let g = DensityGrid::zeros(200, 3, -1.0, 1.0, 1.0).unwrap();
        for j in 0..200 {
            assert_eq!(g.x_center(j), -g.x_center(199 - j));
        }
        for i in 0..=200 {
            assert_eq!(g.x_iface(i), -g.x_iface(200 - i));
        }
        assert_eq!(g.x_iface(0), -1.0);
        assert_eq!(g.x_iface(200), 1.0);
        assert!((g.x_center(0) + 0.995).abs() < 1e-15);
    }

    #[test]
    fn rejects_odd_grids() {
        assert!(matches!(DensityGrid::zeros(5, 3, -1.0, 1.0, 1.0), Err(Error::OddGrid(5))));
    }

    #[test]
    fn separable_mass() {
        let g = DensityGrid::separable(&[1.0; 10], &[0.25; 4], -1.0, 1.0, 1.0).unwrap();
        assert!((g.total_mass() - 1.0).abs() < 1e-14);
        assert!((g.get(0, 0) - 0.5).abs() < 1e-15);
        assert_eq!(g.mirror_defect(), 0.0);
    }
}
