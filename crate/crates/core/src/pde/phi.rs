use crate::error::{Error, Result};
use crate::model::InteractionFunction;
use crate::pde::grid::centered_iface;
use crate::quadrature::gauss_legendre3;

/// Φ(i, j) = ∫ over opinion cell j of ϕ(y − x_i) dy, for every interface x_i.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    nx: usize,
    /// Row-major by interface: `values[i * nx + j]`, `i` in `0..=nx`.
    values: Vec<f64>,
    /// Per row, the range of mirrored pairs (j, nx − 1 − j) with a nonzero entry.
    pairs: Vec<(usize, usize)>,
}

impl InteractionMatrix {
    pub fn build(f: &InteractionFunction, nx: usize, lo: f64, hi: f64) -> Result<Self> {
        if nx < 2 || nx % 2 != 0 {
            return Err(Error::OddGrid(nx));
        }
        // Differences are formed in coordinates centred on the domain midpoint,
        // so the mirrored entry is the exact negation.
        let y: Vec<f64> = (0..=nx).map(|i| centered_iface(lo, hi, nx, i)).collect();
        let mut values = vec![0.0; (nx + 1) * nx];
        let reach = f.support_radius();
        for i in 0..=nx {
            let xi = y[i];
            for j in 0..nx {
                let (a, b) = (y[j], y[j + 1]);
                if a - xi > reach || xi - b > reach {
                    continue;
                }
                values[i * nx + j] = gauss_legendre3(|s| f.varphi(s - xi), a, b);
            }
        }
        let half = nx / 2;
        let pairs = (0..=nx)
            .map(|i| {
                let row = &values[i * nx..(i + 1) * nx];
                let live = |j: usize| row[j] != 0.0 || row[nx - 1 - j] != 0.0;
                match (0..half).position(live) {
                    Some(first) => (first, half - (0..half).rev().position(live).unwrap()),
                    None => (0, 0),
                }
            })
            .collect();
        Ok(Self { nx, values, pairs })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.nx + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.nx..(i + 1) * self.nx]
    }

    /// out[i] = Σ_j Φ(i, j)·u[j] for every interface, summing mirrored cells in pairs.
    ///
    /// For mirror-symmetric `u` the result is exactly antisymmetric.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let nx = self.nx;
        debug_assert_eq!(u.len(), nx);
        debug_assert_eq!(out.len(), nx + 1);
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.row(i);
            let (first, end) = self.pairs[i];
            let mut acc = 0.0;
            for j in first..end {
                let jm = nx - 1 - j;
                acc += row[j] * u[j] + row[jm] * u[jm];
            }
            *o = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_phi_is_analytic() {
        let m = InteractionMatrix::build(&InteractionFunction::Constant, 4, -1.0, 1.0).unwrap();
        // interface 2 sits at x = 0, cell 3 is (0.5, 1)
        assert!((m.get(2, 3) - 0.375).abs() < 1e-15);
        let dx = 0.5;
        for i in 0..=4 {
            let xi = -1.0 + i as f64 * dx;
            for j in 0..4 {
                let c = -1.0 + (j as f64 + 0.5) * dx;
                assert!((m.get(i, j) - dx * (c - xi)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mirrored_entries_are_negated() {
        let f = InteractionFunction::bounded_confidence(0.4, 0.5).unwrap();
        let nx = 40;
        let m = InteractionMatrix::build(&f, nx, -1.0, 1.0).unwrap();
        for i in 0..=nx {
            for j in 0..nx {
                assert_eq!(m.get(i, j), -m.get(nx - i, nx - 1 - j));
            }
        }
        assert_eq!(m.get(nx / 2, 3), -m.get(nx / 2, nx - 4));
    }

    #[test]
    fn far_cells_vanish() {
        let f = InteractionFunction::bounded_confidence(0.1, 0.11).unwrap();
        let m = InteractionMatrix::build(&f, 100, -1.0, 1.0).unwrap();
        // interface 50 at x = 0; cell 70 spans (0.4, 0.42)
        assert_eq!(m.get(50, 70), 0.0);
        assert!(m.get(50, 52) > 0.0);
    }

    #[test]
    fn apply_is_antisymmetric_for_symmetric_input() {
        let f = InteractionFunction::bounded_confidence(0.4, 0.5).unwrap();
        let nx = 30;
        let m = InteractionMatrix::build(&f, nx, -1.0, 1.0).unwrap();
        let u: Vec<f64> = (0..nx).map(|j| {
            let d = (j as f64 - 14.5).abs();
            1.0 + (d * 0.37).sin()
        }).collect();
        let mut out = vec![0.0; nx + 1];
        m.apply(&u, &mut out);
        for i in 0..=nx {
            assert_eq!(out[i], -out[nx - i]);
        }
    }
}
