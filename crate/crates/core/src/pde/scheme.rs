use crate::error::{Error, Result};
use crate::model::{AgeKernel, InteractionFunction, ModelParams, OpinionDistribution};
use crate::pde::{cfl_check, DensityGrid, InteractionMatrix};

/// Age kernel resampled onto the run's age grid.
#[derive(Debug, Clone)]
pub(crate) enum PreparedKernel {
    /// Weights M(a_l)·Δa; the field is the same in every age column.
    Target(Vec<f64>),
    /// Row-major M(a_k, a_l).
    Full(Vec<f64>),
    Delta,
}

impl PreparedKernel {
    pub(crate) fn new(kernel: &AgeKernel, na: usize, da: f64) -> Result<Self> {
        kernel.validate()?;
        Ok(match kernel {
            AgeKernel::Uniform | AgeKernel::OfTargetAgeOnly { .. } => {
                let w = kernel.target_weights(na).expect("target-only kernel");
                PreparedKernel::Target(w.iter().map(|m| m * da).collect())
            }
            AgeKernel::Tabulated { .. } => PreparedKernel::Full(kernel.full_table(na).expect("tabulated kernel")),
            AgeKernel::DeltaSameAge => PreparedKernel::Delta,
        })
    }
}

/// Λ at every interface and age cell: `values[k * (nx + 1) + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionField {
    nx: usize,
    na: usize,
    /// One column reused for all ages (kernels depending on the target age only).
    shared: bool,
    values: Vec<f64>,
}

impl InteractionField {
    fn new(nx: usize, na: usize) -> Self {
        Self {
            nx,
            na,
            shared: false,
            values: vec![0.0; (nx + 1) * na],
        }
    }

    pub fn na(&self) -> usize {
        self.na
    }

    /// Λ(·, a_k) over the nx + 1 interfaces.
    pub fn column(&self, k: usize) -> &[f64] {
        let k = if self.shared { 0 } else { k };
        &self.values[k * (self.nx + 1)..(k + 1) * (self.nx + 1)]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.column(k)[i]
    }

    pub fn max_abs(&self) -> f64 {
        let used = if self.shared { self.nx + 1 } else { self.values.len() };
        self.values[..used].iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

/// Λ(i, k) = Σ_l G_kl Σ_j Φ(i, j)·ρ(j, l)·Δa.
pub fn interaction_field(rho: &DensityGrid, phi: &InteractionMatrix, kernel: &AgeKernel) -> Result<InteractionField> {
    let prepared = PreparedKernel::new(kernel, rho.na(), rho.da())?;
    let mut field = InteractionField::new(rho.nx(), rho.na());
    let mut scratch = FieldScratch::new(rho.nx(), rho.na());
    compute_field(rho, phi, &prepared, &mut field, &mut scratch);
    Ok(field)
}

struct FieldScratch {
    u: Vec<f64>,
    w: Vec<f64>,
}

impl FieldScratch {
    fn new(nx: usize, na: usize) -> Self {
        Self {
            u: vec![0.0; nx],
            w: Vec::with_capacity((nx + 1) * na),
        }
    }
}

fn compute_field(
    rho: &DensityGrid,
    phi: &InteractionMatrix,
    kernel: &PreparedKernel,
    field: &mut InteractionField,
    scratch: &mut FieldScratch,
) {
    let (nx, na) = (rho.nx(), rho.na());
    let stride = nx + 1;
    match kernel {
        PreparedKernel::Target(weights) => {
            let u = &mut scratch.u;
            u.iter_mut().for_each(|v| *v = 0.0);
            for (l, w) in weights.iter().enumerate() {
                if *w == 0.0 {
                    continue;
                }
                for (uj, r) in u.iter_mut().zip(rho.column(l)) {
                    *uj += w * r;
                }
            }
            field.shared = true;
            phi.apply(u, &mut field.values[..stride]);
        }
        PreparedKernel::Delta => {
            field.shared = false;
            for k in 0..na {
                phi.apply(rho.column(k), &mut field.values[k * stride..(k + 1) * stride]);
            }
        }
        PreparedKernel::Full(table) => {
            field.shared = false;
            let da = rho.da();
            let w = &mut scratch.w;
            w.clear();
            w.resize(stride * na, 0.0);
            for l in 0..na {
                phi.apply(rho.column(l), &mut w[l * stride..(l + 1) * stride]);
            }
            for k in 0..na {
                let out = &mut field.values[k * stride..(k + 1) * stride];
                out.iter_mut().for_each(|v| *v = 0.0);
                for l in 0..na {
                    let g = table[k * na + l] * da;
                    if g == 0.0 {
                        continue;
                    }
                    for (o, wi) in out.iter_mut().zip(&w[l * stride..(l + 1) * stride]) {
                        *o += g * wi;
                    }
                }
            }
        }
    }
}

/// Explicit centred finite-volume step of one opinion column under the field `lambda`.
///
/// Boundary fluxes are zero; interior flux i (between cells i − 1 and i) is
/// ½(ρ_{i−1} + ρ_i)·Λ_i − (σ²/2)(ρ_i − ρ_{i−1})/Δx.
pub fn opinion_step_column(col: &mut [f64], lambda: &[f64], sigma: f64, dt: f64, dx: f64) {
    let nx = col.len();
    debug_assert_eq!(lambda.len(), nx + 1);
    let c = dt / dx;
    let d = 0.5 * sigma * sigma / dx;
    let mut f_left = 0.0;
    for j in 0..nx {
        let f_right = if j + 1 < nx {
            let (a, b) = (col[j], col[j + 1]);
            0.5 * (a + b) * lambda[j + 1] - d * (b - a)
        } else {
            0.0
        };
        col[j] -= c * (f_right - f_left);
        f_left = f_right;
    }
}

/// Opinion step on every age column.
pub fn opinion_step(rho: &mut DensityGrid, field: &InteractionField, sigma: f64, dt: f64) -> Result<()> {
    let dx = rho.dx();
    let lmax = field.max_abs();
    if dt * lmax / dx > 1.0 || sigma * sigma * dt / (dx * dx) > 1.0 {
        return Err(Error::CflViolation(cfl_check(
            &ModelParams { sigma, ..ModelParams::default() },
            rho.nx(),
            rho.na(),
            dt,
        )));
    }
    for k in 0..rho.na() {
        opinion_step_column(rho.column_mut(k), field.column(k), sigma, dt, dx);
    }
    Ok(())
}

/// Upwind age transport by a Courant number κ, reinjecting the exiting mass at age zero shaped by μ.
pub fn age_half_step(rho: &mut DensityGrid, mu_cells: &[f64], kappa: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::InvalidParams(format!("age Courant number {kappa} outside [0, 1]")));
    }
    apply_age_half_step(rho, mu_cells, kappa);
    Ok(())
}

fn apply_age_half_step(rho: &mut DensityGrid, mu_cells: &[f64], kappa: f64) {
    if kappa == 0.0 {
        return;
    }
    let (nx, na) = (rho.nx(), rho.na());
    let dx = rho.dx();
    let exiting = rho.column_mass(na - 1);
    let keep = 1.0 - kappa;
    // keep + kappa == 1 exactly
    let kappa = 1.0 - keep;
    let values = rho.values_mut();
    for k in (1..na).rev() {
        let (before, here) = values.split_at_mut(k * nx);
        let prev = &before[(k - 1) * nx..];
        for (h, p) in here[..nx].iter_mut().zip(prev) {
            *h = keep * *h + kappa * p;
        }
    }
    let inflow = kappa * exiting / dx;
    for (h, m) in values[..nx].iter_mut().zip(mu_cells) {
        *h = keep * *h + inflow * m;
    }
}

/// Reusable Strang splitting stepper for one grid and parameter set.
#[derive(Debug, Clone)]
pub struct StrangStepper {
    sigma: f64,
    dt: f64,
    kappa: f64,
    phi: InteractionMatrix,
    kernel: PreparedKernel,
    mu_cells: Vec<f64>,
    field: InteractionField,
    u: Vec<f64>,
    w: Vec<f64>,
}

impl StrangStepper {
    pub fn new(
        params: &ModelParams,
        f: &InteractionFunction,
        kernel: &AgeKernel,
        mu: &OpinionDistribution,
        nx: usize,
        na: usize,
        dt: f64,
    ) -> Result<Self> {
        params.validate()?;
        f.validate()?;
        let report = cfl_check(params, nx, na, dt);
        if !report.is_ok() {
            return Err(Error::CflViolation(report));
        }
        let phi = InteractionMatrix::build(f, nx, params.opinion_lo, params.opinion_hi)?;
        Self::with_matrix(params, phi, kernel, mu.discretize(nx)?, na, dt)
    }

    pub(crate) fn with_matrix(
        params: &ModelParams,
        phi: InteractionMatrix,
        kernel: &AgeKernel,
        mu_cells: Vec<f64>,
        na: usize,
        dt: f64,
    ) -> Result<Self> {
        let nx = phi.nx();
        let da = params.max_age / na as f64;
        Ok(Self {
            sigma: params.sigma,
            dt,
            kappa: 0.5 * params.tau * dt / da,
            phi,
            kernel: PreparedKernel::new(kernel, na, da)?,
            mu_cells,
            field: InteractionField::new(nx, na),
            u: vec![0.0; nx],
            w: Vec::new(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn mu_cells(&self) -> &[f64] {
        &self.mu_cells
    }

    pub fn phi(&self) -> &InteractionMatrix {
        &self.phi
    }

    /// The field used by the most recent opinion step.
    pub fn field(&self) -> &InteractionField {
        &self.field
    }

    /// Half age step, opinion step with Λ from the current state, half age step.
    pub fn step(&mut self, rho: &mut DensityGrid) {
        apply_age_half_step(rho, &self.mu_cells, self.kappa);
        let mut scratch = FieldScratch {
            u: std::mem::take(&mut self.u),
            w: std::mem::take(&mut self.w),
        };
        compute_field(rho, &self.phi, &self.kernel, &mut self.field, &mut scratch);
        self.u = scratch.u;
        self.w = scratch.w;
        let dx = rho.dx();
        for k in 0..rho.na() {
            opinion_step_column(rho.column_mut(k), self.field.column(k), self.sigma, self.dt, dx);
        }
        apply_age_half_step(rho, &self.mu_cells, self.kappa);
    }
}

/// One Strang step built from scratch; prefer [`StrangStepper`] for repeated steps.
pub fn strang_step(
    rho: &mut DensityGrid,
    params: &ModelParams,
    f: &InteractionFunction,
    kernel: &AgeKernel,
    mu: &OpinionDistribution,
    dt: f64,
) -> Result<()> {
    let mut stepper = StrangStepper::new(params, f, kernel, mu, rho.nx(), rho.na(), dt)?;
    stepper.step(rho);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_from(nx: usize, na: usize, f: impl Fn(usize, usize) -> f64) -> DensityGrid {
        let mut g = DensityGrid::zeros(nx, na, -1.0, 1.0, 1.0).unwrap();
        for k in 0..na {
            for j in 0..nx {
                g.set(j, k, f(j, k));
            }
        }
        let m = g.total_mass();
        g.values_mut().iter_mut().for_each(|v| *v /= m);
        g
    }

    #[test]
    fn field_of_uniform_density_is_minus_x() {
        let nx = 20;
        let g = grid_from(nx, 5, |_, _| 1.0);
        let phi = InteractionMatrix::build(&InteractionFunction::Constant, nx, -1.0, 1.0).unwrap();
        let field = interaction_field(&g, &phi, &AgeKernel::Uniform).unwrap();
        for k in 0..5 {
            for i in 0..=nx {
                assert!((field.get(i, k) + g.x_iface(i)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn field_of_single_cell_mass() {
        let nx = 20;
        let c = 13;
        let g = grid_from(nx, 4, |j, _| if j == c { 1.0 } else { 0.0 });
        let phi = InteractionMatrix::build(&InteractionFunction::Constant, nx, -1.0, 1.0).unwrap();
        let field = interaction_field(&g, &phi, &AgeKernel::Uniform).unwrap();
        for i in 0..=nx {
            assert!((field.get(i, 2) - (g.x_center(c) - g.x_iface(i))).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_and_tabulated_kernels() {
        let nx = 10;
        let na = 4;
        let g = grid_from(nx, na, |j, k| 1.0 + (j * (k + 1)) as f64 * 0.1);
        let phi = InteractionMatrix::build(&InteractionFunction::Constant, nx, -1.0, 1.0).unwrap();
        let delta = interaction_field(&g, &phi, &AgeKernel::DeltaSameAge).unwrap();
        let table = AgeKernel::Tabulated { n: na, values: vec![1.0; na * na] };
        let full = interaction_field(&g, &phi, &table).unwrap();
        let uni = interaction_field(&g, &phi, &AgeKernel::Uniform).unwrap();
        for k in 0..na {
            // own column only: dx Σ_j (x_j − x_i) ρ(j, k)
            let col = g.column(k);
            for i in 0..=nx {
                let expect: f64 = (0..nx).map(|j| g.dx() * (g.x_center(j) - g.x_iface(i)) * col[j]).sum();
                assert!((delta.get(i, k) - expect).abs() < 1e-12);
                assert!((full.get(i, k) - uni.get(i, k)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn opinion_step_conserves_column_mass() {
        let nx = 16;
        let g0 = grid_from(nx, 3, |j, k| 1.0 + ((j + 3 * k) as f64).sin().abs());
        let f = InteractionFunction::bounded_confidence(0.4, 0.5).unwrap();
        let phi = InteractionMatrix::build(&f, nx, -1.0, 1.0).unwrap();
        let field = interaction_field(&g0, &phi, &AgeKernel::Uniform).unwrap();
        let mut g = g0.clone();
        opinion_step(&mut g, &field, 0.1, 0.01).unwrap();
        for k in 0..3 {
            assert!((g.column_mass(k) - g0.column_mass(k)).abs() < 1e-14);
        }
        assert!(g.sup_distance(&g0) > 0.0);
    }

    #[test]
    fn zero_field_and_noise_is_identity() {
        let g0 = grid_from(8, 2, |j, _| 1.0 + j as f64);
        let mut g = g0.clone();
        let field = InteractionField::new(8, 2);
        opinion_step(&mut g, &field, 0.0, 0.1).unwrap();
        assert_eq!(g, g0);
    }

    #[test]
    fn opinion_step_mirror_by_hand() {
        // 4 cells, symmetric density, antisymmetric field
        let dx = 0.5;
        let (dt, sigma) = (0.05, 0.3);
        let mut col = vec![0.2, 0.7, 0.7, 0.2];
        let lam = [0.0, 0.4, 0.0, -0.4, 0.0];
        let d = 0.5 * sigma * sigma / dx;
        let f1 = 0.5 * (0.2 + 0.7) * 0.4 - d * (0.7 - 0.2);
        let f2 = 0.0;
        let f3 = -f1;
        let expect = [
            0.2 - dt / dx * (f1 - 0.0),
            0.7 - dt / dx * (f2 - f1),
            0.7 - dt / dx * (f3 - f2),
            0.2 - dt / dx * (0.0 - f3),
        ];
        opinion_step_column(&mut col, &lam, sigma, dt, dx);
        for j in 0..4 {
            assert!((col[j] - expect[j]).abs() < 1e-14);
        }
        assert!((col[0] - col[3]).abs() < 1e-14);
        assert!((col[1] - col[2]).abs() < 1e-14);
    }

    #[test]
    fn age_step_fixes_uniform_profile() {
        let nx = 8;
        let marg = [0.05, 0.1, 0.15, 0.2, 0.2, 0.15, 0.1, 0.05];
        let g0 = DensityGrid::separable(&[1.0; 6], &marg, -1.0, 1.0, 1.0).unwrap();
        let mut g = g0.clone();
        for _ in 0..10 {
            age_half_step(&mut g, &marg, 0.3).unwrap();
        }
        assert!(g.sup_distance(&g0) < 1e-14);
        assert_eq!(nx, g.nx());
    }

    #[test]
    fn long_age_transport_keeps_mass() {
        let marg = [0.05, 0.1, 0.15, 0.2, 0.2, 0.15, 0.1, 0.05];
        let mut g = grid_from(8, 20, |j, k| (1 + j + k % 3) as f64);
        for _ in 0..100_000 {
            age_half_step(&mut g, &marg, 0.0123).unwrap();
        }
        assert!((g.total_mass() - 1.0).abs() < 1e-13, "{}", g.total_mass() - 1.0);
    }

    #[test]
    fn full_courant_shift() {
        let g0 = grid_from(4, 3, |j, k| (1 + j + 4 * k) as f64);
        let mu = [0.1, 0.2, 0.3, 0.4];
        let mut g = g0.clone();
        age_half_step(&mut g, &mu, 1.0).unwrap();
        let exiting = g0.column_mass(2);
        for j in 0..4 {
            assert!((g.get(j, 0) - exiting * mu[j] / g.dx()).abs() < 1e-14);
            assert_eq!(g.get(j, 1), g0.get(j, 0));
            assert_eq!(g.get(j, 2), g0.get(j, 1));
        }
    }

    #[test]
    fn age_step_conserves_mass_on_three_cells() {
        let g0 = grid_from(4, 3, |j, k| (1 + j * j + 3 * k) as f64);
        let mu = [0.4, 0.1, 0.2, 0.3];
        let mut g = g0.clone();
        age_half_step(&mut g, &mu, 0.37).unwrap();
        // by hand: new column masses (1−κ)m_k + κ m_{k−1}, first gets κ m_last
        let m: Vec<f64> = (0..3).map(|k| g0.column_mass(k)).collect();
        let kap = 0.37;
        let expect = [(1.0 - kap) * m[0] + kap * m[2], (1.0 - kap) * m[1] + kap * m[0], (1.0 - kap) * m[2] + kap * m[1]];
        for k in 0..3 {
            assert!((g.column_mass(k) - expect[k]).abs() < 1e-14);
        }
        assert!((g.total_mass() - g0.total_mass()).abs() < 1e-14);
        assert!(age_half_step(&mut g, &mu, 1.5).is_err());
    }

    #[test]
    fn tau_zero_strang_is_opinion_step() {
        let params = ModelParams::new(0.0, 0.1).unwrap();
        let f = InteractionFunction::bounded_confidence(0.4, 0.5).unwrap();
        let mu = OpinionDistribution::uniform(-1.0, 1.0);
        let g0 = grid_from(20, 4, |j, k| 1.0 + 0.1 * ((j + k) % 5) as f64);
        let mut a = g0.clone();
        strang_step(&mut a, &params, &f, &AgeKernel::Uniform, &mu, 0.01).unwrap();
        let mut b = g0.clone();
        let phi = InteractionMatrix::build(&f, 20, -1.0, 1.0).unwrap();
        let field = interaction_field(&b, &phi, &AgeKernel::Uniform).unwrap();
        opinion_step(&mut b, &field, 0.1, 0.01).unwrap();
        assert_eq!(a, b);
    }
}
