//! Small quadrature helpers.

/// 3-point Gauss-Legendre nodes on [-1, 1] (the zero node first, then the pair).
const GL3_OFFSET: f64 = 0.774_596_669_241_483_4; // sqrt(3/5)
const GL3_W_CENTER: f64 = 8.0 / 9.0;
const GL3_W_SIDE: f64 = 5.0 / 9.0;

/// 3-point Gauss-Legendre rule on `[a, b]`; exact for polynomials up to degree 5.
///
/// The two outer nodes are summed as a pair so that mirrored intervals of an odd
/// integrand produce exactly negated results.
pub fn gauss_legendre3<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let left = f(mid - half * GL3_OFFSET);
    let right = f(mid + half * GL3_OFFSET);
    half * (GL3_W_CENTER * f(mid) + GL3_W_SIDE * (left + right))
}

const MAX_DEPTH: u32 = 48;

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol || (m - a) <= f64::EPSILON * a.abs().max(1.0) {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_quintics() {
        let f = |x: f64| 3.0 * x.powi(5) - x.powi(4) + 2.0 * x - 1.0;
        let primitive = |x: f64| 0.5 * x.powi(6) - x.powi(5) / 5.0 + x * x - x;
        let got = gauss_legendre3(f, -0.3, 0.7);
        assert!((got - (primitive(0.7) - primitive(-0.3))).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_mirror_antisymmetry_is_exact() {
        let f = |r: f64| r * (-r * r).exp();
        let a = gauss_legendre3(f, 0.1, 0.35);
        let b = gauss_legendre3(f, -0.35, -0.1);
        assert_eq!(a, -b);
    }

    #[test]
    fn simpson_reaches_tolerance() {
        let got = adaptive_simpson(&|x: f64| (-10.0 * (1.0 - x) * (1.0 - x)).exp(), -1.0, 1.0, 1e-13);
        // erf-based closed form: integral of exp(-10 u^2) over u in [0, 2]
        let exact = 0.5 * (std::f64::consts::PI / 10.0).sqrt() * erf(2.0 * 10f64.sqrt());
        assert!((got - exact).abs() < 1e-12, "{got} vs {exact}");
    }

    // Abramowitz-Stegun is not accurate enough here; use the series for small args
    // and the complement for large ones. At 6.32 erf is 1 to double precision.
    fn erf(x: f64) -> f64 {
        if x > 6.0 {
            return 1.0;
        }
        let mut term = x;
        let mut sum = x;
        for n in 1..200 {
            term *= -x * x / n as f64;
            sum += term / (2 * n + 1) as f64;
        }
        2.0 / std::f64::consts::PI.sqrt() * sum
    }
}
