use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opinion interaction weight φ(r) as a function of the opinion difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InteractionFunction {
    /// φ ≡ 1: everybody interacts with everybody.
    Constant,
    /// Bounded confidence with a C² quintic smoothstep between `r1` and `r2`.
    BoundedConfidence { r1: f64, r2: f64 },
}

impl InteractionFunction {
    pub fn bounded_confidence(r1: f64, r2: f64) -> Result<Self> {
        let f = InteractionFunction::BoundedConfidence { r1, r2 };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            InteractionFunction::Constant => Ok(()),
            InteractionFunction::BoundedConfidence { r1, r2 } => {
                if r1.is_finite() && r2.is_finite() && 0.0 < r1 && r1 < r2 {
                    Ok(())
                } else {
                    Err(Error::InvalidParams(format!(
                        "bounded confidence needs 0 < r1 < r2, got r1 = {r1}, r2 = {r2}"
                    )))
                }
            }
        }
    }

    /// φ(r) ∈ [0, 1]; depends on |r| only.
    #[inline]
    pub fn phi(&self, r: f64) -> f64 {
        match *self {
            InteractionFunction::Constant => 1.0,
            InteractionFunction::BoundedConfidence { r1, r2 } => {
                let d = r.abs();
                if d < r1 {
                    1.0
                } else if d > r2 {
                    0.0
                } else {
                    1.0 - smoothstep((d - r1) / (r2 - r1))
                }
            }
        }
    }

    /// ϕ(r) = φ(r)·r. Computed from |r| so that ϕ(-r) = -ϕ(r) bit for bit.
    #[inline]
    pub fn varphi(&self, r: f64) -> f64 {
        let d = r.abs();
        let v = self.phi(d) * d;
        if r < 0.0 {
            -v
        } else {
            v
        }
    }

    /// Upper bound of |ϕ| over opinion differences up to `width`.
    pub fn varphi_bound(&self, width: f64) -> f64 {
        match *self {
            InteractionFunction::Constant => width,
            InteractionFunction::BoundedConfidence { r2, .. } => r2.min(width),
        }
    }

    /// Largest difference with nonzero weight.
    pub fn support_radius(&self) -> f64 {
        match *self {
            InteractionFunction::Constant => f64::INFINITY,
            InteractionFunction::BoundedConfidence { r2, .. } => r2,
        }
    }
}

/// Quintic smoothstep 6t⁵ − 15t⁴ + 10t³, clamped to [0, 1].
#[inline]
fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sbc() -> InteractionFunction {
        InteractionFunction::bounded_confidence(0.4, 0.5).unwrap()
    }

    #[test]
    fn phi_examples() {
        let f = sbc();
        assert_eq!(f.phi(0.2), 1.0);
        assert_eq!(f.phi(0.7), 0.0);
        assert!((f.phi(0.45) - 0.5).abs() < 1e-15);
        assert_eq!(InteractionFunction::Constant.phi(-1.7), 1.0);
    }

    #[test]
    fn varphi_examples() {
        let f = sbc();
        assert_eq!(f.varphi(0.0), 0.0);
        assert_eq!(InteractionFunction::Constant.varphi(0.0), 0.0);
        assert!((f.varphi(0.2) - 0.2).abs() < 1e-15);
        // oracle: 1 - s(0.5) with s the smoothstep polynomial evaluated by hand
        let t: f64 = 0.5;
        let s = 6.0 * t.powi(5) - 15.0 * t.powi(4) + 10.0 * t.powi(3);
        let expected = -(1.0 - s) * 0.45;
        assert!((f.varphi(-0.45) - expected).abs() < 1e-15);
        assert!((f.varphi(-0.45) + 0.225).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_radii() {
        assert!(InteractionFunction::bounded_confidence(0.5, 0.4).is_err());
        assert!(InteractionFunction::bounded_confidence(0.0, 0.4).is_err());
    }

    #[test]
    fn phi_is_c2_across_junctions() {
        // finite differences of the first and second derivative are continuous
        // when approaching r1 and r2 from both sides
        let f = sbc();
        let h = 1e-6;
        let d1 = |r: f64| (f.phi(r + h) - f.phi(r - h)) / (2.0 * h);
        let d2 = |r: f64| (f.phi(r + h) - 2.0 * f.phi(r) + f.phi(r - h)) / (h * h);
        for &r in &[0.4, 0.5] {
            let eps = 1e-5;
            assert!((d1(r - eps) - d1(r + eps)).abs() < 0.05, "first derivative jumps at {r}");
            assert!((d2(r - eps) - d2(r + eps)).abs() < 1.5, "second derivative jumps at {r}");
        }
        // second derivative bounded overall: max |s''| / (r2 - r1)^2 = 5.77 / 0.01
        let h2 = 1e-4;
        let d2c = |r: f64| (f.phi(r + h2) - 2.0 * f.phi(r) + f.phi(r - h2)) / (h2 * h2);
        for i in 0..2000 {
            let r = -1.0 + i as f64 * 1e-3;
            assert!(d2c(r).abs() < 600.0);
        }
    }

    proptest! {
        #[test]
        fn phi_in_unit_interval(r in -3.0f64..3.0, r1 in 0.01f64..1.0, gap in 0.001f64..1.0) {
            let f = InteractionFunction::BoundedConfidence { r1, r2: r1 + gap };
            let v = f.phi(r);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, f.phi(-r));
        }

        #[test]
        fn varphi_is_odd(r in -3.0f64..3.0) {
            let f = sbc();
            prop_assert_eq!(f.varphi(r), -f.varphi(-r));
            prop_assert_eq!(InteractionFunction::Constant.varphi(r), -InteractionFunction::Constant.varphi(-r));
        }
    }
}
