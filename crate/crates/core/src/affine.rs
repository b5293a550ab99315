//! Scalars affine in (v^2, vdot): the common currency between the force
//! model and the speed planner. All stage-frozen forces, moments and wheel
//! loads take this form, which is what makes the safety program convex.

use core::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AffineScalar {
    pub c0: f64,
    pub c_v2: f64,
    pub c_vd: f64,
}

impl AffineScalar {
    pub const ZERO: AffineScalar = AffineScalar { c0: 0.0, c_v2: 0.0, c_vd: 0.0 };

    pub const fn new(c0: f64, c_v2: f64, c_vd: f64) -> Self {
        AffineScalar { c0, c_v2, c_vd }
    }

    pub const fn constant(c0: f64) -> Self {
        AffineScalar { c0, c_v2: 0.0, c_vd: 0.0 }
    }

    /// Purely quadratic-in-speed term.
    pub const fn v2_term(c: f64) -> Self {
        AffineScalar { c0: 0.0, c_v2: c, c_vd: 0.0 }
    }

    /// Purely acceleration term.
    pub const fn vd_term(c: f64) -> Self {
        AffineScalar { c0: 0.0, c_v2: 0.0, c_vd: c }
    }

    pub fn value(&self, v2: f64, vdot: f64) -> f64 {
        self.c0 + self.c_v2 * v2 + self.c_vd * vdot
    }
}

impl Add for AffineScalar {
    type Output = AffineScalar;
    fn add(self, o: AffineScalar) -> AffineScalar {
        AffineScalar::new(self.c0 + o.c0, self.c_v2 + o.c_v2, self.c_vd + o.c_vd)
    }
}

impl Sub for AffineScalar {
    type Output = AffineScalar;
    fn sub(self, o: AffineScalar) -> AffineScalar {
        AffineScalar::new(self.c0 - o.c0, self.c_v2 - o.c_v2, self.c_vd - o.c_vd)
    }
}

impl Mul<f64> for AffineScalar {
    type Output = AffineScalar;
    fn mul(self, k: f64) -> AffineScalar {
        AffineScalar::new(self.c0 * k, self.c_v2 * k, self.c_vd * k)
    }
}

impl Neg for AffineScalar {
    type Output = AffineScalar;
    fn neg(self) -> AffineScalar {
        self * -1.0
    }
}

/// Re-fit affine coefficients from three independent evaluations. Test
/// helper for the affinity audits, but also handy for debugging.
pub fn refit(f: impl Fn(f64, f64) -> f64) -> AffineScalar {
    let c0 = f(0.0, 0.0);
    AffineScalar::new(c0, f(1.0, 0.0) - c0, f(0.0, 1.0) - c0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refit_roundtrip() {
        let a = AffineScalar::new(3.0, -0.5, 2.25);
        let b = refit(|v2, vd| a.value(v2, vd));
        assert_eq!(a, b);
    }

    #[test]
    fn algebra() {
        let a = AffineScalar::new(1.0, 2.0, 3.0);
        let b = AffineScalar::new(0.5, -1.0, 4.0);
        assert_eq!((a + b).value(2.0, 3.0), a.value(2.0, 3.0) + b.value(2.0, 3.0));
        assert_eq!((a - b) * 2.0, AffineScalar::new(1.0, 6.0, -2.0));
    }
}
