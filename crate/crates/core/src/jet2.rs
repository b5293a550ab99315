//! Second-order Taylor scalars: carry a value together with first and
//! second derivatives with respect to a single curve parameter. Evaluating
//! a formula in `Jet2` arithmetic yields exact analytic derivatives.

use core::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2 {
    pub f: f64,
    pub df: f64,
    pub ddf: f64,
}

impl Jet2 {
    pub const fn constant(f: f64) -> Self {
        Jet2 { f, df: 0.0, ddf: 0.0 }
    }

    /// The curve parameter itself: value `f`, unit first derivative.
    pub const fn variable(f: f64) -> Self {
        Jet2 { f, df: 1.0, ddf: 0.0 }
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.f.sin_cos();
        Jet2 {
            f: s,
            df: c * self.df,
            ddf: c * self.ddf - s * self.df * self.df,
        }
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.f.sin_cos();
        Jet2 {
            f: c,
            df: -s * self.df,
            ddf: -s * self.ddf - c * self.df * self.df,
        }
    }

    pub fn sqrt(self) -> Self {
        let r = self.f.sqrt();
        Jet2 {
            f: r,
            df: 0.5 * self.df / r,
            ddf: 0.5 * self.ddf / r - 0.25 * self.df * self.df / (r * self.f),
        }
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        Jet2 { f: self.f + o.f, df: self.df + o.df, ddf: self.ddf + o.ddf }
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        Jet2 { f: self.f - o.f, df: self.df - o.df, ddf: self.ddf - o.ddf }
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        Jet2 {
            f: self.f * o.f,
            df: self.df * o.f + self.f * o.df,
            ddf: self.ddf * o.f + 2.0 * self.df * o.df + self.f * o.ddf,
        }
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, k: f64) -> Jet2 {
        Jet2 { f: self.f * k, df: self.df * k, ddf: self.ddf * k }
    }
}

impl Div for Jet2 {
    type Output = Jet2;
    fn div(self, o: Jet2) -> Jet2 {
        let f = self.f / o.f;
        let df = (self.df - f * o.df) / o.f;
        let ddf = (self.ddf - 2.0 * df * o.df - f * o.ddf) / o.f;
        Jet2 { f, df, ddf }
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        Jet2 { f: -self.f, df: -self.df, ddf: -self.ddf }
    }
}

/// 3-vector of jets, for curves in space.
#[derive(Debug, Clone, Copy)]
pub struct Jet2Vec3 {
    pub x: Jet2,
    pub y: Jet2,
    pub z: Jet2,
}

impl Jet2Vec3 {
    pub fn new(x: Jet2, y: Jet2, z: Jet2) -> Self {
        Jet2Vec3 { x, y, z }
    }

    pub fn value(&self) -> nalgebra::Vector3<f64> {
        nalgebra::Vector3::new(self.x.f, self.y.f, self.z.f)
    }

    pub fn deriv(&self) -> nalgebra::Vector3<f64> {
        nalgebra::Vector3::new(self.x.df, self.y.df, self.z.df)
    }

    pub fn deriv2(&self) -> nalgebra::Vector3<f64> {
        nalgebra::Vector3::new(self.x.ddf, self.y.ddf, self.z.ddf)
    }

    pub fn scale(&self, k: Jet2) -> Self {
        Jet2Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

impl Add for Jet2Vec3 {
    type Output = Jet2Vec3;
    fn add(self, o: Jet2Vec3) -> Jet2Vec3 {
        Jet2Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn num_derivs(f: impl Fn(f64) -> f64, x: f64) -> (f64, f64) {
        let h = 1e-5;
        let d = (f(x + h) - f(x - h)) / (2.0 * h);
        let dd = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
        (d, dd)
    }

    #[test]
    fn composite_expression_matches_finite_differences() {
        let g = |x: f64| (x.sin() * x + 2.0) / (x.cos() + 3.0);
        let x0 = 0.7;
        let j = Jet2::variable(x0);
        let out = (j.sin() * j + Jet2::constant(2.0)) / (j.cos() + Jet2::constant(3.0));
        let (d, dd) = num_derivs(g, x0);
        assert_relative_eq!(out.f, g(x0), max_relative = 1e-12);
        assert_relative_eq!(out.df, d, max_relative = 1e-8);
        assert_relative_eq!(out.ddf, dd, max_relative = 1e-4);
    }

    #[test]
    fn sqrt_derivatives() {
        let x0 = 2.3;
        let j = Jet2::variable(x0).sqrt();
        let (d, dd) = num_derivs(|x| x.sqrt(), x0);
        assert_relative_eq!(j.df, d, max_relative = 1e-8);
        assert_relative_eq!(j.ddf, dd, max_relative = 1e-4);
    }
}
