//! Natural cubic splines over a strictly increasing knot grid.
//!
//! Used for road profile curves (centerline curvature, bank, grade). Natural
//! boundary conditions keep the interpolant C2 on the whole domain, which the
//! second fundamental form requires.

use crate::jet2::Jet2;

#[derive(Debug, Clone)]
pub struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    /// Second derivatives at the knots (natural: zero at both ends).
    m: Vec<f64>,
    /// Cumulative integral of the spline from knots[0] to each knot.
    cum: Vec<f64>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SplineError {
    #[error("need at least two knots, got {0}")]
    TooFewKnots(usize),
    #[error("knots must be strictly increasing")]
    NonMonotoneKnots,
    #[error("knot/value length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

impl CubicSpline {
    pub fn natural(knots: Vec<f64>, values: Vec<f64>) -> Result<Self, SplineError> {
        let n = knots.len();
        if n < 2 {
            return Err(SplineError::TooFewKnots(n));
        }
        if values.len() != n {
            return Err(SplineError::LengthMismatch(n, values.len()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SplineError::NonMonotoneKnots);
        }

        // Tridiagonal system for interior second derivatives (Thomas algorithm).
        let mut m = vec![0.0; n];
        if n > 2 {
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                let h0 = knots[i + 1] - knots[i];
                let h1 = knots[i + 2] - knots[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0
                    * ((values[i + 2] - values[i + 1]) / h1
                        - (values[i + 1] - values[i]) / h0);
            }
            for i in 1..k {
                let h0 = knots[i + 1] - knots[i];
                let w = h0 / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (1..k).rev() {
                m[i] = (rhs[i - 1] - upper[i - 1] * m[i + 1]) / diag[i - 1];
            }
        }

        let mut cum = vec![0.0; n];
        for i in 1..n {
            cum[i] = cum[i - 1] + segment_integral(&knots, &values, &m, i - 1, knots[i]);
        }
        Ok(CubicSpline { knots, values, m, cum })
    }

    /// Constant profile over [a, b].
    pub fn constant(a: f64, b: f64, value: f64) -> Self {
        Self::natural(vec![a, b], vec![value, value]).expect("valid trivial knots")
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    fn segment(&self, s: f64) -> usize {
        // clamp so slight overshoot extrapolates the end segments
        match self.knots.binary_search_by(|k| k.partial_cmp(&s).unwrap()) {
            Ok(i) => i.min(self.knots.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.knots.len() - 2),
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        let i = self.segment(s);
        let (a, b, c, d, x0) = self.coeffs(i);
        let u = s - x0;
        a + u * (b + u * (c + u * d))
    }

    pub fn deriv(&self, s: f64) -> f64 {
        let i = self.segment(s);
        let (_, b, c, d, x0) = self.coeffs(i);
        let u = s - x0;
        b + u * (2.0 * c + u * 3.0 * d)
    }

    pub fn deriv2(&self, s: f64) -> f64 {
        let i = self.segment(s);
        let (_, _, c, d, x0) = self.coeffs(i);
        2.0 * c + 6.0 * d * (s - x0)
    }

    /// ∫ from the first knot to s (piecewise-quartic antiderivative, exact).
    pub fn integral(&self, s: f64) -> f64 {
        let i = self.segment(s);
        self.cum[i] + segment_integral(&self.knots, &self.values, &self.m, i, s)
    }

    /// Evaluate as a second-order jet in s.
    pub fn jet(&self, s: f64) -> Jet2 {
        Jet2 { f: self.eval(s), df: self.deriv(s), ddf: self.deriv2(s) }
    }

    /// Jet of the antiderivative: value ∫, derivative = spline value.
    pub fn integral_jet(&self, s: f64) -> Jet2 {
        Jet2 { f: self.integral(s), df: self.eval(s), ddf: self.deriv(s) }
    }

    fn coeffs(&self, i: usize) -> (f64, f64, f64, f64, f64) {
        let h = self.knots[i + 1] - self.knots[i];
        let a = self.values[i];
        let b = (self.values[i + 1] - self.values[i]) / h
            - h * (2.0 * self.m[i] + self.m[i + 1]) / 6.0;
        let c = self.m[i] / 2.0;
        let d = (self.m[i + 1] - self.m[i]) / (6.0 * h);
        (a, b, c, d, self.knots[i])
    }
}

fn segment_integral(knots: &[f64], values: &[f64], m: &[f64], i: usize, s: f64) -> f64 {
    let h = knots[i + 1] - knots[i];
    let a = values[i];
    let b = (values[i + 1] - values[i]) / h - h * (2.0 * m[i] + m[i + 1]) / 6.0;
    let c = m[i] / 2.0;
    let d = (m[i + 1] - m[i]) / (6.0 * h);
    let u = s - knots[i];
    u * (a + u * (b / 2.0 + u * (c / 3.0 + u * d / 4.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn interpolates_knots_exactly() {
        let xs = vec![0.0, 1.0, 2.5, 4.0];
        let ys = vec![1.0, -0.5, 2.0, 0.3];
        let sp = CubicSpline::natural(xs.clone(), ys.clone()).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert_relative_eq!(sp.eval(*x), *y, epsilon = 1e-12);
        }
    }

    #[test]
    fn c2_continuity_at_knots() {
        let xs: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (0.7 * x).sin()).collect();
        let sp = CubicSpline::natural(xs.clone(), ys).unwrap();
        for &x in &xs[1..7] {
            let e = 1e-9;
            assert_relative_eq!(sp.deriv(x - e), sp.deriv(x + e), epsilon = 1e-6);
            assert_relative_eq!(sp.deriv2(x - e), sp.deriv2(x + e), epsilon = 1e-5);
        }
    }

    #[test]
    fn natural_ends_have_zero_curvature() {
        let sp = CubicSpline::natural(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0]).unwrap();
        assert_relative_eq!(sp.deriv2(0.0), 0.0, epsilon = 1e-12);
        assert_relative_eq!(sp.deriv2(2.0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_profile_is_exact() {
        let sp = CubicSpline::constant(0.0, 10.0, 0.02);
        assert_eq!(sp.eval(3.7), 0.02);
        assert_eq!(sp.deriv(3.7), 0.0);
        assert_eq!(sp.deriv2(3.7), 0.0);
        assert_relative_eq!(sp.integral(5.0), 0.1, epsilon = 1e-14);
    }

    #[test]
    fn integral_matches_trapezoid() {
        let xs: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.cos()).collect();
        let sp = CubicSpline::natural(xs, ys).unwrap();
        let n = 200_000;
        let (a, b) = (0.0, 4.2);
        let mut acc = 0.0;
        for i in 0..n {
            let x0 = a + (b - a) * i as f64 / n as f64;
            let x1 = a + (b - a) * (i + 1) as f64 / n as f64;
            acc += 0.5 * (sp.eval(x0) + sp.eval(x1)) * (x1 - x0);
        }
        assert_relative_eq!(sp.integral(4.2), acc, max_relative = 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(
            CubicSpline::natural(vec![0.0], vec![1.0]).unwrap_err(),
            SplineError::TooFewKnots(1)
        );
        assert_eq!(
            CubicSpline::natural(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap_err(),
            SplineError::NonMonotoneKnots
        );
    }
}
