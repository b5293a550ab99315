//! Parametric ribbon road surfaces with exact analytic partial derivatives.
//!
//! A surface is x(s, y) = c(s) + y*b(s): a centerline c traced by arc length s
//! plus a lateral offset along the bank-rotated lateral unit vector b. Heading
//! comes from integrating the horizontal curvature profile, elevation from the
//! grade profile, and b is rotated about the centerline tangent by the bank
//! profile. Plane, banked arc and crest are exact special cases.

use nalgebra::{Matrix2, Matrix3, Vector3};

use crate::jet2::{Jet2, Jet2Vec3};
use crate::spline::{CubicSpline, SplineError};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RoadError {
    #[error("(s, y) = ({s}, {y}) outside surface domain")]
    OutOfDomain { s: f64, y: f64 },
    #[error("degenerate surface patch at (s, y) = ({s}, {y})")]
    DegenerateSurface { s: f64, y: f64 },
    #[error("bad profile data: {0}")]
    BadProfile(#[from] SplineError),
}

#[derive(Debug, Clone)]
enum SurfaceKind {
    Plane,
    BankedArc { radius: f64, bank: f64 },
    Crest { vertical_radius: f64 },
    Ribbon {
        kappa_c: CubicSpline,
        bank: CubicSpline,
        grade: CubicSpline,
        /// Centerline positions cached on a uniform grid; position at
        /// arbitrary s is the nearest cached point plus a short Gauss
        /// quadrature of the unit tangent.
        grid_step: f64,
        grid_pos: Vec<Vector3<f64>>,
    },
}

#[derive(Debug, Clone)]
pub struct RoadSurface {
    kind: SurfaceKind,
    s_max: f64,
    half_width: f64,
}

/// Surface position and partials up to second order at one (s, y).
#[derive(Debug, Clone, Copy)]
pub struct SurfaceJet {
    pub x: Vector3<f64>,
    pub x_s: Vector3<f64>,
    pub x_y: Vector3<f64>,
    pub x_ss: Vector3<f64>,
    pub x_sy: Vector3<f64>,
    pub x_yy: Vector3<f64>,
    pub e_n: Vector3<f64>,
    pub valid: bool,
}

/// First (metric) and second (curvature) fundamental forms.
#[derive(Debug, Clone, Copy)]
pub struct FundamentalForms {
    pub i: Matrix2<f64>,
    pub ii: Matrix2<f64>,
}

/// Tangent-plane frame data for a body at relative heading theta_s.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceFrame {
    pub theta_p: f64,
    pub q: Matrix2<f64>,
    pub j: Matrix2<f64>,
    /// Columns are the body axes e1, e2, e3 in world coordinates; e3 = e_n.
    pub r_gb: Matrix3<f64>,
}

/// 10-point Gauss-Legendre nodes (positive half) and weights on [-1, 1].
const GL_NODES: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL_WEIGHTS: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_3,
    0.219_086_362_515_982_0,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_1,
];

fn gauss10(a: f64, b: f64, f: impl Fn(f64) -> Vector3<f64>) -> Vector3<f64> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = Vector3::zeros();
    for (&x, &w) in GL_NODES.iter().zip(&GL_WEIGHTS) {
        acc += w * (f(c + h * x) + f(c - h * x));
    }
    acc * h
}

/// Centerline state at one s: heading/grade/bank jets plus world position.
struct CenterlineJets {
    psi: Jet2,
    gamma: Jet2,
    phi: Jet2,
    pos: Vector3<f64>,
}

impl RoadSurface {
    pub fn plane(s_max: f64, half_width: f64) -> Self {
        RoadSurface { kind: SurfaceKind::Plane, s_max, half_width }
    }

    /// Circular arc of given centerline radius (left turn for radius > 0),
    /// constant bank angle, spanning `arc_angle` radians.
    pub fn banked_arc(radius: f64, bank: f64, arc_angle: f64, half_width: f64) -> Self {
        RoadSurface {
            kind: SurfaceKind::BankedArc { radius, bank },
            s_max: radius.abs() * arc_angle,
            half_width,
        }
    }

    /// Vertical crest: centerline curving downward with the given vertical
    /// radius, apex at s = 0.
    pub fn crest(vertical_radius: f64, s_max: f64, half_width: f64) -> Self {
        RoadSurface { kind: SurfaceKind::Crest { vertical_radius }, s_max, half_width }
    }

    /// General ribbon from profile samples on a shared knot grid starting at 0.
    pub fn ribbon(
        knots: Vec<f64>,
        kappa_c: Vec<f64>,
        bank: Vec<f64>,
        grade: Vec<f64>,
        half_width: f64,
    ) -> Result<Self, RoadError> {
        let s_max = *knots.last().ok_or(SplineError::TooFewKnots(0))?;
        let kappa_c = CubicSpline::natural(knots.clone(), kappa_c)?;
        let bank = CubicSpline::natural(knots.clone(), bank)?;
        let grade = CubicSpline::natural(knots, grade)?;

        // Cache centerline positions on a fine grid by integrating the unit
        // tangent piece by piece.
        let grid_step = 0.25;
        let n = (s_max / grid_step).ceil() as usize + 1;
        let mut grid_pos = Vec::with_capacity(n);
        let tangent = |s: f64| {
            let psi = kappa_c.integral(s);
            let gamma = grade.eval(s);
            Vector3::new(gamma.cos() * psi.cos(), gamma.cos() * psi.sin(), gamma.sin())
        };
        let mut pos = Vector3::zeros();
        grid_pos.push(pos);
        for i in 1..n {
            let a = (i - 1) as f64 * grid_step;
            let b = (i as f64 * grid_step).min(s_max);
            pos += gauss10(a, b, tangent);
            grid_pos.push(pos);
        }
        Ok(RoadSurface {
            kind: SurfaceKind::Ribbon { kappa_c, bank, grade, grid_step, grid_pos },
            s_max,
            half_width,
        })
    }

    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn in_domain(&self, s: f64, y: f64) -> bool {
        s >= 0.0 && s <= self.s_max && y.abs() <= self.half_width
    }

    fn centerline(&self, s: f64) -> CenterlineJets {
        match &self.kind {
            SurfaceKind::Plane => CenterlineJets {
                psi: Jet2::constant(0.0),
                gamma: Jet2::constant(0.0),
                phi: Jet2::constant(0.0),
                pos: Vector3::new(s, 0.0, 0.0),
            },
            SurfaceKind::BankedArc { radius, bank } => {
                let a = s / radius;
                CenterlineJets {
                    psi: Jet2 { f: a, df: 1.0 / radius, ddf: 0.0 },
                    gamma: Jet2::constant(0.0),
                    phi: Jet2::constant(*bank),
                    pos: Vector3::new(radius * a.sin(), radius * (1.0 - a.cos()), 0.0),
                }
            }
            SurfaceKind::Crest { vertical_radius } => {
                let r = *vertical_radius;
                let a = s / r;
                CenterlineJets {
                    psi: Jet2::constant(0.0),
                    gamma: Jet2 { f: -a, df: -1.0 / r, ddf: 0.0 },
                    phi: Jet2::constant(0.0),
                    pos: Vector3::new(r * a.sin(), 0.0, r * a.cos() - r),
                }
            }
            SurfaceKind::Ribbon { kappa_c, bank, grade, grid_step, grid_pos } => {
                let i = ((s / grid_step).floor() as usize).min(grid_pos.len() - 1);
                let s_i = i as f64 * grid_step;
                let tangent = |sigma: f64| {
                    let psi = kappa_c.integral(sigma);
                    let gamma = grade.eval(sigma);
                    Vector3::new(
                        gamma.cos() * psi.cos(),
                        gamma.cos() * psi.sin(),
                        gamma.sin(),
                    )
                };
                let pos = grid_pos[i] + gauss10(s_i, s, tangent);
                CenterlineJets {
                    psi: kappa_c.integral_jet(s),
                    gamma: grade.jet(s),
                    phi: bank.jet(s),
                    pos,
                }
            }
        }
    }

    /// Position and exact partials up to second order at (s, y).
    pub fn eval_jet(&self, s: f64, y: f64) -> Result<SurfaceJet, RoadError> {
        if !self.in_domain(s, y) {
            return Err(RoadError::OutOfDomain { s, y });
        }
        let cl = self.centerline(s);
        let (psi, gamma, phi) = (cl.psi, cl.gamma, cl.phi);

        // Unit tangent t = c', horizontal lateral m, and their bank rotation.
        let t = Jet2Vec3::new(
            gamma.cos() * psi.cos(),
            gamma.cos() * psi.sin(),
            gamma.sin(),
        );
        let m = Jet2Vec3::new(-psi.sin(), psi.cos(), Jet2::constant(0.0));
        let u = jet_cross(t, m);
        let b = m.scale(phi.cos()) + u.scale(phi.sin());

        let x = cl.pos + y * b.value();
        let x_s = t.value() + y * b.deriv();
        let x_y = b.value();
        let x_ss = t.deriv() + y * b.deriv2();
        let x_sy = b.deriv();
        let x_yy = Vector3::zeros();

        let cross = x_s.cross(&x_y);
        let norm = cross.norm();
        if norm < 1e-9 {
            return Err(RoadError::DegenerateSurface { s, y });
        }
        Ok(SurfaceJet { x, x_s, x_y, x_ss, x_sy, x_yy, e_n: cross / norm, valid: true })
    }

    /// Arc length of the line y = const between s0 and s1.
    pub fn lane_arclength(&self, y: f64, s0: f64, s1: f64) -> Result<f64, RoadError> {
        if !self.in_domain(s0, y) || !self.in_domain(s1, y) {
            return Err(RoadError::OutOfDomain { s: s0.min(s1), y });
        }
        let speed = |s: f64| -> Result<f64, RoadError> {
            Ok(self.eval_jet(s, y)?.x_s.norm())
        };
        adaptive_simpson(&speed, s0, s1, 1e-9)
    }
}

fn jet_cross(a: Jet2Vec3, b: Jet2Vec3) -> Jet2Vec3 {
    Jet2Vec3::new(
        a.y * b.z - a.z * b.y,
        a.z * b.x - a.x * b.z,
        a.x * b.y - a.y * b.x,
    )
}

fn adaptive_simpson(
    f: &impl Fn(f64) -> Result<f64, RoadError>,
    a: f64,
    b: f64,
    rel_tol: f64,
) -> Result<f64, RoadError> {
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn recurse(
        f: &impl Fn(f64) -> Result<f64, RoadError>,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64, RoadError> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm)?;
        let frm = f(rm)?;
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        Ok(recurse(f, a, m, fa, flm, fm, left, tol * 0.5, depth - 1)?
            + recurse(f, m, b, fm, frm, fb, right, tol * 0.5, depth - 1)?)
    }
    let fa = f(a)?;
    let fm = f(0.5 * (a + b))?;
    let fb = f(b)?;
    let whole = simpson(fa, fm, fb, b - a);
    let tol = rel_tol * whole.abs().max(1.0);
    recurse(f, a, b, fa, fm, fb, whole, tol, 40)
}

pub fn fundamental_forms(jet: &SurfaceJet) -> FundamentalForms {
    let i = Matrix2::new(
        jet.x_s.dot(&jet.x_s),
        jet.x_s.dot(&jet.x_y),
        jet.x_y.dot(&jet.x_s),
        jet.x_y.dot(&jet.x_y),
    );
    let ii = Matrix2::new(
        jet.x_ss.dot(&jet.e_n),
        jet.x_sy.dot(&jet.e_n),
        jet.x_sy.dot(&jet.e_n),
        jet.x_yy.dot(&jet.e_n),
    );
    FundamentalForms { i, ii }
}

pub fn surface_frame(jet: &SurfaceJet, theta_s: f64) -> Result<SurfaceFrame, RoadError> {
    let ns = jet.x_s.norm();
    let ny = jet.x_y.norm();
    let ratio = jet.x_s.dot(&jet.x_y) / (ns * ny);
    if ratio.abs() >= 1.0 - 1e-12 {
        return Err(RoadError::DegenerateSurface { s: f64::NAN, y: f64::NAN });
    }
    let theta_p = -ratio.asin();
    let q = Matrix2::new(ns, 0.0, -theta_p.sin() * ny, theta_p.cos() * ny);
    let rot = Matrix2::new(theta_s.cos(), -theta_s.sin(), theta_s.sin(), theta_s.cos());
    let j = q * rot;

    let e_s = jet.x_s / ns;
    let e_perp = jet.e_n.cross(&e_s);
    let e1 = theta_s.cos() * e_s + theta_s.sin() * e_perp;
    let e2 = -theta_s.sin() * e_s + theta_s.cos() * e_perp;
    let r_gb = Matrix3::from_columns(&[e1, e2, jet.e_n]);
    Ok(SurfaceFrame { theta_p, q, j, r_gb })
}

/// Worst relative error between analytic partials and central finite
/// differences of the position map, over an ns-by-ny sample grid. The
/// `check-surface` CLI gate is built on this.
pub fn max_fd_error(surface: &RoadSurface, ns: usize, ny: usize) -> Result<f64, RoadError> {
    let h = 1e-5;
    let w = surface.half_width();
    let mut worst = 0.0f64;
    for is in 0..ns {
        // stay h away from the domain edge so central stencils fit
        let margin = 2.0 * h;
        let s = margin + (surface.s_max() - 2.0 * margin) * is as f64 / (ns - 1) as f64;
        for iy in 0..ny {
            let y = -w + margin + 2.0 * (w - margin) * iy as f64 / (ny - 1) as f64;
            let jet = surface.eval_jet(s, y)?;
            // First partials against differenced positions; second partials
            // against differenced first partials (second position differences
            // at this step size sit below roundoff).
            let jp = surface.eval_jet(s + h, y)?;
            let jm = surface.eval_jet(s - h, y)?;
            let kp = surface.eval_jet(s, y + h)?;
            let km = surface.eval_jet(s, y - h)?;
            let fd_s = (jp.x - jm.x) / (2.0 * h);
            let fd_y = (kp.x - km.x) / (2.0 * h);
            let fd_ss = (jp.x_s - jm.x_s) / (2.0 * h);
            let fd_sy = (kp.x_s - km.x_s) / (2.0 * h);
            let fd_yy = (kp.x_y - km.x_y) / (2.0 * h);
            let scale = jet.x_s.norm().max(1.0);
            for (a, b) in [
                (jet.x_s, fd_s),
                (jet.x_y, fd_y),
                (jet.x_ss, fd_ss),
                (jet.x_sy, fd_sy),
                (jet.x_yy, fd_yy),
            ] {
                worst = worst.max((a - b).norm() / scale);
            }
        }
    }
    Ok(worst)
}
