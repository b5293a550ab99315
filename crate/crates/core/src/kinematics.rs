//! Vehicle pose kinematics on the surface: coordinate rates, angular
//! velocity, heading-rate terms and the affine angular-acceleration
//! approximation. Everything here is frozen-pose algebra: linear in v at
//! velocity level, affine in (v^2, vdot) at acceleration level.

use nalgebra::{Matrix2, Vector2};

use crate::affine::AffineScalar;
use crate::road::{FundamentalForms, SurfaceFrame, SurfaceJet};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum KinematicsError {
    #[error("I - n*II is singular at this pose (normal offset at curvature center)")]
    SingularOffset,
}

/// Vehicle pose relative to the surface.
#[derive(Debug, Clone, Copy)]
pub struct PoseState {
    pub s: f64,
    pub y: f64,
    /// Normal offset of the body frame above the surface.
    pub n: f64,
    pub theta_s: f64,
}

/// Velocity description used by the planner: speed, sideslip, and the
/// path-frozen heading/sideslip curvatures.
#[derive(Debug, Clone, Copy)]
pub struct VelocityParam {
    pub v: f64,
    pub beta: f64,
    pub kappa_s: f64,
    pub kappa_beta: f64,
}

/// Which second partial enters the third heading-rate term. `MixedPartial`
/// uses x_sy and is the variant consistent with the heading finite-difference
/// oracle on bank-varying ribbons; `PaperPrinted` uses x_yy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThetaRateVariant {
    #[default]
    MixedPartial,
    PaperPrinted,
}

/// The two tangent-plane maps everything else is built from:
/// `rates` = (I - n II)^-1 J and `curvature` = J^-1 II (I - n II)^-1 J.
pub struct TangentMaps {
    pub rates: Matrix2<f64>,
    pub curvature: Matrix2<f64>,
}

pub fn tangent_maps(
    frame: &SurfaceFrame,
    forms: &FundamentalForms,
    n: f64,
) -> Result<TangentMaps, KinematicsError> {
    let a = forms.i - n * forms.ii;
    let a_inv = a.try_inverse().ok_or(KinematicsError::SingularOffset)?;
    if a.determinant().abs() < 1e-12 {
        return Err(KinematicsError::SingularOffset);
    }
    let j_inv = frame.j.try_inverse().ok_or(KinematicsError::SingularOffset)?;
    let rates = a_inv * frame.j;
    let curvature = j_inv * forms.ii * rates;
    Ok(TangentMaps { rates, curvature })
}

/// (sdot, ydot) for body velocity (v, beta).
pub fn coordinate_rates(
    frame: &SurfaceFrame,
    forms: &FundamentalForms,
    n: f64,
    v: f64,
    beta: f64,
) -> Result<(f64, f64), KinematicsError> {
    let maps = tangent_maps(frame, forms, n)?;
    let r = maps.rates * Vector2::new(v * beta.cos(), v * beta.sin());
    Ok((r.x, r.y))
}

/// In-plane angular velocity components (omega1, omega2).
pub fn tangent_angular_velocity(
    frame: &SurfaceFrame,
    forms: &FundamentalForms,
    n: f64,
    v: f64,
    beta: f64,
) -> Result<(f64, f64), KinematicsError> {
    let maps = tangent_maps(frame, forms, n)?;
    let w = maps.curvature * Vector2::new(v * beta.cos(), v * beta.sin());
    // the map produces (-omega2, omega1)
    Ok((w.y, -w.x))
}

/// Coefficients (a_s, a_y) with theta_s_dot = omega3 + a_s*sdot + a_y*ydot.
pub fn theta_s_rate_terms(jet: &SurfaceJet, variant: ThetaRateVariant) -> (f64, f64) {
    let denom = jet.x_s.dot(&jet.x_s);
    let a_s = jet.x_ss.cross(&jet.x_s).dot(&jet.e_n) / denom;
    let second = match variant {
        ThetaRateVariant::MixedPartial => jet.x_sy,
        ThetaRateVariant::PaperPrinted => jet.x_yy,
    };
    let a_y = second.cross(&jet.x_s).dot(&jet.e_n) / denom;
    (a_s, a_y)
}

/// Body yaw rate for stage-frozen heading curvature kappa_s.
pub fn omega3(kappa_s: f64, v: f64, sdot: f64, ydot: f64, terms: (f64, f64)) -> f64 {
    kappa_s * v - terms.0 * sdot - terms.1 * ydot
}

/// Body-frame linear accelerations as affine functions of (v^2, vdot),
/// using beta_dot = kappa_beta * v.
pub fn body_accels(beta: f64, kappa_beta: f64) -> (AffineScalar, AffineScalar) {
    let a1 = AffineScalar::new(0.0, -kappa_beta * beta.sin(), beta.cos());
    let a2 = AffineScalar::new(0.0, kappa_beta * beta.cos(), beta.sin());
    (a1, a2)
}

/// In-plane angular accelerations (omega1_dot, omega2_dot), affine in
/// (v^2, vdot): the same curvature map as the angular velocity, applied to
/// the linear accelerations.
pub fn angular_accels(
    frame: &SurfaceFrame,
    forms: &FundamentalForms,
    n: f64,
    accels: (AffineScalar, AffineScalar),
) -> Result<(AffineScalar, AffineScalar), KinematicsError> {
    let maps = tangent_maps(frame, forms, n)?;
    let m = maps.curvature;
    let u0 = accels.0 * m[(0, 0)] + accels.1 * m[(0, 1)];
    let u1 = accels.0 * m[(1, 0)] + accels.1 * m[(1, 1)];
    Ok((u1, -u0))
}
