//! Predictive braking on smooth nonplanar road surfaces.
//!
//! Builds road geometry as parametric ribbon surfaces, expresses vehicle
//! force and road-contact limits as convex constraints in (v^2, vdot),
//! solves the resulting multistage second-order cone program with a
//! self-contained interior-point solver, and closes the loop in a two-track
//! vehicle simulation with electronic brakeforce distribution.

pub mod affine;
pub mod conic;
pub mod ebd;
pub mod force;
pub mod jet2;
pub mod kinematics;
pub mod planner;
pub mod presets;
pub mod road;
pub mod simulator;
pub mod spline;

pub use affine::AffineScalar;
pub use road::{
    fundamental_forms, surface_frame, FundamentalForms, RoadError, RoadSurface,
    SurfaceFrame, SurfaceJet,
};
