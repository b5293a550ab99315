//! JSON config schemas and loaders. Every document is schema-validated on
//! ingestion: unknown fields are rejected, and parse errors surface with the
//! line/column from the JSON parser.

use nalgebra::{DMatrix, DVector};
use nonplanar::conic::{ConeSpec, ConicProgram};
use nonplanar::force::VehicleParams;
use nonplanar::planner::TargetProfile;
use nonplanar::simulator::{Mode, ScenarioParams};
use nonplanar::RoadSurface;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::CliError;

/// Road definition. Bank convention in configs: positive `bank_percent`
/// raises the outside edge of a left-hand turn (stabilizing); an off-camber
/// surface therefore has a negative value, e.g. -30 for a 30% off-camber
/// bank.
#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RoadConfig {
    Plane {
        s_max: f64,
        half_width: f64,
    },
    BankedArc {
        /// Centerline radius [m]; positive turns left.
        radius: f64,
        /// Bank as a percent grade across the lane; see the sign note above.
        bank_percent: f64,
        /// Swept angle [rad].
        arc_angle: f64,
        half_width: f64,
    },
    Crest {
        /// Vertical curvature radius [m].
        vertical_radius: f64,
        s_max: f64,
        half_width: f64,
    },
    Ribbon {
        s_max: f64,
        half_width: f64,
        knots_s: Vec<f64>,
        /// Centerline horizontal curvature at each knot [1/m].
        kappa_c: Vec<f64>,
        /// Bank angle at each knot [rad]; positive raises the left edge.
        bank: Vec<f64>,
        /// Grade angle at each knot [rad].
        grade: Vec<f64>,
    },
}

impl RoadConfig {
    pub fn build(self) -> Result<RoadSurface, CliError> {
        match self {
            RoadConfig::Plane { s_max, half_width } => {
                Ok(RoadSurface::plane(s_max, half_width))
            }
            RoadConfig::BankedArc { radius, bank_percent, arc_angle, half_width } => {
                // config sign: positive raises the outside edge of the turn;
                // the surface model's positive bank raises the left edge, so
                // a left turn (radius > 0) flips the sign
                let bank = -(bank_percent / 100.0).atan() * radius.signum();
                Ok(RoadSurface::banked_arc(radius, bank, arc_angle, half_width))
            }
            RoadConfig::Crest { vertical_radius, s_max, half_width } => {
                Ok(RoadSurface::crest(vertical_radius, s_max, half_width))
            }
            RoadConfig::Ribbon { s_max, half_width, knots_s, kappa_c, bank, grade } => {
                let last = *knots_s.last().ok_or_else(|| {
                    CliError::Config("ribbon road needs at least two knots".into())
                })?;
                if (last - s_max).abs() > 1e-9 * s_max.abs().max(1.0) {
                    return Err(CliError::Config(format!(
                        "ribbon s_max {s_max} does not match the last knot {last}"
                    )));
                }
                RoadSurface::ribbon(knots_s, kappa_c, bank, grade, half_width)
                    .map_err(|e| CliError::Config(format!("invalid ribbon road: {e}")))
            }
        }
    }
}

/// Vehicle parameters with units; every field optional, defaulting to the
/// reference vehicle.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleConfig {
    /// Mass [kg].
    pub m: f64,
    /// Principal inertias [kg m^2] about body x (roll), y (pitch), z (yaw).
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    /// Center-of-mass height above the road [m].
    pub h: f64,
    /// CoM to front / rear axle [m].
    pub l_f: f64,
    pub l_r: f64,
    /// Front / rear half track width [m].
    pub t_f: f64,
    pub t_r: f64,
    /// Tire-road friction coefficient.
    pub mu: f64,
    /// Gravity [m/s^2].
    pub g: f64,
    /// Drag force coefficient [N s^2/m^2]: F = -k_drag v^2 along body x.
    pub k_drag: f64,
    /// Lift force coefficient [N s^2/m^2]: F = -k_lift v^2 along body z.
    pub k_lift: f64,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        let p = VehicleParams::default();
        VehicleConfig {
            m: p.m,
            i1: p.i1,
            i2: p.i2,
            i3: p.i3,
            h: p.h,
            l_f: p.l_f,
            l_r: p.l_r,
            t_f: p.t_f,
            t_r: p.t_r,
            mu: p.mu,
            g: p.g,
            k_drag: p.k_drag,
            k_lift: p.k_lift,
        }
    }
}

impl VehicleConfig {
    pub fn build(&self) -> Result<VehicleParams, CliError> {
        if self.m <= 0.0 || self.mu <= 0.0 || self.g <= 0.0 {
            return Err(CliError::Config(
                "vehicle m, mu and g must be positive".into(),
            ));
        }
        if self.l_f <= 0.0 || self.l_r <= 0.0 || self.t_f <= 0.0 || self.t_r <= 0.0 {
            return Err(CliError::Config(
                "vehicle geometry lengths must be positive".into(),
            ));
        }
        Ok(VehicleParams {
            m: self.m,
            i1: self.i1,
            i2: self.i2,
            i3: self.i3,
            h: self.h,
            l_f: self.l_f,
            l_r: self.l_r,
            t_f: self.t_f,
            t_r: self.t_r,
            mu: self.mu,
            g: self.g,
            k_drag: self.k_drag,
            k_lift: self.k_lift,
        })
    }
}

/// Longitudinal force target: a single value for every stage or one per
/// stage.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum BProfileConfig {
    Constant(f64),
    PerStage(Vec<f64>),
}

impl Default for BProfileConfig {
    fn default() -> Self {
        BProfileConfig::Constant(0.0)
    }
}

impl BProfileConfig {
    pub fn build(&self) -> TargetProfile {
        match self {
            BProfileConfig::Constant(b) => TargetProfile::Constant(*b),
            BProfileConfig::PerStage(v) => TargetProfile::PerStage(v.clone()),
        }
    }
}

fn default_n_stages() -> usize {
    24
}
fn default_t_max() -> f64 {
    60.0
}
fn default_dt() -> f64 {
    1e-3
}
fn default_brake_delay() -> f64 {
    1.0
}
fn default_brake_force() -> f64 {
    8000.0
}
fn default_wheel_cap() -> f64 {
    5000.0
}
fn default_planner_mu_scale() -> f64 {
    0.9
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeConfig {
    None,
    DelayedDriver,
    SafetySystem,
    SafetySystemPlanar,
}

impl From<ModeConfig> for Mode {
    fn from(m: ModeConfig) -> Mode {
        match m {
            ModeConfig::None => Mode::None,
            ModeConfig::DelayedDriver => Mode::DelayedDriver,
            ModeConfig::SafetySystem => Mode::SafetySystem,
            ModeConfig::SafetySystemPlanar => Mode::SafetySystemPlanar,
        }
    }
}

/// Scenario shared by `plan` and `simulate`. Planner fields: v0, n_stages,
/// s range, lane offset, b_profile. The rest configures the closed-loop run
/// and is ignored by `plan`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Initial speed [m/s].
    pub v0: f64,
    #[serde(default = "default_n_stages")]
    pub n_stages: usize,
    #[serde(default)]
    pub s_start: f64,
    pub s_end: f64,
    #[serde(default)]
    pub lane_offset: f64,
    /// Driver longitudinal force target B [N] (negative = braking).
    #[serde(default)]
    pub b_profile: BProfileConfig,
    /// Simulation mode; a `--mode` flag overrides it.
    #[serde(default)]
    pub mode: Option<ModeConfig>,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Driver brake request magnitude [N] fed to the safety system.
    #[serde(default)]
    pub driver_brake: f64,
    #[serde(default = "default_brake_delay")]
    pub brake_delay: f64,
    #[serde(default = "default_brake_force")]
    pub brake_force: f64,
    #[serde(default = "default_wheel_cap")]
    pub wheel_cap: f64,
    #[serde(default = "default_planner_mu_scale")]
    pub planner_mu_scale: f64,
}

impl ScenarioConfig {
    pub fn scenario_params(&self, paper_literal: bool) -> Result<ScenarioParams, CliError> {
        if !(self.dt > 0.0 && self.dt <= 0.01) {
            return Err(CliError::Config(format!(
                "dt {} out of (0, 0.01]",
                self.dt
            )));
        }
        if self.s_end <= self.s_start {
            return Err(CliError::Config("s_end must exceed s_start".into()));
        }
        Ok(ScenarioParams {
            v0: self.v0,
            s0: self.s_start,
            y0: self.lane_offset,
            s_end: self.s_end,
            t_max: self.t_max,
            lane_offset: self.lane_offset,
            dt: self.dt,
            n_stages: self.n_stages,
            driver_brake: self.driver_brake,
            brake_delay: self.brake_delay,
            brake_force: self.brake_force,
            wheel_cap: self.wheel_cap,
            planner_mu_scale: self.planner_mu_scale,
            paper_literal,
            ..ScenarioParams::default()
        })
    }
}

/// Standalone conic program: min c'x s.t. a x = b, g x + s = h, s in K,
/// with K = R^{n_orthant}_+ x (3-dim SOC)^{n_soc3}; SOC rows are ordered
/// (radius, x, y). Matrices are row-major arrays of rows.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConicProgramConfig {
    pub c: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub g: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub n_orthant: usize,
    pub n_soc3: usize,
}

impl ConicProgramConfig {
    pub fn build(&self) -> Result<ConicProgram, CliError> {
        let n = self.c.len();
        let to_matrix = |rows: &[Vec<f64>], what: &str| -> Result<DMatrix<f64>, CliError> {
            for r in rows {
                if r.len() != n {
                    return Err(CliError::Config(format!(
                        "{what} row length {} != {} variables",
                        r.len(),
                        n
                    )));
                }
            }
            Ok(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
        };
        let program = ConicProgram {
            c: DVector::from_vec(self.c.clone()),
            a: to_matrix(&self.a, "a")?,
            b: DVector::from_vec(self.b.clone()),
            g: to_matrix(&self.g, "g")?,
            h: DVector::from_vec(self.h.clone()),
            cones: ConeSpec { n_orthant: self.n_orthant, n_soc3: self.n_soc3 },
        };
        program
            .validate()
            .map_err(|e| CliError::Config(format!("invalid conic program: {e}")))?;
        Ok(program)
    }
}

/// Read and deserialize one JSON document, reporting parse failures with the
/// parser's line/column diagnostics.
pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("invalid JSON in {}: {e}", path.display())))
}
