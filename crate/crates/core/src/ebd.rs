//! Nonplanar electronic brakeforce distribution: estimates per-wheel normal
//! loads from proper-acceleration measurements and splits a target net brake
//! force over the four wheels under adherence and actuator limits.
//!
//! An accelerometer measures proper acceleration, i.e. every force on the
//! body except gravity. Scaling by mass therefore gives the net tire force
//! directly (after removing modeled aero terms) with no gravity model and no
//! surface geometry required, which is what makes the load estimate cheap
//! enough to run inside a brake controller.

use nalgebra::Vector3;

use crate::force::VehicleParams;

/// One inertial measurement in body axes.
#[derive(Debug, Clone, Copy)]
pub struct ImuSample {
    /// Proper acceleration [m/s^2]; at rest on a plane this reads (0, 0, g).
    pub a_proper: Vector3<f64>,
    /// Angular velocity [rad/s].
    pub omega: Vector3<f64>,
}

/// Causal angular-acceleration estimate: first-order difference followed by a
/// first-order low-pass (default 20 ms time constant). Value-carried state;
/// one filter instance per telemetry stream.
#[derive(Debug, Clone)]
pub struct OmegaDotFilter {
    time_constant: f64,
    prev: Option<Vector3<f64>>,
    state: Vector3<f64>,
}

impl OmegaDotFilter {
    pub fn new() -> Self {
        Self::with_time_constant(0.02)
    }

    pub fn with_time_constant(time_constant: f64) -> Self {
        OmegaDotFilter { time_constant, prev: None, state: Vector3::zeros() }
    }

    /// Feed one sample; returns the filtered angular acceleration.
    pub fn update(&mut self, omega: Vector3<f64>, dt: f64) -> Vector3<f64> {
        assert!(dt > 0.0, "nonpositive sample interval");
        let raw = match self.prev {
            Some(prev) => (omega - prev) / dt,
            None => Vector3::zeros(),
        };
        self.prev = Some(omega);
        let alpha = dt / (self.time_constant + dt);
        self.state += alpha * (raw - self.state);
        self.state
    }
}

impl Default for OmegaDotFilter {
    fn default() -> Self {
        Self::new()
    }
}

/// Net tire force [N] from a proper-acceleration measurement: F^t =
/// m a_proper plus the modeled aero contributions, which need a speed
/// estimate. No gravity term appears because the accelerometer never
/// measures gravity.
pub fn estimate_tire_forces(
    imu: &ImuSample,
    speed_estimate: f64,
    params: &VehicleParams,
) -> Vector3<f64> {
    let v2 = speed_estimate * speed_estimate;
    Vector3::new(
        params.m * imu.a_proper.x + params.k_drag * v2,
        params.m * imu.a_proper.y,
        params.m * imu.a_proper.z + params.k_lift * v2,
    )
}

/// Per-wheel normal loads [N], order (front right, front left, rear right,
/// rear left), from measured tire forces, angular velocity and a filtered
/// angular acceleration. This is the numeric counterpart of the planner's
/// affine quasi-static load transfer: roll/pitch moments from the measured
/// rates, then axle and left/right splits.
pub fn estimate_wheel_normals(
    f_t: Vector3<f64>,
    omega: Vector3<f64>,
    omega_dot: Vector3<f64>,
    params: &VehicleParams,
    paper_literal: bool,
) -> [f64; 4] {
    let k_b1 = params.i1 * omega_dot.x + (params.i3 - params.i2) * omega.y * omega.z;
    let k_b2 = params.i2 * omega_dot.y + (params.i1 - params.i3) * omega.z * omega.x;
    let k_n1 = k_b1 - params.h * f_t.y;
    let k_n2 = k_b2 + params.h * f_t.x;
    let denom = if paper_literal {
        params.wheelbase()
    } else {
        2.0 * params.wheelbase()
    };
    let n_f = (f_t.z * params.l_r - k_n2) / denom;
    let n_r = (f_t.z * params.l_f + k_n2) / denom;
    let delta = k_n1 / (2.0 * (params.t_f * params.t_f + params.t_r * params.t_r));
    [
        n_f - delta * params.t_f,
        n_f + delta * params.t_f,
        n_r - delta * params.t_r,
        n_r + delta * params.t_r,
    ]
}

/// Result of splitting a brake force target over the four wheels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrakeAllocation {
    /// Per-wheel brake forces [N], all nonnegative.
    pub b: [f64; 4],
    /// Wheel pinned at its adherence or actuator limit (including wheels
    /// excluded for nonpositive estimated load, whose limit is zero).
    pub saturated: [bool; 4],
    /// Wheel excluded because its estimated load was nonpositive.
    pub nonpositive_load: [bool; 4],
    /// Unmet force: F_target minus the total allocated, zero unless every
    /// wheel is saturated.
    pub shortfall: f64,
}

impl BrakeAllocation {
    pub fn total(&self) -> f64 {
        self.b.iter().sum()
    }
}

/// Split `f_target` (net brake force, N) over the wheels proportionally to
/// their estimated normal loads, clipping each wheel at min(mu_i N_i, cap_i)
/// and redistributing clipped excess over the remaining wheels until a fixed
/// point (water-filling). Deterministic; wheels with nonpositive load get
/// zero and are flagged.
///
/// `moment_target` is an extension hook for a yaw-moment request; the
/// implemented policy is symmetric (zero-moment) braking and the function
/// panics on a nonzero request rather than silently ignoring it.
pub fn allocate(
    f_target: f64,
    moment_target: f64,
    normals: [f64; 4],
    mu: [f64; 4],
    caps: [f64; 4],
) -> BrakeAllocation {
    assert!(
        moment_target == 0.0,
        "only the symmetric zero-moment distribution is implemented"
    );
    let target = f_target.max(0.0);
    let mut limit = [0.0f64; 4];
    let mut weight = [0.0f64; 4];
    let mut nonpositive_load = [false; 4];
    for i in 0..4 {
        if normals[i] <= 0.0 {
            nonpositive_load[i] = true;
        } else {
            limit[i] = (mu[i] * normals[i]).min(caps[i]).max(0.0);
            weight[i] = normals[i];
        }
    }

    let mut b = [0.0f64; 4];
    let mut saturated = nonpositive_load;
    let mut active = [true, true, true, true];
    for i in 0..4 {
        if nonpositive_load[i] {
            active[i] = false;
        }
    }
    let mut remaining = target;
    // each pass either terminates or saturates at least one wheel
    for _ in 0..4 {
        let total_weight: f64 = (0..4).filter(|&i| active[i]).map(|i| weight[i]).sum();
        if total_weight <= 0.0 || remaining <= 0.0 {
            break;
        }
        let mut clipped = false;
        for i in 0..4 {
            if active[i] && remaining * weight[i] / total_weight >= limit[i] {
                b[i] = limit[i];
                saturated[i] = true;
                active[i] = false;
                clipped = true;
            }
        }
        if !clipped {
            for i in 0..4 {
                if active[i] {
                    b[i] = remaining * weight[i] / total_weight;
                }
            }
            break;
        }
        remaining = target - (0..4).filter(|&i| saturated[i]).map(|i| b[i]).sum::<f64>();
    }
    let shortfall = (target - b.iter().sum::<f64>()).max(0.0);
    BrakeAllocation { b, saturated, nonpositive_load, shortfall }
}
