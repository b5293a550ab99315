//! Closed-loop scenario engine: a single-body two-track vehicle constrained
//! to the road surface, combined-slip Pacejka tires with quasi-static load
//! transfer, a PI steering driver, and the optional predictive braking
//! safety layer. Reproduces the off-camber u-turn experiment as a property
//! test: a too-fast vehicle departs the lane without intervention and
//! completes the turn with it.
//!
//! Fidelity notes: the suspension-equipped two-track model and the
//! proprietary brake actuator of the reference experiment are replaced by a
//! rigid body with quasi-static load transfer and a first-order brake lag
//! with per-wheel force caps. The reproduction is therefore property-based
//! (stays in lane / departs lane), not trajectory-matching.

use nalgebra::{Vector2, Vector3};

use crate::ebd::{self, ImuSample, OmegaDotFilter};
use crate::force::{stage_forces, VehicleParams};
use crate::kinematics::{
    coordinate_rates, tangent_angular_velocity, theta_s_rate_terms, KinematicsError,
    ThetaRateVariant,
};
use crate::planner::{
    build_stages, solve_profile, PlannerError, PlannerOptions, TargetProfile,
};
use crate::road::{fundamental_forms, surface_frame, RoadError, RoadSurface};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("vehicle left the road at s = {s:.2}, y = {y:.2} (t = {t:.3} s)")]
    OffRoad { s: f64, y: f64, t: f64 },
    #[error("simulation state diverged at t = {t:.3} s")]
    NumericalBlowup { t: f64 },
    #[error(transparent)]
    Road(#[from] RoadError),
    #[error("kinematics: {0}")]
    Kinematics(#[from] KinematicsError),
    #[error("planner: {0}")]
    Planner(#[from] PlannerError),
    #[error("invalid scenario: {0}")]
    BadScenario(String),
}

/// Vehicle pose and velocity on the surface.
#[derive(Debug, Clone, Copy)]
pub struct SimState {
    pub s: f64,
    pub y: f64,
    /// Heading relative to the surface s-direction.
    pub theta_s: f64,
    pub v: f64,
    pub beta: f64,
    /// Body yaw rate; a state because the yaw balance is dynamic.
    pub omega3: f64,
    /// Road-wheel steering angle.
    pub delta_sw: f64,
    pub t: f64,
}

impl SimState {
    pub fn at_speed(s: f64, y: f64, v: f64) -> SimState {
        SimState { s, y, theta_s: 0.0, v, beta: 0.0, omega3: 0.0, delta_sw: 0.0, t: 0.0 }
    }
}

/// Pacejka coefficients for one axle. Pure-slip lateral force
/// D sin(C atan(B a - E (B a - atan(B a)))) with D = d_scale * mu * N;
/// combined slip by friction-ellipse scaling against the commanded
/// longitudinal force.
#[derive(Debug, Clone, Copy)]
pub struct AxleCoefficients {
    pub b_p: f64,
    pub c_p: f64,
    pub e_p: f64,
    pub d_scale: f64,
}

impl Default for AxleCoefficients {
    fn default() -> Self {
        AxleCoefficients { b_p: 10.0, c_p: 1.9, e_p: 0.97, d_scale: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TireModel {
    pub front: AxleCoefficients,
    pub rear: AxleCoefficients,
}

impl AxleCoefficients {
    /// Pure-slip lateral force at slip angle `alpha` under load `peak`.
    fn lateral(&self, alpha: f64, peak: f64) -> f64 {
        let ba = self.b_p * alpha;
        let arg = self.c_p * (ba - self.e_p * (ba - ba.atan())).atan();
        self.d_scale * peak * arg.sin()
    }

    /// Cornering stiffness dF_y/d_alpha at zero slip.
    pub fn cornering_stiffness(&self, peak: f64) -> f64 {
        self.d_scale * peak * self.b_p * self.c_p
    }
}

/// PI lateral-error steering with a heading term, integrator clamp and
/// steering angle/rate limits.
#[derive(Debug, Clone, Copy)]
pub struct DriverModel {
    pub k_p: f64,
    pub k_i: f64,
    pub k_theta: f64,
    pub integrator_limit: f64,
    pub steer_limit: f64,
    pub steer_rate_limit: f64,
}

impl Default for DriverModel {
    fn default() -> Self {
        DriverModel {
            k_p: 0.1,
            k_i: 0.1,
            k_theta: 0.8,
            integrator_limit: 3.0,
            steer_limit: 0.5,
            steer_rate_limit: 1.0,
        }
    }
}

impl DriverModel {
    /// Steering command for lateral error e = y - y_lane; zero error and
    /// zero heading give a zero increment on top of the integrator state.
    pub fn command(&self, error: f64, theta_s: f64, integrator: f64) -> f64 {
        -self.k_p * error - self.k_i * integrator - self.k_theta * theta_s
    }
}

/// Control inputs for one physics step: steering command plus per-wheel
/// brake force commands (order fr, fl, rr, rl), already distributed by the
/// caller's brake logic.
#[derive(Debug, Clone, Copy, Default)]
pub struct Controls {
    pub delta_sw_cmd: f64,
    pub brake_wheel: [f64; 4],
}

/// Everything the dynamics computes at one state, kept for logging and for
/// the IMU synthesis.
#[derive(Debug, Clone, Copy)]
pub struct Telemetry {
    /// Quasi-static wheel loads (fr, fl, rr, rl).
    pub loads: [f64; 4],
    /// Applied brake force per wheel after the adherence clamp.
    pub brake: [f64; 4],
    /// Summed in-plane tire force in body axes.
    pub f_tire: Vector2<f64>,
    /// Net normal tire force (sum of loads).
    pub f_tire_normal: f64,
    /// Worst per-wheel friction utilization |F_inplane| / (mu N).
    pub friction_util: f64,
    /// Any wheel at zero load.
    pub lifted: bool,
    pub vdot: f64,
    pub betadot: f64,
    pub omega3dot: f64,
    pub sdot: f64,
    pub ydot: f64,
    pub theta_s_dot: f64,
    /// Surface-induced roll/pitch rates (omega1, omega2).
    pub omega12: Vector2<f64>,
}

const STEER_TAU: f64 = 0.05;
/// Below this speed the vehicle is treated as stopped: slip angles and the
/// sideslip dynamics are ill-defined.
const V_STANDSTILL: f64 = 0.05;

/// Wheel positions in the body frame (x forward, y left): fr, fl, rr, rl.
fn wheel_positions(params: &VehicleParams) -> [Vector2<f64>; 4] {
    [
        Vector2::new(params.l_f, -params.t_f),
        Vector2::new(params.l_f, params.t_f),
        Vector2::new(-params.l_r, -params.t_r),
        Vector2::new(-params.l_r, params.t_r),
    ]
}

/// Dynamics evaluation at one state: quasi-static loads (one fixed-point
/// pass in vdot), per-wheel Pacejka forces, and all state derivatives.
pub fn evaluate(
    road: &RoadSurface,
    params: &VehicleParams,
    tires: &TireModel,
    state: &SimState,
    controls: &Controls,
) -> Result<Telemetry, SimError> {
    let jet = road.eval_jet(state.s, state.y)?;
    let forms = fundamental_forms(&jet);
    let frame = surface_frame(&jet, state.theta_s)?;
    let g_b = crate::force::gravity_body(&frame, params);

    let v = state.v.max(0.0);
    let v2 = v * v;
    let (sdot, ydot) = coordinate_rates(&frame, &forms, params.h, v, state.beta)?;
    let (w1, w2) = tangent_angular_velocity(&frame, &forms, params.h, v, state.beta)?;
    let terms = theta_s_rate_terms(&jet, ThetaRateVariant::MixedPartial);
    let theta_s_dot = state.omega3 + terms.0 * sdot + terms.1 * ydot;

    // heading curvature consistent with the current yaw rate, for the
    // quasi-static load model
    let kappa_s = if v > V_STANDSTILL { theta_s_dot / v } else { 0.0 };
    let (_, wheel_affine) = stage_forces(
        &jet, &forms, &frame, params, params.h, state.beta, kappa_s, 0.0, false,
    )?;
    let load_at = |vdot: f64| -> [f64; 4] {
        wheel_affine.as_array().map(|a| a.value(v2, vdot).max(0.0))
    };

    let positions = wheel_positions(params);
    let u_b = Vector2::new(v * state.beta.cos(), v * state.beta.sin());
    let forces_at = |loads: &[f64; 4]| -> (Vector2<f64>, f64, f64, [f64; 4]) {
        let mut total = Vector2::zeros();
        let mut moment = 0.0;
        let mut util: f64 = 0.0;
        let mut applied = [0.0f64; 4];
        for i in 0..4 {
            let n = loads[i];
            if n <= 0.0 {
                continue;
            }
            let axle = if i < 2 { &tires.front } else { &tires.rear };
            let delta = if i < 2 { state.delta_sw } else { 0.0 };
            let vw = Vector2::new(
                u_b.x - state.omega3 * positions[i].y,
                u_b.y + state.omega3 * positions[i].x,
            );
            let alpha = if v > V_STANDSTILL {
                delta - vw.y.atan2(vw.x.max(V_STANDSTILL))
            } else {
                0.0
            };
            let adherence = params.mu * n;
            // idealized slip control holds the commanded brake force up to
            // the adherence limit
            let fx_wheel = -controls.brake_wheel[i].max(0.0).min(adherence);
            let fy_pure = axle.lateral(alpha, adherence);
            let ellipse = (1.0 - (fx_wheel / adherence).powi(2)).max(0.0).sqrt();
            let fy_wheel = fy_pure * ellipse;
            applied[i] = -fx_wheel;
            let (sd, cd) = delta.sin_cos();
            let f = Vector2::new(fx_wheel * cd - fy_wheel * sd, fx_wheel * sd + fy_wheel * cd);
            total += f;
            moment += positions[i].x * f.y - positions[i].y * f.x;
            util = util.max(f.norm() / adherence);
        }
        (total, moment, util, applied)
    };

    // one fixed-point pass: loads at vdot = 0, resulting vdot, loads again
    let loads0 = load_at(0.0);
    let (f0, _, _, _) = forces_at(&loads0);
    let a_x0 = (f0.x + g_b.x - params.k_drag * v2) / params.m;
    let a_y0 = (f0.y + g_b.y) / params.m;
    let vdot_guess = a_x0 * state.beta.cos() + a_y0 * state.beta.sin();
    let loads = load_at(vdot_guess);
    let (f_tire, moment, friction_util, brake) = forces_at(&loads);

    let a_x = (f_tire.x + g_b.x - params.k_drag * v2) / params.m;
    let a_y = (f_tire.y + g_b.y) / params.m;
    let (sb, cb) = state.beta.sin_cos();
    let mut vdot = a_x * cb + a_y * sb;
    let betadot = if v > V_STANDSTILL {
        (-a_x * sb + a_y * cb) / v - state.omega3
    } else {
        0.0
    };
    if v <= 0.0 && vdot < 0.0 {
        vdot = 0.0;
    }
    let omega3dot = (moment - (params.i2 - params.i1) * w1 * w2) / params.i3;

    Ok(Telemetry {
        loads,
        brake,
        f_tire,
        f_tire_normal: loads.iter().sum(),
        friction_util,
        lifted: loads.iter().any(|&n| n <= 0.0),
        vdot,
        betadot,
        omega3dot,
        sdot,
        ydot,
        theta_s_dot,
        omega12: Vector2::new(w1, w2),
    })
}

/// RK4 step of the surface-constrained rigid-body dynamics. `dt` must be in
/// (0, 0.01]; wheel loads are quasi-static with one fixed-point pass in
/// vdot, and lifted wheels produce no force.
pub fn step(
    road: &RoadSurface,
    params: &VehicleParams,
    tires: &TireModel,
    state: &SimState,
    controls: &Controls,
    dt: f64,
) -> Result<SimState, SimError> {
    assert!(dt > 0.0 && dt <= 0.01, "dt must be in (0, 0.01]");
    let deriv = |st: &SimState| -> Result<[f64; 7], SimError> {
        // RK4 substeps can poke just past the ribbon edge; report that as a
        // departure at the substep state rather than a geometry error
        let tel = match evaluate(road, params, tires, st, controls) {
            Ok(tel) => tel,
            Err(SimError::Road(RoadError::OutOfDomain { s, y })) => {
                return Err(SimError::OffRoad { s, y, t: st.t })
            }
            Err(e) => return Err(e),
        };
        let ddelta = ((controls.delta_sw_cmd.clamp(-0.6, 0.6) - st.delta_sw) / STEER_TAU)
            .clamp(-2.0, 2.0);
        Ok([
            tel.sdot,
            tel.ydot,
            tel.theta_s_dot,
            tel.vdot,
            tel.betadot,
            tel.omega3dot,
            ddelta,
        ])
    };
    let advance = |st: &SimState, d: &[f64; 7], h: f64| -> SimState {
        SimState {
            s: st.s + h * d[0],
            y: st.y + h * d[1],
            theta_s: st.theta_s + h * d[2],
            v: (st.v + h * d[3]).max(0.0),
            beta: st.beta + h * d[4],
            omega3: st.omega3 + h * d[5],
            delta_sw: st.delta_sw + h * d[6],
            t: st.t + h,
        }
    };
    let k1 = deriv(state)?;
    let k2 = deriv(&advance(state, &k1, dt / 2.0))?;
    let k3 = deriv(&advance(state, &k2, dt / 2.0))?;
    let k4 = deriv(&advance(state, &k3, dt))?;
    let mut d = [0.0f64; 7];
    for i in 0..7 {
        d[i] = (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0;
    }
    let next = advance(state, &d, dt);
    if !next.s.is_finite()
        || !next.v.is_finite()
        || !next.beta.is_finite()
        || next.v > 200.0
        || next.beta.abs() > 1.5
    {
        return Err(SimError::NumericalBlowup { t: next.t });
    }
    if next.y.abs() > road.half_width() {
        return Err(SimError::OffRoad { s: next.s, y: next.y, t: next.t });
    }
    Ok(next)
}

/// Proper acceleration and angular velocity a strapped-down IMU would
/// report: every force but gravity, over the mass.
pub fn synthesize_imu(
    state: &SimState,
    telemetry: &Telemetry,
    params: &VehicleParams,
) -> ImuSample {
    let v2 = state.v * state.v;
    let a_proper = Vector3::new(
        (telemetry.f_tire.x - params.k_drag * v2) / params.m,
        telemetry.f_tire.y / params.m,
        (telemetry.f_tire_normal - params.k_lift * v2) / params.m,
    );
    ImuSample {
        a_proper,
        omega: Vector3::new(telemetry.omega12.x, telemetry.omega12.y, state.omega3),
    }
}

/// Longitudinal behavior of the simulated scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Steering only, no braking at all.
    None,
    /// An impulsive driver brake applied after a configured delay.
    DelayedDriver,
    /// Predictive braking: periodic re-plan from the current state, brake
    /// command = driver request + planned intervention, split by the
    /// brakeforce distribution layer.
    SafetySystem,
    /// The same safety system planning with the surface curvature dropped
    /// from its force model; demonstrates why the nonplanar terms matter.
    SafetySystemPlanar,
}

#[derive(Debug, Clone, Copy)]
pub struct ScenarioParams {
    pub v0: f64,
    pub s0: f64,
    pub y0: f64,
    pub s_end: f64,
    pub t_max: f64,
    /// Lane center the driver follows.
    pub lane_offset: f64,
    pub driver: DriverModel,
    /// Physics step.
    pub dt: f64,
    /// Driver/brake control update period.
    pub control_period: f64,
    /// Safety-system re-plan period.
    pub replan_period: f64,
    pub n_stages: usize,
    /// Nominal driver brake request (N, >= 0) fed to the planner as target.
    pub driver_brake: f64,
    /// Delay and net force of the impulsive brake in `DelayedDriver` mode.
    pub brake_delay: f64,
    pub brake_force: f64,
    /// Friction derating applied to the safety system's plans. The plan runs
    /// the vehicle at its own friction limit; planning against a reduced mu
    /// leaves the steering driver lateral headroom to actually hold the lane.
    pub planner_mu_scale: f64,
    /// Per-wheel actuator force cap.
    pub wheel_cap: f64,
    /// First-order brake actuator lag.
    pub brake_tau: f64,
    /// Use the printed-form variants of the load-transfer expressions in the
    /// safety system's planner and load estimator.
    pub paper_literal: bool,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            v0: 15.0,
            s0: 0.0,
            y0: 0.0,
            s_end: 100.0,
            t_max: 60.0,
            lane_offset: 0.0,
            driver: DriverModel::default(),
            dt: 1e-3,
            control_period: 1e-2,
            replan_period: 0.1,
            n_stages: 24,
            driver_brake: 0.0,
            brake_delay: 1.0,
            brake_force: 8000.0,
            planner_mu_scale: 0.9,
            wheel_cap: 5000.0,
            brake_tau: 0.05,
            paper_literal: false,
        }
    }
}

/// One telemetry row per control period.
#[derive(Debug, Clone, Copy)]
pub struct LogRecord {
    pub t: f64,
    pub s: f64,
    pub y: f64,
    pub theta_s: f64,
    pub v: f64,
    pub beta: f64,
    pub loads: [f64; 4],
    pub brake: [f64; 4],
    pub friction_util: f64,
    pub a_proper: Vector3<f64>,
    /// Planned intervention margin F1 - B at the current stage (safety
    /// modes; zero otherwise).
    pub margin: f64,
    pub driver_brake: f64,
    pub lifted: bool,
}

#[derive(Debug)]
pub struct ScenarioResult {
    pub log: Vec<LogRecord>,
    /// Reached s_end while staying on the road.
    pub completed: bool,
    /// Terminated by leaving the lane bounds.
    pub off_road: bool,
    pub max_abs_y: f64,
    pub max_friction_util: f64,
    pub min_wheel_load: f64,
    /// Replan attempts where the solver failed and the previous brake
    /// command was held.
    pub planner_failures: usize,
}

/// Run one closed-loop scenario. Deterministic: fixed steps, no noise.
pub fn run_scenario(
    road: &RoadSurface,
    params: &VehicleParams,
    tires: &TireModel,
    scenario: &ScenarioParams,
    mode: Mode,
) -> Result<ScenarioResult, SimError> {
    if scenario.dt <= 0.0 || scenario.dt > 0.01 {
        return Err(SimError::BadScenario(format!("dt {} out of (0, 0.01]", scenario.dt)));
    }
    if scenario.s_end <= scenario.s0 {
        return Err(SimError::BadScenario("s_end must exceed s0".into()));
    }
    let mut state = SimState::at_speed(scenario.s0, scenario.y0, scenario.v0);
    let mut controls = Controls::default();
    let mut integrator = 0.0f64;
    let mut omega_filter = OmegaDotFilter::new();
    let mut brake_actual = 0.0f64; // lagged net brake force
    let mut brake_target = 0.0f64;
    let mut margin = 0.0f64;
    let mut log = Vec::new();
    let mut max_abs_y = 0.0f64;
    let mut max_util = 0.0f64;
    let mut min_load = f64::INFINITY;
    let mut off_road = false;
    let mut completed = false;
    let mut planner_failures = 0usize;

    let steps_per_control = (scenario.control_period / scenario.dt).round().max(1.0) as usize;
    let controls_per_replan =
        (scenario.replan_period / scenario.control_period).round().max(1.0) as usize;
    let planner_options = PlannerOptions {
        paper_literal: scenario.paper_literal,
        planar_contact: mode == Mode::SafetySystemPlanar,
    };

    let mut control_tick = 0usize;
    'outer: while state.t < scenario.t_max {
        // control update
        let tel = match evaluate(road, params, tires, &state, &controls) {
            Ok(tel) => tel,
            Err(SimError::Road(RoadError::OutOfDomain { .. })) => {
                off_road = true;
                break 'outer;
            }
            Err(e) => return Err(e),
        };
        let imu = synthesize_imu(&state, &tel, params);
        let omega_dot = omega_filter.update(imu.omega, scenario.control_period);
        let f_t_est = ebd::estimate_tire_forces(&imu, state.v, params);
        let normals_est = ebd::estimate_wheel_normals(
            f_t_est,
            imu.omega,
            omega_dot,
            params,
            scenario.paper_literal,
        );

        if matches!(mode, Mode::SafetySystem | Mode::SafetySystemPlanar)
            && control_tick % controls_per_replan == 0
            && state.s < scenario.s_end - 1.0
        {
            let b_target = -scenario.driver_brake;
            let plan_params =
                VehicleParams { mu: params.mu * scenario.planner_mu_scale, ..*params };
            let stages = build_stages(
                road,
                &plan_params,
                scenario.lane_offset,
                state.s,
                scenario.s_end,
                scenario.n_stages,
                &TargetProfile::Constant(b_target),
                planner_options,
            )?;
            match solve_profile(&stages, state.v.max(0.1), planner_options) {
                Ok(profile) => {
                    let planned_f1 = profile.stages[0].ft1;
                    margin = planned_f1 - b_target;
                    brake_target = (-planned_f1).max(0.0);
                }
                Err(PlannerError::Infeasible { .. }) => {
                    // no feasible profile from here: brake as hard as the
                    // tires allow
                    brake_target = params.mu * params.m * params.g;
                    margin = -brake_target;
                }
                Err(PlannerError::SolverFailure(_)) => {
                    // fail-operational: hold the previous brake command for
                    // one replan period
                    planner_failures += 1;
                }
                Err(e) => return Err(e.into()),
            }
        } else if mode == Mode::DelayedDriver {
            brake_target = if state.t >= scenario.brake_delay { scenario.brake_force } else { 0.0 };
        } else if mode == Mode::None {
            brake_target = 0.0;
        }

        // driver steering
        let error = state.y - scenario.lane_offset;
        integrator = (integrator + error * scenario.control_period)
            .clamp(-scenario.driver.integrator_limit, scenario.driver.integrator_limit);
        let cmd = scenario
            .driver
            .command(error, state.theta_s, integrator)
            .clamp(-scenario.driver.steer_limit, scenario.driver.steer_limit);

        // brake actuator lag + distribution over the wheels
        let alpha = scenario.control_period / (scenario.brake_tau + scenario.control_period);
        brake_actual += alpha * (brake_target - brake_actual);
        let allocation = ebd::allocate(
            brake_actual,
            0.0,
            normals_est,
            [params.mu; 4],
            [scenario.wheel_cap; 4],
        );
        controls = Controls { delta_sw_cmd: cmd, brake_wheel: allocation.b };

        max_abs_y = max_abs_y.max(state.y.abs());
        max_util = max_util.max(tel.friction_util);
        min_load = min_load.min(tel.loads.iter().cloned().fold(f64::INFINITY, f64::min));
        log.push(LogRecord {
            t: state.t,
            s: state.s,
            y: state.y,
            theta_s: state.theta_s,
            v: state.v,
            beta: state.beta,
            loads: tel.loads,
            brake: tel.brake,
            friction_util: tel.friction_util,
            a_proper: imu.a_proper,
            margin,
            driver_brake: scenario.driver_brake,
            lifted: tel.lifted,
        });

        // physics steps until the next control tick
        for _ in 0..steps_per_control {
            match step(road, params, tires, &state, &controls, scenario.dt) {
                Ok(next) => state = next,
                Err(SimError::OffRoad { s, y, t }) => {
                    if y.abs() <= road.half_width() && s >= scenario.s_end {
                        // ran past the far end of the ribbon, still in lane
                        completed = true;
                        break 'outer;
                    }
                    off_road = true;
                    max_abs_y = max_abs_y.max(y.abs());
                    log.push(LogRecord {
                        t,
                        s,
                        y,
                        theta_s: state.theta_s,
                        v: state.v,
                        beta: state.beta,
                        loads: tel.loads,
                        brake: tel.brake,
                        friction_util: tel.friction_util,
                        a_proper: imu.a_proper,
                        margin,
                        driver_brake: scenario.driver_brake,
                        lifted: tel.lifted,
                    });
                    break 'outer;
                }
                Err(e) => return Err(e),
            }
            if state.s >= scenario.s_end {
                completed = true;
                break 'outer;
            }
        }
        control_tick += 1;
    }

    Ok(ScenarioResult {
        log,
        completed,
        off_road,
        max_abs_y,
        max_friction_util: max_util,
        min_wheel_load: if min_load.is_finite() { min_load } else { 0.0 },
        planner_failures,
    })
}
