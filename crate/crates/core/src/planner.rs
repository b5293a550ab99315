//! Multistage speed planning along a lane: freeze pose parameters at N
//! arc-length samples, express tire forces and wheel loads affine in
//! (v^2, vdot), and solve for the speed profile that tracks a nominal
//! longitudinal force target B as closely as the friction cone, road
//! contact, and velocity continuity allow.

use nalgebra::{DMatrix, DVector};

use crate::affine::AffineScalar;
use crate::conic::{
    self, ConeSpec, ConicProgram, SolveStatus, SolverSettings,
};
use crate::force::{stage_forces, ForceSet, VehicleParams, WheelNormals};
use crate::road::{fundamental_forms, surface_frame, RoadError, RoadSurface};

#[derive(Debug, thiserror::Error)]
pub enum PlannerError {
    #[error(transparent)]
    Road(#[from] RoadError),
    #[error("kinematics: {0}")]
    Kinematics(#[from] crate::kinematics::KinematicsError),
    #[error("need at least 2 stages, got {0}")]
    TooFewStages(usize),
    #[error("brake target profile has {got} entries for {stages} stages")]
    BadTargetProfile { got: usize, stages: usize },
    #[error("no feasible speed profile; first violated stage {stage} (s = {s:.2} m)")]
    Infeasible { stage: usize, s: f64 },
    #[error("solver failed with status {0:?}")]
    SolverFailure(SolveStatus),
}

/// Longitudinal force target along the horizon (driver brake/drive request).
#[derive(Debug, Clone)]
pub enum TargetProfile {
    Constant(f64),
    PerStage(Vec<f64>),
}

impl TargetProfile {
    fn at(&self, k: usize) -> f64 {
        match self {
            TargetProfile::Constant(b) => *b,
            TargetProfile::PerStage(v) => v[k],
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PlannerOptions {
    /// Use the printed forms of the load-transfer denominators and the
    /// velocity continuity coupling instead of the dimensionally consistent
    /// ones.
    pub paper_literal: bool,
    /// Plan as if the road were planar: drop the surface curvature (second
    /// fundamental form) from the stage force model. Deliberately wrong on
    /// nonplanar roads; exists to demonstrate what the curvature terms buy.
    pub planar_contact: bool,
}

/// Frozen pose parameters and cached affine force quantities for one stage.
#[derive(Debug, Clone)]
pub struct StageParams {
    pub k: usize,
    pub s: f64,
    pub y: f64,
    /// CoM offset along the surface normal.
    pub n: f64,
    pub theta_s: f64,
    pub beta: f64,
    pub kappa_s: f64,
    pub kappa_beta: f64,
    /// Cumulative arc length along the lane from the first stage.
    pub l: f64,
    pub mu: f64,
    /// Longitudinal force target B at this stage.
    pub b: f64,
    pub forces: ForceSet,
    pub normals: WheelNormals,
}

/// Lane-following stage construction: uniform s samples at fixed offset.
pub fn build_stages(
    road: &RoadSurface,
    params: &VehicleParams,
    lane_offset: f64,
    s_start: f64,
    s_end: f64,
    n_stages: usize,
    target: &TargetProfile,
    options: PlannerOptions,
) -> Result<Vec<StageParams>, PlannerError> {
    if n_stages < 2 {
        return Err(PlannerError::TooFewStages(n_stages));
    }
    if let TargetProfile::PerStage(v) = target {
        if v.len() != n_stages {
            return Err(PlannerError::BadTargetProfile { got: v.len(), stages: n_stages });
        }
    }
    let mut stages = Vec::with_capacity(n_stages);
    let ds = (s_end - s_start) / (n_stages - 1) as f64;
    let mut l = 0.0;
    let mut prev_s = s_start;
    for k in 0..n_stages {
        let s = s_start + ds * k as f64;
        if k > 0 {
            l += road.lane_arclength(lane_offset, prev_s, s)?;
        }
        let jet = road.eval_jet(s, lane_offset)?;
        let mut forms = fundamental_forms(&jet);
        if options.planar_contact {
            forms.ii = nalgebra::Matrix2::zeros();
        }
        let frame = surface_frame(&jet, 0.0)?;
        let (forces, normals) = stage_forces(
            &jet,
            &forms,
            &frame,
            params,
            params.h,
            0.0,
            0.0,
            0.0,
            options.paper_literal,
        )?;
        stages.push(StageParams {
            k,
            s,
            y: lane_offset,
            n: params.h,
            theta_s: 0.0,
            beta: 0.0,
            kappa_s: 0.0,
            kappa_beta: 0.0,
            l,
            mu: params.mu,
            b: target.at(k),
            forces,
            normals,
        });
        prev_s = s;
    }
    Ok(stages)
}

/// Variable layout of the assembled program: v^2 block, vdot block, then the
/// absolute-value slack block, N variables each.
fn idx_v2(k: usize) -> usize {
    k
}
fn idx_vd(n: usize, k: usize) -> usize {
    n + k
}
fn idx_t(n: usize, k: usize) -> usize {
    2 * n + k
}

fn continuity_factor(options: PlannerOptions) -> f64 {
    // d(v^2)/dl = 2 v dv/dl = 2 vdot, trapezoid over the segment; the
    // printed coupling halves this
    if options.paper_literal {
        0.5
    } else {
        1.0
    }
}

/// Assemble the N-stage program: minimize sum of |F^t_1 - B| slacks subject
/// to friction cones, wheel-contact bounds, v^2 >= 0, velocity continuity,
/// and the initial speed.
pub fn assemble_program(
    stages: &[StageParams],
    v0: f64,
    options: PlannerOptions,
) -> Result<ConicProgram, PlannerError> {
    let n = stages.len();
    if n < 2 {
        return Err(PlannerError::TooFewStages(n));
    }
    let nv = 3 * n;
    let mut c = DVector::zeros(nv);
    for k in 0..n {
        c[idx_t(n, k)] = 1.0;
    }

    // equalities: initial condition + N-1 continuity rows
    let fac = continuity_factor(options);
    let mut a = DMatrix::zeros(n, nv);
    let mut b = DVector::zeros(n);
    a[(0, idx_v2(0))] = 1.0;
    b[0] = v0 * v0;
    for k in 0..n - 1 {
        let dl = stages[k + 1].l - stages[k].l;
        a[(1 + k, idx_v2(k + 1))] = 1.0;
        a[(1 + k, idx_v2(k))] = -1.0;
        a[(1 + k, idx_vd(n, k))] = -fac * dl;
        a[(1 + k, idx_vd(n, k + 1))] = -fac * dl;
    }

    // inequalities: 7 orthant rows + one SOC block per stage
    let n_orth = 7 * n;
    let m = n_orth + 3 * n;
    let mut g = DMatrix::zeros(m, nv);
    let mut h = DVector::zeros(m);
    // row helper: emit (affine in stage vars) <= rhs scaled into G x <= h
    let put = |g: &mut DMatrix<f64>, h: &mut DVector<f64>, row: usize, k: usize, aff: AffineScalar, rhs: f64| {
        g[(row, idx_v2(k))] = aff.c_v2;
        g[(row, idx_vd(n, k))] = aff.c_vd;
        h[row] = rhs - aff.c0;
    };
    for (k, st) in stages.iter().enumerate() {
        let f1 = st.forces.f_t[0];
        let base = 7 * k;
        // t_k >= +-(F1 - B): F1 - t <= B and -F1 - t <= -B
        put(&mut g, &mut h, base, k, f1, st.b);
        g[(base, idx_t(n, k))] = -1.0;
        put(&mut g, &mut h, base + 1, k, -f1, -st.b);
        g[(base + 1, idx_t(n, k))] = -1.0;
        // wheel contact: -N_i <= 0
        for (i, ni) in st.normals.as_array().iter().enumerate() {
            put(&mut g, &mut h, base + 2 + i, k, -*ni, 0.0);
        }
        // v^2 >= 0
        g[(base + 6, idx_v2(k))] = -1.0;
        // friction cone (mu F3, F1, F2): slack s = h - G x must equal the
        // affine expressions, so negate the coefficients into G
        let soc = n_orth + 3 * k;
        for (j, aff) in [st.forces.f_t[2] * st.mu, f1, st.forces.f_t[1]]
            .into_iter()
            .enumerate()
        {
            g[(soc + j, idx_v2(k))] = -aff.c_v2;
            g[(soc + j, idx_vd(n, k))] = -aff.c_vd;
            h[soc + j] = aff.c0;
        }
    }

    Ok(ConicProgram {
        c,
        a,
        b,
        g,
        h,
        cones: ConeSpec { n_orthant: n_orth, n_soc3: n },
    })
}

/// One stage of a solved profile, with quantities recomputed from the stage
/// caches rather than copied from solver internals.
#[derive(Debug, Clone, Copy)]
pub struct StageResult {
    pub k: usize,
    pub s: f64,
    pub l: f64,
    pub v2: f64,
    pub vdot: f64,
    pub ft1: f64,
    pub ft2: f64,
    pub ft3: f64,
    /// Intervention force F^t_1 - B.
    pub margin: f64,
    /// |(F^t_1, F^t_2)| / (mu F^t_3).
    pub friction_util: f64,
    pub n_fr: f64,
    pub n_fl: f64,
    pub n_rr: f64,
    pub n_rl: f64,
    /// True where the intervention force exceeds the reporting threshold.
    pub flag: bool,
}

#[derive(Debug, Clone)]
pub struct SpeedProfile {
    pub stages: Vec<StageResult>,
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Worst velocity-continuity defect, recomputed by substitution.
    pub max_continuity_residual: f64,
    /// Worst violation over contact/cone/bound constraints, recomputed.
    pub max_constraint_violation: f64,
}

pub const INTERVENTION_THRESHOLD: f64 = 1.0;

/// Solve the assembled program and map the solution back onto the stages.
pub fn solve_profile(
    stages: &[StageParams],
    v0: f64,
    options: PlannerOptions,
) -> Result<SpeedProfile, PlannerError> {
    let program = assemble_program(stages, v0, options)?;
    let sol = conic::solve(&program, &SolverSettings::default());
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            let stage = first_violated_stage(stages, v0, options).unwrap_or(0);
            return Err(PlannerError::Infeasible { stage, s: stages[stage].s });
        }
        other => return Err(PlannerError::SolverFailure(other)),
    }

    let n = stages.len();
    let mut rows = Vec::with_capacity(n);
    let mut worst_violation = 0.0f64;
    for (k, st) in stages.iter().enumerate() {
        let v2 = sol.x[idx_v2(k)];
        let vd = sol.x[idx_vd(n, k)];
        let ft1 = st.forces.f_t[0].value(v2, vd);
        let ft2 = st.forces.f_t[1].value(v2, vd);
        let ft3 = st.forces.f_t[2].value(v2, vd);
        let margin = ft1 - st.b;
        let friction_util = ft1.hypot(ft2) / (st.mu * ft3).max(1e-12);
        let loads = st.normals.as_array().map(|a| a.value(v2, vd));
        worst_violation = worst_violation
            .max(ft1.hypot(ft2) - st.mu * ft3)
            .max(-v2)
            .max(loads.iter().fold(0.0f64, |w, &l| w.max(-l)));
        rows.push(StageResult {
            k,
            s: st.s,
            l: st.l,
            v2,
            vdot: vd,
            ft1,
            ft2,
            ft3,
            margin,
            friction_util,
            n_fr: loads[0],
            n_fl: loads[1],
            n_rr: loads[2],
            n_rl: loads[3],
            flag: margin.abs() > INTERVENTION_THRESHOLD,
        });
    }
    let fac = continuity_factor(options);
    let mut max_cont = (rows[0].v2 - v0 * v0).abs();
    for k in 0..n - 1 {
        let dl = stages[k + 1].l - stages[k].l;
        let res = rows[k + 1].v2 - rows[k].v2 - fac * (rows[k].vdot + rows[k + 1].vdot) * dl;
        max_cont = max_cont.max(res.abs());
    }
    Ok(SpeedProfile {
        stages: rows,
        objective: sol.objective,
        status: sol.status,
        iterations: sol.iterations,
        max_continuity_residual: max_cont,
        max_constraint_violation: worst_violation,
    })
}

/// Per-stage intervention forces and flags.
pub fn intervention_report(profile: &SpeedProfile) -> Vec<(f64, bool)> {
    profile.stages.iter().map(|r| (r.margin, r.flag)).collect()
}

/// Phase-1 diagnosis for infeasible programs: relax every stage's contact,
/// cone, and v^2 constraints by a per-stage nonnegative slack, minimize the
/// total slack, and report the first stage needing any.
fn first_violated_stage(
    stages: &[StageParams],
    v0: f64,
    options: PlannerOptions,
) -> Option<usize> {
    let n = stages.len();
    let nv = 3 * n; // v2, vdot, q
    let mut c = DVector::zeros(nv);
    for k in 0..n {
        c[2 * n + k] = 1.0;
    }
    let fac = continuity_factor(options);
    let mut a = DMatrix::zeros(n, nv);
    let mut b = DVector::zeros(n);
    a[(0, 0)] = 1.0;
    b[0] = v0 * v0;
    for k in 0..n - 1 {
        let dl = stages[k + 1].l - stages[k].l;
        a[(1 + k, k + 1)] = 1.0;
        a[(1 + k, k)] = -1.0;
        a[(1 + k, n + k)] = -fac * dl;
        a[(1 + k, n + k + 1)] = -fac * dl;
    }
    let n_orth = 6 * n; // 4 contacts + v2 bound + q bound
    let m = n_orth + 3 * n;
    let mut g = DMatrix::zeros(m, nv);
    let mut h = DVector::zeros(m);
    for (k, st) in stages.iter().enumerate() {
        let base = 6 * k;
        for (i, ni) in st.normals.as_array().iter().enumerate() {
            g[(base + i, k)] = -ni.c_v2;
            g[(base + i, n + k)] = -ni.c_vd;
            g[(base + i, 2 * n + k)] = -1.0;
            h[base + i] = ni.c0;
        }
        g[(base + 4, k)] = -1.0;
        g[(base + 4, 2 * n + k)] = -1.0;
        g[(base + 5, 2 * n + k)] = -1.0;
        let soc = n_orth + 3 * k;
        for (j, aff) in [st.forces.f_t[2] * st.mu, st.forces.f_t[0], st.forces.f_t[1]]
            .into_iter()
            .enumerate()
        {
            g[(soc + j, k)] = -aff.c_v2;
            g[(soc + j, n + k)] = -aff.c_vd;
            h[soc + j] = aff.c0;
        }
        // the slack also relaxes the cone radius
        g[(soc, 2 * n + k)] = -1.0;
    }
    let prog = ConicProgram { c, a, b, g, h, cones: ConeSpec { n_orthant: n_orth, n_soc3: n } };
    let sol = conic::solve(&prog, &SolverSettings::default());
    if sol.status != SolveStatus::Optimal {
        return None;
    }
    let mg_tol = 1e-6 * stages[0].forces.f_gravity.norm().max(1.0);
    (0..n).find(|&k| sol.x[2 * n + k] > mg_tol)
}

/// Largest v0 for which a lane-following profile over [s_start, s_end] is
/// feasible, found by bisection. Used by tests and the feasibility-envelope
/// reports.
pub fn max_feasible_speed(
    road: &RoadSurface,
    params: &VehicleParams,
    lane_offset: f64,
    s_start: f64,
    s_end: f64,
    n_stages: usize,
    options: PlannerOptions,
    v_hi: f64,
) -> Result<f64, PlannerError> {
    let stages = build_stages(
        road,
        params,
        lane_offset,
        s_start,
        s_end,
        n_stages,
        &TargetProfile::Constant(0.0),
        options,
    )?;
    // programs straddling the feasibility boundary can stall the solver;
    // counting those as infeasible only biases the bisection by a band far
    // below its tolerance
    let feasible = |v0: f64| solve_profile(&stages, v0, options).is_ok();
    let mut lo = 0.0;
    let mut hi = v_hi;
    if feasible(hi) {
        return Ok(hi);
    }
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-4 {
            break;
        }
    }
    Ok(lo)
}
