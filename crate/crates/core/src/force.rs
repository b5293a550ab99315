//! Net body forces and moments for a frozen pose, expressed affine in
//! (v^2, vdot): Newton-Euler force/moment terms, gravity and aero
//! contributions, tire-force extraction, normal-force moments and per-wheel
//! quasi-static weight distribution.

use nalgebra::{Vector2, Vector3};

use crate::affine::AffineScalar;
use crate::kinematics::{
    angular_accels, body_accels, coordinate_rates, tangent_angular_velocity,
    theta_s_rate_terms, KinematicsError, ThetaRateVariant,
};
use crate::road::{FundamentalForms, SurfaceFrame, SurfaceJet};

#[derive(Debug, Clone, Copy)]
pub struct VehicleParams {
    pub m: f64,
    /// Principal inertias about the body axes.
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    /// Center-of-mass height above the road.
    pub h: f64,
    pub l_f: f64,
    pub l_r: f64,
    /// Half track widths.
    pub t_f: f64,
    pub t_r: f64,
    pub mu: f64,
    pub g: f64,
    /// Lumped drag: F_drag = -k_drag * v^2 along body x.
    pub k_drag: f64,
    /// Lumped lift: F_lift = -k_lift * v^2 along body z.
    pub k_lift: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            m: 1500.0,
            i1: 600.0,
            i2: 2200.0,
            i3: 2500.0,
            h: 0.55,
            l_f: 1.2,
            l_r: 1.4,
            t_f: 0.75,
            t_r: 0.75,
            mu: 0.9,
            g: 9.81,
            k_drag: 0.0,
            k_lift: 0.0,
        }
    }
}

impl VehicleParams {
    pub fn wheelbase(&self) -> f64 {
        self.l_f + self.l_r
    }
}

/// Per-unit-v kinematic coefficients for a frozen pose and (beta, kappa_s,
/// kappa_beta). Velocity-level quantities scale linearly with v, so storing
/// them at v = 1 captures them exactly.
#[derive(Debug, Clone, Copy)]
pub struct StageKinematics {
    pub sdot_per_v: f64,
    pub ydot_per_v: f64,
    pub w1_per_v: f64,
    pub w2_per_v: f64,
    pub w3_per_v: f64,
    pub accel1: AffineScalar,
    pub accel2: AffineScalar,
    pub w1_dot: AffineScalar,
    pub w2_dot: AffineScalar,
    pub beta: f64,
}

pub fn stage_kinematics(
    jet: &SurfaceJet,
    forms: &FundamentalForms,
    frame: &SurfaceFrame,
    n: f64,
    beta: f64,
    kappa_s: f64,
    kappa_beta: f64,
) -> Result<StageKinematics, KinematicsError> {
    let (sdot_per_v, ydot_per_v) = coordinate_rates(frame, forms, n, 1.0, beta)?;
    let (w1_per_v, w2_per_v) = tangent_angular_velocity(frame, forms, n, 1.0, beta)?;
    let terms = theta_s_rate_terms(jet, ThetaRateVariant::default());
    let w3_per_v = kappa_s - terms.0 * sdot_per_v - terms.1 * ydot_per_v;
    let (accel1, accel2) = body_accels(beta, kappa_beta);
    let (w1_dot, w2_dot) = angular_accels(frame, forms, n, (accel1, accel2))?;
    Ok(StageKinematics {
        sdot_per_v,
        ydot_per_v,
        w1_per_v,
        w2_per_v,
        w3_per_v,
        accel1,
        accel2,
        w1_dot,
        w2_dot,
        beta,
    })
}

/// All stage-frozen force and moment quantities.
#[derive(Debug, Clone, Copy)]
pub struct ForceSet {
    /// Net body forces F^b_1..3.
    pub f_b: [AffineScalar; 3],
    /// Roll and pitch body moments K^b_1, K^b_2.
    pub k_b: [AffineScalar; 2],
    /// Net tire forces F^t_1..3.
    pub f_t: [AffineScalar; 3],
    /// Normal-force moments K^N_1, K^N_2.
    pub k_n: [AffineScalar; 2],
    /// Gravity in body components (constant at a pose).
    pub f_gravity: Vector3<f64>,
}

/// Quasi-static per-wheel normal loads.
#[derive(Debug, Clone, Copy)]
pub struct WheelNormals {
    pub n_f: AffineScalar,
    pub n_r: AffineScalar,
    pub delta: AffineScalar,
    pub n_fr: AffineScalar,
    pub n_fl: AffineScalar,
    pub n_rr: AffineScalar,
    pub n_rl: AffineScalar,
}

impl WheelNormals {
    pub fn as_array(&self) -> [AffineScalar; 4] {
        [self.n_fr, self.n_fl, self.n_rr, self.n_rl]
    }
}

/// Gravity force in body components: m * R_gb^T * (0, 0, -g).
pub fn gravity_body(frame: &SurfaceFrame, params: &VehicleParams) -> Vector3<f64> {
    params.m * (frame.r_gb.transpose() * Vector3::new(0.0, 0.0, -params.g))
}

/// Net body forces from the Newton-Euler translational equations.
pub fn body_forces(kin: &StageKinematics, params: &VehicleParams) -> [AffineScalar; 3] {
    let (sb, cb) = kin.beta.sin_cos();
    let f1 = (kin.accel1 + AffineScalar::v2_term(-kin.w3_per_v * sb)) * params.m;
    let f2 = (kin.accel2 + AffineScalar::v2_term(kin.w3_per_v * cb)) * params.m;
    let f3 = AffineScalar::v2_term(params.m * (kin.w1_per_v * sb - kin.w2_per_v * cb));
    [f1, f2, f3]
}

/// The closed-form net normal force: m v^2 u^T Q^-1 II (I - n II)^-1 Q u
/// with u the tangent-plane course direction. Must coincide with
/// body_forces()[2]; kept as an independent path for cross-checking.
pub fn net_normal_force_quadratic(
    forms: &FundamentalForms,
    frame: &SurfaceFrame,
    n: f64,
    beta: f64,
    theta_s: f64,
    params: &VehicleParams,
) -> Result<AffineScalar, KinematicsError> {
    let a = forms.i - n * forms.ii;
    let a_inv = a.try_inverse().ok_or(KinematicsError::SingularOffset)?;
    let q_inv = frame.q.try_inverse().ok_or(KinematicsError::SingularOffset)?;
    let course = beta + theta_s;
    let u = Vector2::new(course.cos(), course.sin());
    let val = (u.transpose() * q_inv * forms.ii * a_inv * frame.q * u)[(0, 0)];
    Ok(AffineScalar::v2_term(params.m * val))
}

/// Roll and pitch body moments from the Newton-Euler rotational equations.
pub fn body_moments(kin: &StageKinematics, params: &VehicleParams) -> [AffineScalar; 2] {
    let k1 = kin.w1_dot * params.i1
        + AffineScalar::v2_term((params.i3 - params.i2) * kin.w2_per_v * kin.w3_per_v);
    let k2 = kin.w2_dot * params.i2
        + AffineScalar::v2_term((params.i1 - params.i3) * kin.w3_per_v * kin.w1_per_v);
    [k1, k2]
}

/// Net tire forces: body forces minus gravity and aerodynamic forces.
pub fn tire_forces(
    f_b: &[AffineScalar; 3],
    f_gravity: &Vector3<f64>,
    params: &VehicleParams,
) -> [AffineScalar; 3] {
    [
        f_b[0] - AffineScalar::constant(f_gravity.x) + AffineScalar::v2_term(params.k_drag),
        f_b[1] - AffineScalar::constant(f_gravity.y),
        f_b[2] - AffineScalar::constant(f_gravity.z) + AffineScalar::v2_term(params.k_lift),
    ]
}

/// Moments about the CoM height due to tire normal forces.
pub fn normal_force_moments(
    k_b: &[AffineScalar; 2],
    f_t: &[AffineScalar; 3],
    params: &VehicleParams,
) -> [AffineScalar; 2] {
    [k_b[0] - f_t[1] * params.h, k_b[1] + f_t[0] * params.h]
}

/// Quasi-static load transfer over the four wheels.
///
/// With `paper_literal` the printed axle-load denominators (l_r + l_f) are
/// used, under which the four wheels sum to twice the net normal force; the
/// default halves them so the sum rule and pitch-moment reconstruction close.
pub fn wheel_normals(
    k_n: &[AffineScalar; 2],
    f_t3: AffineScalar,
    params: &VehicleParams,
    paper_literal: bool,
) -> WheelNormals {
    let denom = if paper_literal {
        params.wheelbase()
    } else {
        2.0 * params.wheelbase()
    };
    let n_f = (f_t3 * params.l_r - k_n[1]) * (1.0 / denom);
    let n_r = (f_t3 * params.l_f + k_n[1]) * (1.0 / denom);
    let delta = k_n[0] * (1.0 / (2.0 * (params.t_f * params.t_f + params.t_r * params.t_r)));
    WheelNormals {
        n_f,
        n_r,
        delta,
        n_fr: n_f - delta * params.t_f,
        n_fl: n_f + delta * params.t_f,
        n_rr: n_r - delta * params.t_r,
        n_rl: n_r + delta * params.t_r,
    }
}

/// Full force chain for a frozen pose: kinematic coefficients, forces,
/// moments, and wheel loads in one pass.
pub fn stage_forces(
    jet: &SurfaceJet,
    forms: &FundamentalForms,
    frame: &SurfaceFrame,
    params: &VehicleParams,
    n: f64,
    beta: f64,
    kappa_s: f64,
    kappa_beta: f64,
    paper_literal: bool,
) -> Result<(ForceSet, WheelNormals), KinematicsError> {
    let kin = stage_kinematics(jet, forms, frame, n, beta, kappa_s, kappa_beta)?;
    let f_gravity = gravity_body(frame, params);
    let f_b = body_forces(&kin, params);
    let k_b = body_moments(&kin, params);
    let f_t = tire_forces(&f_b, &f_gravity, params);
    let k_n = normal_force_moments(&k_b, &f_t, params);
    let normals = wheel_normals(&k_n, f_t[2], params, paper_literal);
    Ok((ForceSet { f_b, k_b, f_t, k_n, f_gravity }, normals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::road::{fundamental_forms, surface_frame};
    use approx::assert_relative_eq;

    fn setup(
        road: &crate::road::RoadSurface,
        s: f64,
        y: f64,
        theta_s: f64,
    ) -> (SurfaceJet, FundamentalForms, SurfaceFrame) {
        let jet = road.eval_jet(s, y).unwrap();
        let forms = fundamental_forms(&jet);
        let frame = surface_frame(&jet, theta_s).unwrap();
        (jet, forms, frame)
    }

    #[test]
    fn gravity_on_plane_and_bank_and_grade() {
        let p = VehicleParams::default();
        let (_, _, frame) = setup(&presets::plane_road(), 5.0, 0.0, 0.0);
        let g = gravity_body(&frame, &p);
        assert_relative_eq!(g, nalgebra::Vector3::new(0.0, 0.0, -p.m * p.g), epsilon = 1e-9);

        // 30% bank: lateral gravity component m g * 0.3 / sqrt(1.09)
        let road = crate::road::RoadSurface::banked_arc(
            50.0,
            0.3f64.atan(),
            std::f64::consts::PI,
            4.0,
        );
        let (_, _, frame) = setup(&road, 0.0, 0.0, 0.0);
        let g = gravity_body(&frame, &p);
        let expect = p.m * p.g * 0.3 / 1.09f64.sqrt();
        assert_relative_eq!(g.y.abs(), expect, max_relative = 1e-10);

        // pure grade: longitudinal component -m g sin(gamma)
        let gamma: f64 = 0.08;
        let road = crate::road::RoadSurface::ribbon(
            vec![0.0, 50.0, 100.0],
            vec![0.0; 3],
            vec![0.0; 3],
            vec![gamma; 3],
            4.0,
        )
        .unwrap();
        let (_, _, frame) = setup(&road, 20.0, 0.0, 0.0);
        let g = gravity_body(&frame, &p);
        assert_relative_eq!(g.x, -p.m * p.g * gamma.sin(), max_relative = 1e-10);
    }

    #[test]
    fn centripetal_and_crest_forces() {
        let p = VehicleParams::default();

        // plane lane following: no net normal force
        let (jet, forms, frame) = setup(&presets::plane_road(), 5.0, 0.0, 0.0);
        let kin = stage_kinematics(&jet, &forms, &frame, 0.0, 0.0, 0.0, 0.0).unwrap();
        let f = body_forces(&kin, &p);
        assert_eq!(f[2], AffineScalar::ZERO);

        // flat arc, lane following (kappa_s = 0; the yaw rate comes from the
        // heading-rate term): lateral centripetal m v^2 / R
        let (jet, forms, frame) = setup(&presets::flat_arc(), 10.0, 0.0, 0.0);
        let kin = stage_kinematics(&jet, &forms, &frame, 0.0, 0.0, 0.0, 0.0).unwrap();
        let f = body_forces(&kin, &p);
        assert_relative_eq!(f[1].c_v2, p.m / 50.0, max_relative = 1e-10);
        assert_relative_eq!(f[1].c0, 0.0, epsilon = 1e-12);

        // crest: downward m v^2 / R
        let (jet, forms, frame) = setup(&presets::crest_road(), 5.0, 0.0, 0.0);
        let kin = stage_kinematics(&jet, &forms, &frame, 0.0, 0.0, 0.0, 0.0).unwrap();
        let f = body_forces(&kin, &p);
        assert_relative_eq!(f[2].c_v2, -p.m / 100.0, max_relative = 1e-10);
    }

    #[test]
    fn quadratic_normal_force_path_equality() {
        // Eq-8-style closed form vs Newton-Euler F^b_3, coefficient-wise
        let p = VehicleParams::default();
        for (name, road) in presets::all_shipped() {
            for i in 0..12 {
                let s = road.s_max() * (i as f64 + 0.5) / 12.0;
                let y = [-2.0, 0.0, 1.3][i % 3];
                let theta_s = [0.0, 0.2, -0.4][(i / 3) % 3];
                let beta = [0.0, 0.1, -0.15][(i / 2) % 3];
                let (jet, forms, frame) = setup(&road, s, y, theta_s);
                let kin =
                    stage_kinematics(&jet, &forms, &frame, p.h, beta, 0.0, 0.0).unwrap();
                let f3 = body_forces(&kin, &p)[2];
                let q =
                    net_normal_force_quadratic(&forms, &frame, p.h, beta, theta_s, &p)
                        .unwrap();
                assert_relative_eq!(f3.c_v2, q.c_v2, epsilon = 1e-10, max_relative = 1e-10);
                assert!(
                    f3.c0.abs() < 1e-10 && f3.c_vd.abs() < 1e-10,
                    "{name}: F3 picked up non-quadratic terms"
                );
            }
        }
    }

    #[test]
    fn moments_vanish_on_plane() {
        let p = VehicleParams::default();
        let (jet, forms, frame) = setup(&presets::plane_road(), 5.0, 0.0, 0.0);
        let kin = stage_kinematics(&jet, &forms, &frame, p.h, 0.0, 0.0, 0.0).unwrap();
        let k = body_moments(&kin, &p);
        assert_eq!(k[0], AffineScalar::ZERO);
        assert_eq!(k[1], AffineScalar::ZERO);
    }

    #[test]
    fn tire_forces_statics_and_drag() {
        let p = VehicleParams::default();
        let (jet, forms, frame) = setup(&presets::plane_road(), 5.0, 0.0, 0.0);
        let (fs, _) = stage_forces(&jet, &forms, &frame, &p, p.h, 0.0, 0.0, 0.0, false).unwrap();
        // at rest: F^t = (0, 0, m g)
        assert_relative_eq!(fs.f_t[0].value(0.0, 0.0), 0.0, epsilon = 1e-9);
        assert_relative_eq!(fs.f_t[2].value(0.0, 0.0), p.m * p.g, max_relative = 1e-12);

        // with drag: F^t_1 gains k_drag * v^2
        let pd = VehicleParams { k_drag: 0.4, ..p };
        let (fs, _) = stage_forces(&jet, &forms, &frame, &pd, p.h, 0.0, 0.0, 0.0, false).unwrap();
        assert_relative_eq!(
            fs.f_t[0].value(400.0, 0.0) - fs.f_b[0].value(400.0, 0.0),
            160.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn normal_force_moment_substitutions() {
        let p = VehicleParams::default();
        // braking at -4000 N on a plane: K^N_2 shifts by -2200 N m
        let k_b = [AffineScalar::ZERO, AffineScalar::ZERO];
        let f_t = [
            AffineScalar::constant(-4000.0),
            AffineScalar::ZERO,
            AffineScalar::constant(p.m * p.g),
        ];
        let k_n = normal_force_moments(&k_b, &f_t, &p);
        assert_relative_eq!(k_n[1].c0, -4000.0 * 0.55, max_relative = 1e-12);

        // steady flat cornering: K^N_1 = -m v^2 / R * h
        let (jet, forms, frame) = setup(&presets::flat_arc(), 10.0, 0.0, 0.0);
        let (fs, _) = stage_forces(&jet, &forms, &frame, &p, 0.0, 0.0, 0.0, 0.0, false)
            .unwrap();
        assert_relative_eq!(fs.k_n[0].c_v2, -p.m / 50.0 * p.h, max_relative = 1e-9);
    }

    #[test]
    fn static_wheel_loads_split_by_wheelbase() {
        let p = VehicleParams::default();
        let (jet, forms, frame) = setup(&presets::plane_road(), 5.0, 0.0, 0.0);
        let (_, wn) = stage_forces(&jet, &forms, &frame, &p, p.h, 0.0, 0.0, 0.0, false).unwrap();
        let mg = p.m * p.g;
        let front = mg * 1.4 / (2.0 * 2.6);
        let rear = mg * 1.2 / (2.0 * 2.6);
        assert_relative_eq!(wn.n_fr.value(0.0, 0.0), front, max_relative = 1e-10);
        assert_relative_eq!(wn.n_fl.value(0.0, 0.0), front, max_relative = 1e-10);
        assert_relative_eq!(wn.n_rr.value(0.0, 0.0), rear, max_relative = 1e-10);
        assert_relative_eq!(wn.n_rl.value(0.0, 0.0), rear, max_relative = 1e-10);
        // hard braking shifts (0.9 m g * h) / (2 L) to each front wheel
        let shift = 0.9 * mg * p.h / (2.0 * 2.6);
        let braking = wn.n_fr.value(0.0, 0.0) + shift;
        let k_b = [AffineScalar::ZERO, AffineScalar::ZERO];
        let f_t = [
            AffineScalar::constant(-0.9 * mg),
            AffineScalar::ZERO,
            AffineScalar::constant(mg),
        ];
        let k_n = normal_force_moments(&k_b, &f_t, &p);
        let wb = wheel_normals(&k_n, f_t[2], &p, false);
        assert_relative_eq!(wb.n_fr.value(0.0, 0.0), braking, max_relative = 1e-10);
    }

    #[test]
    fn paper_literal_doubles_the_axle_sum() {
        let p = VehicleParams::default();
        let k_n = [AffineScalar::ZERO, AffineScalar::ZERO];
        let f_t3 = AffineScalar::constant(p.m * p.g);
        let wn = wheel_normals(&k_n, f_t3, &p, true);
        let sum: f64 = wn.as_array().iter().map(|a| a.value(0.0, 0.0)).sum();
        assert_relative_eq!(sum, 2.0 * p.m * p.g, max_relative = 1e-12);
    }

    #[test]
    fn sum_rule_and_moment_reconstruction_randomized() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let p = VehicleParams::default();
        let roads = presets::all_shipped();
        for _ in 0..500 {
            let (_, road) = &roads[rng.gen_range(0..roads.len())];
            let s = rng.gen_range(0.05..0.95) * road.s_max();
            let y = rng.gen_range(-0.9..0.9) * road.half_width();
            let theta_s = rng.gen_range(-0.5..0.5);
            let beta = rng.gen_range(-0.3..0.3);
            let ks = rng.gen_range(-0.02..0.02);
            let kb = rng.gen_range(-0.02..0.02);
            let (jet, forms, frame) = setup(road, s, y, theta_s);
            let (fs, wn) =
                stage_forces(&jet, &forms, &frame, &p, p.h, beta, ks, kb, false).unwrap();
            // sum rule, coefficient-wise
            let sum = wn.n_fr + wn.n_fl + wn.n_rr + wn.n_rl;
            let scale = p.m * p.g;
            assert_relative_eq!(sum.c0, fs.f_t[2].c0, epsilon = 1e-10 * scale);
            assert_relative_eq!(sum.c_v2, fs.f_t[2].c_v2, epsilon = 1e-10 * scale);
            assert_relative_eq!(sum.c_vd, fs.f_t[2].c_vd, epsilon = 1e-10 * scale);
            // roll reconstruction
            let roll = (wn.n_fl - wn.n_fr) * p.t_f + (wn.n_rl - wn.n_rr) * p.t_r;
            assert_relative_eq!(roll.c0, fs.k_n[0].c0, epsilon = 1e-10 * scale);
            assert_relative_eq!(roll.c_v2, fs.k_n[0].c_v2, epsilon = 1e-10 * scale);
            assert_relative_eq!(roll.c_vd, fs.k_n[0].c_vd, epsilon = 1e-10 * scale);
            // pitch reconstruction
            let pitch = (wn.n_r * p.l_r - wn.n_f * p.l_f) * 2.0;
            assert_relative_eq!(pitch.c0, fs.k_n[1].c0, epsilon = 1e-10 * scale);
            assert_relative_eq!(pitch.c_v2, fs.k_n[1].c_v2, epsilon = 1e-10 * scale);
            assert_relative_eq!(pitch.c_vd, fs.k_n[1].c_vd, epsilon = 1e-10 * scale);
        }
    }
}
