//! Oracle tests for the interior-point conic solver: hand-checkable toy
//! programs, brute-force vertex enumeration for random LPs, and randomly
//! generated programs with a constructed primal-dual optimal pair.

use nalgebra::{DMatrix, DVector};
use nonplanar::conic::{
    residuals, solve, ConeSpec, ConicProgram, SolveStatus, SolverSettings,
};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn settings() -> SolverSettings {
    SolverSettings::default()
}

#[test]
fn absolute_value_epigraph_lp() {
    // minimize t subject to t >= x - 3, t >= 3 - x, x = 5; optimum t = 2
    let prog = ConicProgram {
        c: DVector::from_vec(vec![0.0, 1.0]),
        a: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        b: DVector::from_vec(vec![5.0]),
        g: DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, -1.0]),
        h: DVector::from_vec(vec![3.0, -3.0]),
        cones: ConeSpec { n_orthant: 2, n_soc3: 0 },
    };
    let sol = solve(&prog, &settings());
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.x[0] - 5.0).abs() < 1e-7, "x = {}", sol.x[0]);
    assert!((sol.x[1] - 2.0).abs() < 1e-7, "t = {}", sol.x[1]);
    assert!(sol.primal_residual < 1e-8 && sol.dual_residual < 1e-8 && sol.gap < 1e-8);
}

#[test]
fn soc_ball_linear_objective() {
    // minimize x1 + x2 subject to |(x1, x2)| <= 1; optimum -sqrt(2)
    let prog = ConicProgram {
        c: DVector::from_vec(vec![1.0, 1.0]),
        a: DMatrix::zeros(0, 2),
        b: DVector::zeros(0),
        g: DMatrix::from_row_slice(3, 2, &[0.0, 0.0, -1.0, 0.0, 0.0, -1.0]),
        h: DVector::from_vec(vec![1.0, 0.0, 0.0]),
        cones: ConeSpec { n_orthant: 0, n_soc3: 1 },
    };
    let sol = solve(&prog, &settings());
    assert_eq!(sol.status, SolveStatus::Optimal);
    let r = 1.0 / 2f64.sqrt();
    assert!((sol.objective + 2f64.sqrt()).abs() < 1e-7);
    assert!((sol.x[0] + r).abs() < 1e-6 && (sol.x[1] + r).abs() < 1e-6);
}

#[test]
fn negative_radius_soc_is_infeasible() {
    // (u, x1, x2) in SOC with u = -1 has no feasible point
    let prog = ConicProgram {
        c: DVector::from_vec(vec![0.0, 0.0, 0.0]),
        a: DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
        b: DVector::from_vec(vec![-1.0]),
        g: -DMatrix::identity(3, 3),
        h: DVector::zeros(3),
        cones: ConeSpec { n_orthant: 0, n_soc3: 1 },
    };
    let sol = solve(&prog, &settings());
    assert_eq!(sol.status, SolveStatus::Infeasible);
}

#[test]
fn contradictory_orthant_rows_are_infeasible() {
    // x <= -1 and -x <= -2 (x >= 2) conflict
    let prog = ConicProgram {
        c: DVector::from_vec(vec![1.0]),
        a: DMatrix::zeros(0, 1),
        b: DVector::zeros(0),
        g: DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
        h: DVector::from_vec(vec![-1.0, -2.0]),
        cones: ConeSpec { n_orthant: 2, n_soc3: 0 },
    };
    let sol = solve(&prog, &settings());
    assert_eq!(sol.status, SolveStatus::Infeasible);
}

#[test]
fn unbounded_direction_detected() {
    // minimize -x with only x >= 0
    let prog = ConicProgram {
        c: DVector::from_vec(vec![-1.0]),
        a: DMatrix::zeros(0, 1),
        b: DVector::zeros(0),
        g: DMatrix::from_row_slice(1, 1, &[-1.0]),
        h: DVector::zeros(1),
        cones: ConeSpec { n_orthant: 1, n_soc3: 0 },
    };
    let sol = solve(&prog, &settings());
    assert_eq!(sol.status, SolveStatus::Unbounded);
}

/// Brute-force LP solver: enumerate all n-subsets of the inequality rows,
/// solve the active set, keep the best feasible vertex.
fn brute_force_lp(c: &DVector<f64>, g: &DMatrix<f64>, h: &DVector<f64>) -> Option<f64> {
    let n = c.len();
    let m = g.nrows();
    let mut best: Option<f64> = None;
    let mut idx = vec![0usize; n];
    fn rec(
        start: usize,
        k: usize,
        idx: &mut Vec<usize>,
        n: usize,
        m: usize,
        c: &DVector<f64>,
        g: &DMatrix<f64>,
        h: &DVector<f64>,
        best: &mut Option<f64>,
    ) {
        if k == n {
            let mat = DMatrix::from_fn(n, n, |i, j| g[(idx[i], j)]);
            let rhs = DVector::from_fn(n, |i, _| h[idx[i]]);
            if let Some(x) = mat.lu().solve(&rhs) {
                let slack = h - g * &x;
                if slack.iter().all(|&v| v > -1e-8) {
                    let obj = c.dot(&x);
                    if best.map_or(true, |b| obj < b) {
                        *best = Some(obj);
                    }
                }
            }
            return;
        }
        for i in start..m {
            idx[k] = i;
            rec(i + 1, k + 1, idx, n, m, c, g, h, best);
        }
    }
    rec(0, 0, &mut idx, n, m, c, g, h, &mut best);
    best
}

#[test]
fn random_lps_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..20 {
        let n = 3;
        let m = 9;
        // random rows plus a bounding box to guarantee a bounded optimum
        let mut g = DMatrix::zeros(m + 2 * n, n);
        let mut h = DVector::zeros(m + 2 * n);
        for i in 0..m {
            for j in 0..n {
                g[(i, j)] = rng.gen_range(-1.0..1.0);
            }
            h[i] = rng.gen_range(0.2..2.0);
        }
        for j in 0..n {
            g[(m + 2 * j, j)] = 1.0;
            h[m + 2 * j] = 5.0;
            g[(m + 2 * j + 1, j)] = -1.0;
            h[m + 2 * j + 1] = 5.0;
        }
        let c = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0f64));
        let prog = ConicProgram {
            c: c.clone(),
            a: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
            g: g.clone(),
            h: h.clone(),
            cones: ConeSpec { n_orthant: m + 2 * n, n_soc3: 0 },
        };
        let sol = solve(&prog, &settings());
        assert_eq!(sol.status, SolveStatus::Optimal, "trial {trial}");
        let oracle = brute_force_lp(&c, &g, &h).expect("bounded LP has a vertex optimum");
        assert!(
            (sol.objective - oracle).abs() < 1e-6 * oracle.abs().max(1.0),
            "trial {trial}: ipm {} vs vertex {}",
            sol.objective,
            oracle
        );
        let rep = residuals(&prog, &sol.x);
        assert!(rep.max_orthant_violation < 1e-7, "trial {trial}");
    }
}

/// Generate a random mixed orthant/SOC program with a constructed strictly
/// complementary primal-dual pair, so optimality can be checked exactly.
fn random_certified_program(
    rng: &mut ChaCha8Rng,
    n: usize,
    p: usize,
    n_orthant: usize,
    n_soc3: usize,
) -> (ConicProgram, f64) {
    let m = n_orthant + 3 * n_soc3;
    let a = DMatrix::from_fn(p, n, |_, _| rng.gen_range(-1.0..1.0f64));
    let g = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0f64));
    let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0f64));
    // strictly feasible primal slack and dual cone multiplier
    let mut s0 = DVector::zeros(m);
    let mut z0 = DVector::zeros(m);
    for i in 0..n_orthant {
        s0[i] = rng.gen_range(0.1..1.0);
        z0[i] = rng.gen_range(0.1..1.0);
    }
    for k in 0..n_soc3 {
        let i = n_orthant + 3 * k;
        for v in [&mut s0, &mut z0] {
            let a1: f64 = rng.gen_range(-0.5..0.5);
            let a2: f64 = rng.gen_range(-0.5..0.5);
            v[i] = a1.hypot(a2) + rng.gen_range(0.2..1.0);
            v[i + 1] = a1;
            v[i + 2] = a2;
        }
    }
    let b = &a * &x0;
    let h = &g * &x0 + &s0;
    let y0 = DVector::from_fn(p, |_, _| rng.gen_range(-1.0..1.0f64));
    // choose c to satisfy stationarity exactly at (x0, y0, z0)
    let c = -(a.transpose() * &y0) - g.transpose() * &z0;
    let obj = c.dot(&x0);
    (
        ConicProgram { c, a, b, g, h, cones: ConeSpec { n_orthant, n_soc3 } },
        obj,
    )
}

#[test]
fn random_socps_reach_certified_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for trial in 0..20 {
        let (prog, _) = random_certified_program(&mut rng, 8, 3, 6, 2);
        let sol = solve(&prog, &settings());
        assert_eq!(sol.status, SolveStatus::Optimal, "trial {trial}");
        assert!(
            sol.primal_residual < 1e-7 && sol.dual_residual < 1e-7 && sol.gap < 1e-7,
            "trial {trial}: residuals {} {} {}",
            sol.primal_residual,
            sol.dual_residual,
            sol.gap
        );
        let rep = residuals(&prog, &sol.x);
        assert!(rep.max_eq_residual < 1e-7, "trial {trial}");
        assert!(rep.max_orthant_violation < 1e-7, "trial {trial}");
        assert!(rep.max_soc_violation < 1e-7, "trial {trial}");
    }
}

#[test]
fn badly_scaled_rows_still_certify() {
    // forces-scale coefficients: multiply constraint rows and columns by 1e3
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..10 {
        let (mut prog, _) = random_certified_program(&mut rng, 8, 3, 6, 2);
        for j in 0..4 {
            for i in 0..prog.a.nrows() {
                prog.a[(i, j)] *= 1e3;
            }
            for i in 0..prog.g.nrows() {
                prog.g[(i, j)] *= 1e3;
            }
            prog.c[j] *= 1e3;
        }
        for i in 0..3 {
            let f = 1e3;
            for j in 0..prog.a.ncols() {
                prog.a[(i, j)] *= f;
            }
            prog.b[i] *= f;
        }
        let sol = solve(&prog, &settings());
        assert_eq!(sol.status, SolveStatus::Optimal, "trial {trial}");
        assert!(
            sol.primal_residual < 1e-7 && sol.dual_residual < 1e-7 && sol.gap < 1e-7,
            "trial {trial}: residuals {} {} {}",
            sol.primal_residual,
            sol.dual_residual,
            sol.gap
        );
    }
}

#[test]
fn singleton_rows_are_presolved_consistently() {
    // fixing a variable by a singleton equality must match the direct solve
    let prog = ConicProgram {
        c: DVector::from_vec(vec![0.0, 1.0]),
        a: DMatrix::from_row_slice(1, 2, &[2.0, 0.0]),
        b: DVector::from_vec(vec![10.0]),
        g: DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, -1.0]),
        h: DVector::from_vec(vec![3.0, -3.0]),
        cones: ConeSpec { n_orthant: 2, n_soc3: 0 },
    };
    let sol = solve(&prog, &settings());
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.x[0] - 5.0).abs() < 1e-9);
    assert!((sol.x[1] - 2.0).abs() < 1e-7);
    // recovered duals must satisfy stationarity on the original data
    assert!(sol.dual_residual < 1e-7, "dual residual {}", sol.dual_residual);

    // contradictory singleton fixes
    let bad = ConicProgram {
        c: DVector::from_vec(vec![0.0, 1.0]),
        a: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 0.0]),
        b: DVector::from_vec(vec![5.0, 12.0]),
        g: DMatrix::from_row_slice(1, 2, &[0.0, -1.0]),
        h: DVector::zeros(1),
        cones: ConeSpec { n_orthant: 1, n_soc3: 0 },
    };
    assert_eq!(solve(&bad, &settings()).status, SolveStatus::Infeasible);
}
