//! Shared slow oracles for the planner tests and the acceptance suite:
//! a dynamic-programming grid search over the same stage data, and a
//! projected-subgradient reference minimizer for the penalized reduced
//! problem.

use nalgebra::{DMatrix, DVector};
use nonplanar::planner::StageParams;

fn continuity_factor(paper_literal: bool) -> f64 {
    if paper_literal {
        0.5
    } else {
        1.0
    }
}

pub struct DpResult {
    pub objective: f64,
    pub v2: Vec<f64>,
}

/// Brute-force dynamic program over a v^2 grid with segment-constant vdot.
/// An independent discretization of the same continuous problem: both it and
/// the multistage cone program are second-order accurate, so on smooth
/// scenarios they agree to well under a percent.
#[allow(dead_code)] // each test target compiles this module independently
pub fn dp_oracle(
    stages: &[StageParams],
    v0: f64,
    paper_literal: bool,
    cells: usize,
    vd_max: f64,
) -> Option<DpResult> {
    dp_oracle_capped(stages, v0, paper_literal, cells, vd_max, 1.25 * v0 * v0 + 50.0)
}

/// Like [`dp_oracle`] but with an explicit v^2 grid ceiling. A tight ceiling
/// sharpens the grid resolution, which directly controls the oracle's
/// one-sided bias at stages where the brake target is clipped by the friction
/// or contact limits.
pub fn dp_oracle_capped(
    stages: &[StageParams],
    v0: f64,
    paper_literal: bool,
    cells: usize,
    vd_max: f64,
    v2_max: f64,
) -> Option<DpResult> {
    let n = stages.len();
    let fac = continuity_factor(paper_literal);
    let step = v2_max / (cells - 1) as f64;
    let scale = stages[0].forces.f_gravity.norm().max(1.0);
    let tol = 1e-9 * scale;

    // per-stage, per-cell constant parts of the seven constraint expressions
    // (F1, F2, mu*F3, four normals) so the inner loop is affine in vdot
    struct StageEval {
        // (constant at cell, vdot coefficient) per expression
        f1: (Vec<f64>, f64),
        f2: (Vec<f64>, f64),
        mf3: (Vec<f64>, f64),
        wn: [(Vec<f64>, f64); 4],
        b: f64,
    }
    let evals: Vec<StageEval> = stages
        .iter()
        .map(|st| {
            let grid = |a: nonplanar::AffineScalar| {
                (
                    (0..cells).map(|c| a.c0 + a.c_v2 * (c as f64 * step)).collect::<Vec<f64>>(),
                    a.c_vd,
                )
            };
            let wn = st.normals.as_array();
            StageEval {
                f1: grid(st.forces.f_t[0]),
                f2: grid(st.forces.f_t[1]),
                mf3: grid(st.forces.f_t[2] * st.mu),
                wn: [grid(wn[0]), grid(wn[1]), grid(wn[2]), grid(wn[3])],
                b: st.b,
            }
        })
        .collect();

    let feasible = |e: &StageEval, c: usize, vd: f64| -> bool {
        let f1 = e.f1.0[c] + e.f1.1 * vd;
        let f2 = e.f2.0[c] + e.f2.1 * vd;
        let mf3 = e.mf3.0[c] + e.mf3.1 * vd;
        if f1.hypot(f2) > mf3 + tol {
            return false;
        }
        e.wn.iter().all(|w| w.0[c] + w.1 * vd >= -tol)
    };
    let cost = |e: &StageEval, c: usize, vd: f64| -> f64 {
        (e.f1.0[c] + e.f1.1 * vd - e.b).abs()
    };

    let c0 = ((v0 * v0 / step).round() as usize).min(cells - 1);
    let inf = f64::INFINITY;
    let mut dist = vec![inf; cells];
    dist[c0] = 0.0;
    let mut prev = vec![vec![u32::MAX; cells]; n];

    for k in 0..n - 1 {
        let dl = stages[k + 1].l - stages[k].l;
        let w_here = if k == 0 { 1.0 } else { 0.5 };
        let w_next = if k + 1 == n - 1 { 1.0 } else { 0.5 };
        // segment-constant vdot maps cell difference to vdot bounds
        let reach = ((2.0 * fac * vd_max * dl) / step).ceil() as isize;
        let mut next = vec![inf; cells];
        for c in 0..cells {
            if dist[c] == inf {
                continue;
            }
            let lo = (c as isize - reach).max(0) as usize;
            let hi = ((c as isize + reach) as usize).min(cells - 1);
            for c2 in lo..=hi {
                let vd = ((c2 as f64 - c as f64) * step) / (2.0 * fac * dl);
                if !feasible(&evals[k], c, vd) || !feasible(&evals[k + 1], c2, vd) {
                    continue;
                }
                let t = dist[c]
                    + w_here * cost(&evals[k], c, vd)
                    + w_next * cost(&evals[k + 1], c2, vd);
                if t < next[c2] {
                    next[c2] = t;
                    prev[k + 1][c2] = c as u32;
                }
            }
        }
        dist = next;
    }

    let (best_cell, best) = dist
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())?;
    if !best.is_finite() {
        return None;
    }
    let mut cells_path = vec![0usize; n];
    cells_path[n - 1] = best_cell;
    for k in (1..n).rev() {
        cells_path[k - 1] = prev[k][cells_path[k]] as usize;
    }
    Some(DpResult {
        objective: *best,
        v2: cells_path.iter().map(|&c| c as f64 * step).collect(),
    })
}

/// Projected-subgradient reference for the reduced problem: eliminate the
/// continuity equalities (v^2 is affine in the vdot vector), penalize the
/// cone/contact constraints exactly, and minimize with an adaptive-level
/// Polyak step. Slow but entirely independent of the interior-point path.
/// Returns the best objective found, in newtons.
pub fn subgradient_reference(
    stages: &[StageParams],
    v0: f64,
    paper_literal: bool,
    max_iters: usize,
) -> f64 {
    let n = stages.len();
    let fac = continuity_factor(paper_literal);
    let scale = stages[0].forces.f_gravity.norm().max(1.0);
    let rho = 30.0;
    // v^2 = v0^2 + M w with w the stage vdot vector
    let mut m = DMatrix::zeros(n, n);
    for k in 0..n {
        for j in 0..n {
            let mut c = 0.0;
            if j < k {
                c += stages[j + 1].l - stages[j].l;
            }
            if j >= 1 && j <= k {
                c += stages[j].l - stages[j - 1].l;
            }
            m[(k, j)] = fac * c;
        }
    }
    let mt = m.transpose();

    let eval = |w: &DVector<f64>| -> (f64, DVector<f64>) {
        let v2 = DVector::from_element(n, v0 * v0) + &m * w;
        let mut f = 0.0;
        // accumulated df/dv2_k and df/dw_k
        let mut gv = DVector::zeros(n);
        let mut gw = DVector::zeros(n);
        for (k, st) in stages.iter().enumerate() {
            let at = |a: nonplanar::AffineScalar| a.c0 + a.c_v2 * v2[k] + a.c_vd * w[k];
            let add = |a: nonplanar::AffineScalar, alpha: f64, gv: &mut DVector<f64>, gw: &mut DVector<f64>| {
                gv[k] += alpha * a.c_v2;
                gw[k] += alpha * a.c_vd;
            };
            let f1a = st.forces.f_t[0];
            let f2a = st.forces.f_t[1];
            let mf3a = st.forces.f_t[2] * st.mu;
            let r = at(f1a) - st.b;
            f += r.abs() / scale;
            add(f1a, r.signum() / scale, &mut gv, &mut gw);
            let (f1, f2, mf3) = (at(f1a), at(f2a), at(mf3a));
            let norm = f1.hypot(f2).max(1e-12);
            if norm - mf3 > 0.0 {
                f += rho * (norm - mf3) / scale;
                add(f1a, rho * f1 / norm / scale, &mut gv, &mut gw);
                add(f2a, rho * f2 / norm / scale, &mut gv, &mut gw);
                add(mf3a, -rho / scale, &mut gv, &mut gw);
            }
            for wn in st.normals.as_array() {
                let v = at(wn);
                if v < 0.0 {
                    f += rho * (-v) / scale;
                    add(wn, -rho / scale, &mut gv, &mut gw);
                }
            }
            if v2[k] < 0.0 {
                // v^2 in m^2/s^2; weight comparable to the force terms
                f += rho * (-v2[k]);
                gv[k] -= rho;
            }
        }
        (f, &mt * gv + gw)
    };

    let mut w = DVector::zeros(n);
    let (mut f_best, _) = eval(&w);
    let mut delta = 0.2 * f_best.max(1.0);
    let mut f_rec = f_best;
    let mut path = 0.0;
    let path_budget = 60.0;
    for _ in 0..max_iters {
        let (f, g) = eval(&w);
        if f < f_best {
            f_best = f;
        }
        let gg = g.dot(&g);
        if gg < 1e-30 {
            break;
        }
        let level = f_rec - delta;
        if f_best <= level {
            // level reached: tighten around the new record
            f_rec = f_best;
            path = 0.0;
        }
        let alpha = ((f - (f_rec - delta)) / gg).max(0.0);
        if alpha == 0.0 {
            f_rec = f_best;
            delta *= 0.5;
            continue;
        }
        w -= alpha * &g;
        path += alpha * gg.sqrt();
        if path > path_budget {
            delta *= 0.5;
            f_rec = f_best;
            path = 0.0;
        }
        if delta < 1e-9 * f_best.max(1.0) {
            break;
        }
    }
    f_best * scale
}
