//! Dense primal-dual interior-point solver for the program class the speed
//! planner emits: linear objective, linear equalities, nonnegative-orthant
//! rows and 3-dimensional second-order cones.
//!
//! Standard form:
//!
//!   minimize    c'x
//!   subject to  A x = b
//!               G x + s = h,   s in K
//!
//! with K = R+^ml x (SOC3)^ns. The algorithm is a Mehrotra-style
//! predictor-corrector on the homogeneous self-dual embedding with
//! Nesterov-Todd scaling, which yields clean infeasibility certificates for
//! driver-too-fast cases. Dense KKT factorization via the reduced
//! quasi-definite system; problem data is Ruiz-equilibrated up front.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConeSpec {
    /// Leading orthant rows of G.
    pub n_orthant: usize,
    /// Number of trailing 3-row SOC blocks, each ordered (radius, x, y).
    pub n_soc3: usize,
}

impl ConeSpec {
    pub fn total_rows(&self) -> usize {
        self.n_orthant + 3 * self.n_soc3
    }

    /// Cone degree: orthant rows count 1 each, each SOC counts 1.
    fn degree(&self) -> usize {
        self.n_orthant + self.n_soc3
    }
}

#[derive(Debug, Clone)]
pub struct ConicProgram {
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub cones: ConeSpec,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ProgramError {
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("non-finite problem data")]
    NonFinite,
}

impl ConicProgram {
    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self) -> Result<(), ProgramError> {
        let n = self.c.len();
        if self.a.ncols() != n || self.g.ncols() != n {
            return Err(ProgramError::Dimensions(format!(
                "A has {} cols, G has {} cols, expected {}",
                self.a.ncols(),
                self.g.ncols(),
                n
            )));
        }
        if self.a.nrows() != self.b.len() || self.g.nrows() != self.h.len() {
            return Err(ProgramError::Dimensions("rhs length".into()));
        }
        if self.cones.total_rows() != self.g.nrows() {
            return Err(ProgramError::Dimensions(format!(
                "cone rows {} != G rows {}",
                self.cones.total_rows(),
                self.g.nrows()
            )));
        }
        let finite = self.c.iter().all(|v| v.is_finite())
            && self.a.iter().all(|v| v.is_finite())
            && self.b.iter().all(|v| v.is_finite())
            && self.g.iter().all(|v| v.is_finite())
            && self.h.iter().all(|v| v.is_finite());
        if !finite {
            return Err(ProgramError::NonFinite);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    pub s: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Certified by direct substitution into the original data.
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { max_iter: 100, tol: 1e-8 }
    }
}

/// Feasibility report for an arbitrary primal point, by direct arithmetic.
#[derive(Debug, Clone, Copy)]
pub struct ResidualReport {
    pub max_eq_residual: f64,
    pub max_orthant_violation: f64,
    pub max_soc_violation: f64,
    pub objective: f64,
}

pub fn residuals(prog: &ConicProgram, x: &DVector<f64>) -> ResidualReport {
    let eq = &prog.a * x - &prog.b;
    let s = &prog.h - &prog.g * x;
    let mut orth = 0.0f64;
    for i in 0..prog.cones.n_orthant {
        orth = orth.max(-s[i]);
    }
    let mut soc = 0.0f64;
    for k in 0..prog.cones.n_soc3 {
        let i = prog.cones.n_orthant + 3 * k;
        soc = soc.max((s[i + 1].powi(2) + s[i + 2].powi(2)).sqrt() - s[i]);
    }
    ResidualReport {
        max_eq_residual: eq.amax(),
        max_orthant_violation: orth,
        max_soc_violation: soc,
        objective: prog.c.dot(x),
    }
}

/// Duality gap c'x + b'y + h'z computed externally.
pub fn duality_gap(
    prog: &ConicProgram,
    x: &DVector<f64>,
    y: &DVector<f64>,
    z: &DVector<f64>,
) -> f64 {
    prog.c.dot(x) + prog.b.dot(y) + prog.h.dot(z)
}

// ---------------------------------------------------------------------------
// cone algebra
// ---------------------------------------------------------------------------

fn cone_identity(cones: &ConeSpec) -> DVector<f64> {
    let mut e = DVector::zeros(cones.total_rows());
    for i in 0..cones.n_orthant {
        e[i] = 1.0;
    }
    for k in 0..cones.n_soc3 {
        e[cones.n_orthant + 3 * k] = 1.0;
    }
    e
}

fn soc_at(v: &DVector<f64>, i: usize) -> Vector3<f64> {
    Vector3::new(v[i], v[i + 1], v[i + 2])
}

fn set_soc(v: &mut DVector<f64>, i: usize, w: Vector3<f64>) {
    v[i] = w.x;
    v[i + 1] = w.y;
    v[i + 2] = w.z;
}

/// Max step t such that u + t*du stays in the cone (capped).
fn max_step(cones: &ConeSpec, u: &DVector<f64>, du: &DVector<f64>, cap: f64) -> f64 {
    let mut t = cap;
    for i in 0..cones.n_orthant {
        if du[i] < 0.0 {
            t = t.min(-u[i] / du[i]);
        }
    }
    for k in 0..cones.n_soc3 {
        let i = cones.n_orthant + 3 * k;
        let (u0, u1) = (u[i], nalgebra::Vector2::new(u[i + 1], u[i + 2]));
        let (d0, d1) = (du[i], nalgebra::Vector2::new(du[i + 1], du[i + 2]));
        // roots of (u0 + t d0)^2 - |u1 + t d1|^2 = 0
        let a = d0 * d0 - d1.dot(&d1);
        let b = 2.0 * (u0 * d0 - u1.dot(&d1));
        let c = u0 * u0 - u1.dot(&u1);
        let mut boundary = cap;
        if a.abs() < 1e-300 {
            if b < 0.0 {
                boundary = -c / b;
            }
        } else {
            let disc = b * b - 4.0 * a * c;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                for r in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                    if r > 0.0 && u0 + r * d0 >= 0.0 {
                        boundary = boundary.min(r);
                    }
                }
            }
        }
        // also the plain u0 + t d0 >= 0 edge
        if d0 < 0.0 {
            boundary = boundary.min(-u0 / d0);
        }
        t = t.min(boundary);
    }
    t
}

/// Nesterov-Todd scaling state. For the orthant a diagonal; for each SOC
/// block the symmetric 3x3 W and its inverse.
struct Scaling {
    orth_w: Vec<f64>,
    soc_w: Vec<Matrix3<f64>>,
    soc_w_inv: Vec<Matrix3<f64>>,
    /// lambda = W z = W^-1 s
    lambda: DVector<f64>,
}

fn nt_scaling(cones: &ConeSpec, s: &DVector<f64>, z: &DVector<f64>) -> Option<Scaling> {
    let mut orth_w = Vec::with_capacity(cones.n_orthant);
    let mut lambda = DVector::zeros(cones.total_rows());
    for i in 0..cones.n_orthant {
        if s[i] <= 0.0 || z[i] <= 0.0 {
            return None;
        }
        orth_w.push((s[i] / z[i]).sqrt());
        lambda[i] = (s[i] * z[i]).sqrt();
    }
    let mut soc_w = Vec::with_capacity(cones.n_soc3);
    let mut soc_w_inv = Vec::with_capacity(cones.n_soc3);
    for k in 0..cones.n_soc3 {
        let i = cones.n_orthant + 3 * k;
        let sv = soc_at(s, i);
        let zv = soc_at(z, i);
        let rs = sv.x * sv.x - sv.y * sv.y - sv.z * sv.z;
        let rz = zv.x * zv.x - zv.y * zv.y - zv.z * zv.z;
        if rs <= 0.0 || rz <= 0.0 || sv.x <= 0.0 || zv.x <= 0.0 {
            return None;
        }
        let (rs, rz) = (rs.sqrt(), rz.sqrt());
        let sb = sv / rs;
        let zb = zv / rz;
        let gamma = (0.5 * (1.0 + sb.dot(&zb))).sqrt();
        // wb is unit-hyperbolic: wb0^2 - |wb1|^2 = 1
        let wb = (sb + Vector3::new(zb.x, -zb.y, -zb.z)) / (2.0 * gamma);
        let eta = (rs / rz).sqrt();
        let d = 1.0 + wb.x;
        let w = eta
            * Matrix3::new(
                wb.x,
                wb.y,
                wb.z,
                wb.y,
                1.0 + wb.y * wb.y / d,
                wb.y * wb.z / d,
                wb.z,
                wb.y * wb.z / d,
                1.0 + wb.z * wb.z / d,
            );
        let w_inv = (1.0 / eta)
            * Matrix3::new(
                wb.x,
                -wb.y,
                -wb.z,
                -wb.y,
                1.0 + wb.y * wb.y / d,
                wb.y * wb.z / d,
                -wb.z,
                wb.y * wb.z / d,
                1.0 + wb.z * wb.z / d,
            );
        set_soc(&mut lambda, i, w_inv * sv);
        soc_w.push(w);
        soc_w_inv.push(w_inv);
    }
    Some(Scaling { orth_w, soc_w, soc_w_inv, lambda })
}

impl Scaling {
    fn apply_w(&self, cones: &ConeSpec, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for i in 0..cones.n_orthant {
            out[i] = self.orth_w[i] * v[i];
        }
        for k in 0..cones.n_soc3 {
            let i = cones.n_orthant + 3 * k;
            set_soc(&mut out, i, self.soc_w[k] * soc_at(v, i));
        }
        out
    }

    fn apply_w_inv(&self, cones: &ConeSpec, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for i in 0..cones.n_orthant {
            out[i] = v[i] / self.orth_w[i];
        }
        for k in 0..cones.n_soc3 {
            let i = cones.n_orthant + 3 * k;
            set_soc(&mut out, i, self.soc_w_inv[k] * soc_at(v, i));
        }
        out
    }
}

/// Jordan product per cone block.
fn jordan_mul(cones: &ConeSpec, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(u.len());
    for i in 0..cones.n_orthant {
        out[i] = u[i] * v[i];
    }
    for k in 0..cones.n_soc3 {
        let i = cones.n_orthant + 3 * k;
        let (a, b) = (soc_at(u, i), soc_at(v, i));
        set_soc(
            &mut out,
            i,
            Vector3::new(a.dot(&b), a.x * b.y + b.x * a.y, a.x * b.z + b.x * a.z),
        );
    }
    out
}

/// Solve lambda o x = d blockwise.
fn jordan_div(cones: &ConeSpec, lambda: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(d.len());
    for i in 0..cones.n_orthant {
        out[i] = d[i] / lambda[i];
    }
    for k in 0..cones.n_soc3 {
        let i = cones.n_orthant + 3 * k;
        let l = soc_at(lambda, i);
        let arrow = Matrix3::new(l.x, l.y, l.z, l.y, l.x, 0.0, l.z, 0.0, l.x);
        let sol = arrow
            .lu()
            .solve(&soc_at(d, i))
            .unwrap_or_else(|| Vector3::zeros());
        set_soc(&mut out, i, sol);
    }
    out
}

// ---------------------------------------------------------------------------
// equilibration and presolve
// ---------------------------------------------------------------------------

struct Equilibration {
    col: DVector<f64>,
    row_a: DVector<f64>,
    row_g: DVector<f64>,
}

/// Ruiz equilibration of the stacked [A; G] matrix. SOC row blocks share a
/// single scaling so cone membership is preserved.
fn equilibrate(prog: &ConicProgram) -> (ConicProgram, Equilibration) {
    let n = prog.num_vars();
    let p = prog.a.nrows();
    let m = prog.g.nrows();
    let mut a = prog.a.clone();
    let mut g = prog.g.clone();
    let mut col = DVector::from_element(n, 1.0);
    let mut row_a = DVector::from_element(p, 1.0);
    let mut row_g = DVector::from_element(m, 1.0);

    for _ in 0..5 {
        for j in 0..n {
            let mut mx = 0.0f64;
            for i in 0..p {
                mx = mx.max(a[(i, j)].abs());
            }
            for i in 0..m {
                mx = mx.max(g[(i, j)].abs());
            }
            if mx > 0.0 {
                let d = 1.0 / mx.sqrt();
                col[j] *= d;
                for i in 0..p {
                    a[(i, j)] *= d;
                }
                for i in 0..m {
                    g[(i, j)] *= d;
                }
            }
        }
        for i in 0..p {
            let mx = a.row(i).amax();
            if mx > 0.0 {
                let d = 1.0 / mx.sqrt();
                row_a[i] *= d;
                for j in 0..n {
                    a[(i, j)] *= d;
                }
            }
        }
        for i in 0..prog.cones.n_orthant {
            let mx = g.row(i).amax();
            if mx > 0.0 {
                let d = 1.0 / mx.sqrt();
                row_g[i] *= d;
                for j in 0..n {
                    g[(i, j)] *= d;
                }
            }
        }
        for k in 0..prog.cones.n_soc3 {
            let i0 = prog.cones.n_orthant + 3 * k;
            let mut mx = 0.0f64;
            for i in i0..i0 + 3 {
                mx = mx.max(g.row(i).amax());
            }
            if mx > 0.0 {
                let d = 1.0 / mx.sqrt();
                for i in i0..i0 + 3 {
                    row_g[i] *= d;
                    for j in 0..n {
                        g[(i, j)] *= d;
                    }
                }
            }
        }
    }

    let c = DVector::from_fn(n, |j, _| prog.c[j] * col[j]);
    let b = DVector::from_fn(p, |i, _| prog.b[i] * row_a[i]);
    let h = DVector::from_fn(m, |i, _| prog.h[i] * row_g[i]);
    (
        ConicProgram { c, a, b, g, h, cones: prog.cones },
        Equilibration { col, row_a, row_g },
    )
}

// ---------------------------------------------------------------------------
// the interior-point iteration
// ---------------------------------------------------------------------------

struct KktSolver {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    reduced: DMatrix<f64>,
    /// Largest magnitude in `reduced`, for the residual noise-floor estimate.
    max_entry: f64,
    n: usize,
    p: usize,
}

const KKT_REG: f64 = 1e-10;

/// Residual rhs - M*sol with FMA product-error capture and Neumaier
/// summation. The plain f64 residual carries O(eps * max|M| * |sol|) noise,
/// which caps what iterative refinement can recover once the scaled KKT
/// entries grow late in the interior-point run.
fn compensated_residual(
    m: &DMatrix<f64>,
    sol: &DVector<f64>,
    rhs: &DVector<f64>,
) -> DVector<f64> {
    let n = m.nrows();
    let mut out = DVector::zeros(n);
    for i in 0..n {
        let mut sum = rhs[i];
        let mut comp = 0.0f64;
        for j in 0..m.ncols() {
            let a = -m[(i, j)];
            let p = a * sol[j];
            let perr = a.mul_add(sol[j], -p);
            let t = sum + p;
            comp += if sum.abs() >= p.abs() { (sum - t) + p } else { (p - t) + sum };
            sum = t;
            comp += perr;
        }
        out[i] = sum + comp;
    }
    out
}

impl KktSolver {
    /// Factor the reduced quasi-definite system
    ///   [ G'W^-2 G + dI   A' ]
    ///   [ A              -dI ]
    fn factor(prog: &ConicProgram, scaling: &Scaling) -> Option<Self> {
        let n = prog.num_vars();
        let p = prog.a.nrows();
        let m = prog.g.nrows();
        // W^-1 G, then H = (W^-1 G)' (W^-1 G)
        let mut wg = DMatrix::zeros(m, n);
        for j in 0..n {
            let col = prog.g.column(j).into_owned();
            let scaled = scaling.apply_w_inv(&prog.cones, &col);
            wg.set_column(j, &scaled);
        }
        let h = wg.tr_mul(&wg);
        let mut kkt = DMatrix::zeros(n + p, n + p);
        kkt.view_mut((0, 0), (n, n)).copy_from(&h);
        kkt.view_mut((0, n), (n, p)).copy_from(&prog.a.transpose());
        kkt.view_mut((n, 0), (p, n)).copy_from(&prog.a);
        let mut reduced = kkt.clone();
        for i in 0..n {
            kkt[(i, i)] += KKT_REG;
        }
        for i in n..n + p {
            kkt[(i, i)] -= KKT_REG;
        }
        for i in n..n + p {
            reduced[(i, i)] = 0.0;
        }
        let lu = kkt.lu();
        if lu.determinant() == 0.0 {
            return None;
        }
        let max_entry = reduced.amax();
        Some(KktSolver { lu, reduced, max_entry, n, p })
    }

    /// Solve the full 3x3 block system given rhs (r1, r2, r3); returns
    /// (dx, dy, dz). One pass through the reduced system, then refinement
    /// against the unreduced equations to undo the W^-2 elimination error.
    fn solve(
        &self,
        prog: &ConicProgram,
        scaling: &Scaling,
        r1: &DVector<f64>,
        r2: &DVector<f64>,
        r3: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let (mut dx, mut dy, mut dz) = self.solve_once(prog, scaling, r1, r2, r3);
        // Refinement diverges once the scaled system's conditioning exceeds
        // 1/KKT_REG late in the interior-point run, so every correction is
        // accepted only if it actually shrinks the full residual.
        let full_res = |dx: &DVector<f64>, dy: &DVector<f64>, dz: &DVector<f64>| {
            let e1 = r1 - (prog.a.tr_mul(dy) + prog.g.tr_mul(dz));
            let e2 = r2 - &prog.a * dx;
            let w2dz = scaling.apply_w(&prog.cones, &scaling.apply_w(&prog.cones, dz));
            let e3 = r3 - (&prog.g * dx - w2dz);
            let norm = e1.amax().max(e2.amax()).max(e3.amax());
            (e1, e2, e3, norm)
        };
        let (mut e1, mut e2, mut e3, mut err) = full_res(&dx, &dy, &dz);
        let good_enough =
            1e-13 * r1.amax().max(r2.amax()).max(r3.amax()).max(1.0);
        for _ in 0..4 {
            if err <= good_enough {
                break;
            }
            let (cx, cy, cz) = self.solve_once(prog, scaling, &e1, &e2, &e3);
            let tx = &dx + cx;
            let ty = &dy + cy;
            let tz = &dz + cz;
            let (t1, t2, t3, terr) = full_res(&tx, &ty, &tz);
            if !(terr < err) {
                break;
            }
            dx = tx;
            dy = ty;
            dz = tz;
            e1 = t1;
            e2 = t2;
            e3 = t3;
            err = terr;
        }
        (dx, dy, dz)
    }

    fn solve_once(
        &self,
        prog: &ConicProgram,
        scaling: &Scaling,
        r1: &DVector<f64>,
        r2: &DVector<f64>,
        r3: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        // eliminate dz = W^-2 (G dx - r3)
        let w_inv_r3 = scaling.apply_w_inv(&prog.cones, r3);
        let gt_w2_r3 = prog.g.tr_mul(&scaling.apply_w_inv(&prog.cones, &w_inv_r3));
        let mut rhs = DVector::zeros(self.n + self.p);
        for i in 0..self.n {
            rhs[i] = r1[i] + gt_w2_r3[i];
        }
        for i in 0..self.p {
            rhs[self.n + i] = r2[i];
        }
        let mut sol = self.lu.solve(&rhs).unwrap_or_else(|| rhs.clone_owned());
        // iterative refinement against the unregularized reduced system,
        // keeping a correction only while it shrinks the residual; the
        // compensated residual is only worth its cost once the plain one
        // sinks toward its own rounding floor eps * max|M| * |sol|
        let residual = |sol: &DVector<f64>| -> DVector<f64> {
            let plain = &rhs - &self.reduced * sol;
            if plain.amax() < 1e-12 * self.max_entry * sol.amax() {
                compensated_residual(&self.reduced, sol, &rhs)
            } else {
                plain
            }
        };
        let mut res = residual(&sol);
        let mut err = res.amax();
        let good_enough = 1e-13 * rhs.amax().max(1.0);
        for _ in 0..3 {
            if err <= good_enough {
                break;
            }
            let Some(corr) = self.lu.solve(&res) else { break };
            let trial = &sol + corr;
            let tres = residual(&trial);
            let terr = tres.amax();
            if !(terr < err) {
                break;
            }
            sol = trial;
            res = tres;
            err = terr;
        }
        let dx = sol.rows(0, self.n).into_owned();
        let dy = sol.rows(self.n, self.p).into_owned();
        let gdx = &prog.g * &dx - r3;
        let dz = scaling.apply_w_inv(&prog.cones, &scaling.apply_w_inv(&prog.cones, &gdx));
        (dx, dy, dz)
    }
}

pub fn solve(program: &ConicProgram, settings: &SolverSettings) -> ConicSolution {
    if let Err(_) = program.validate() {
        return failure_solution(program, SolveStatus::NumericalFailure);
    }
    let (reduced, fixed, presolve_ok) = presolve_fixed_vars(program);
    if !presolve_ok {
        let mut sol = failure_solution(program, SolveStatus::Infeasible);
        sol.iterations = 0;
        return sol;
    }
    let inner = solve_equilibrated(&reduced, settings);
    restore_presolved(program, &reduced, inner, &fixed)
}

fn failure_solution(program: &ConicProgram, status: SolveStatus) -> ConicSolution {
    ConicSolution {
        status,
        x: DVector::zeros(program.num_vars()),
        y: DVector::zeros(program.a.nrows()),
        z: DVector::zeros(program.g.nrows()),
        s: DVector::zeros(program.g.nrows()),
        objective: f64::NAN,
        iterations: 0,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
        gap: f64::INFINITY,
    }
}

fn solve_equilibrated(program: &ConicProgram, settings: &SolverSettings) -> ConicSolution {
    let (scaled, eq) = equilibrate(program);
    ipm(&scaled, program, &eq, settings)
}

struct Candidate {
    x: DVector<f64>,
    y: DVector<f64>,
    z: DVector<f64>,
    s: DVector<f64>,
}

/// Min-norm least-squares cleanup of a near-optimal candidate against the
/// original problem data. Equilibration keeps the interior-point iteration
/// healthy but its residuals live in scaled coordinates; a candidate that
/// looks converged there can still carry visible residuals on the raw data.
/// The polish zeroes the equality and stationarity residuals exactly (up to
/// the cone clamp) without moving the candidate more than the residual norm.
struct Polisher {
    /// Cholesky of A A' for the min-norm primal equality correction.
    eq_norm: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    /// Cholesky of A'A + G'G for the min-norm dual stationarity correction.
    dual_norm: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

impl Polisher {
    fn build(prog: &ConicProgram) -> Polisher {
        let at = prog.a.transpose();
        let gt = prog.g.transpose();
        let eq_norm = if prog.a.nrows() > 0 {
            (&prog.a * &at).cholesky()
        } else {
            None
        };
        let dual_norm = (&at * &prog.a + &gt * &prog.g).cholesky();
        Polisher { eq_norm, dual_norm }
    }

    fn polish(&self, prog: &ConicProgram, cand: &Candidate) -> Candidate {
        let mut x = cand.x.clone();
        let mut y = cand.y.clone();
        let mut z = cand.z.clone();
        if let Some(ch) = &self.eq_norm {
            // min ||dx|| with A(x + dx) = b
            let r = &prog.b - &prog.a * &x;
            x += prog.a.tr_mul(&ch.solve(&r));
        }
        // slack taken directly from the polished x, then clamped to the cone
        let mut s = &prog.h - &prog.g * &x;
        clamp_to_cone(&prog.cones, &mut s);
        if let Some(ch) = &self.dual_norm {
            // min ||(dy, dz)|| with A'dy + G'dz = -(A'y + G'z + c), iterated
            // because the cone clamp and the squared conditioning of the
            // normal equations both leave a small remainder
            for _ in 0..4 {
                let r = -(prog.a.tr_mul(&y) + prog.g.tr_mul(&z) + &prog.c);
                let u = ch.solve(&r);
                y += &prog.a * &u;
                z += &prog.g * &u;
                clamp_to_cone(&prog.cones, &mut z);
            }
        }
        Candidate { x, y, z, s }
    }
}

/// Clamp a vector onto its cone: orthant rows to zero from below, SOC blocks
/// by the exact Euclidean projection.
fn clamp_to_cone(cones: &ConeSpec, u: &mut DVector<f64>) {
    for i in 0..cones.n_orthant {
        if u[i] < 0.0 {
            u[i] = 0.0;
        }
    }
    for k in 0..cones.n_soc3 {
        let i = cones.n_orthant + 3 * k;
        let r = u[i];
        let norm = (u[i + 1].powi(2) + u[i + 2].powi(2)).sqrt();
        if norm <= r {
            continue;
        }
        if norm <= -r {
            u[i] = 0.0;
            u[i + 1] = 0.0;
            u[i + 2] = 0.0;
        } else {
            let t = 0.5 * (1.0 + r / norm);
            u[i] = t * norm;
            u[i + 1] *= t;
            u[i + 2] *= t;
        }
    }
}

fn certified_residuals(prog: &ConicProgram, cand: &Candidate) -> (f64, f64, f64) {
    let bh_scale = prog.b.amax().max(prog.h.amax()).max(1.0);
    let c_scale = prog.c.amax().max(1.0);
    let eq = (&prog.a * &cand.x - &prog.b).amax();
    let ineq = (&prog.g * &cand.x + &cand.s - &prog.h).amax();
    let pres = eq.max(ineq) / bh_scale;
    let dres = (prog.a.tr_mul(&cand.y) + prog.g.tr_mul(&cand.z) + &prog.c).amax() / c_scale;
    let pcost = prog.c.dot(&cand.x);
    let dcost = -(prog.b.dot(&cand.y) + prog.h.dot(&cand.z));
    let gap = (pcost - dcost).abs() / pcost.abs().max(dcost.abs()).max(1.0);
    (pres, dres, gap)
}

/// Identity-scaling NT state, used by the least-squares initialization.
fn identity_scaling(cones: &ConeSpec) -> Scaling {
    Scaling {
        orth_w: vec![1.0; cones.n_orthant],
        soc_w: vec![Matrix3::identity(); cones.n_soc3],
        soc_w_inv: vec![Matrix3::identity(); cones.n_soc3],
        lambda: cone_identity(cones),
    }
}

/// Shift a point into the cone interior if it is not already comfortably
/// inside: u + (1 + margin) e, blockwise margin.
fn push_interior(cones: &ConeSpec, u: &mut DVector<f64>) {
    let mut alpha = -1.0f64;
    for i in 0..cones.n_orthant {
        alpha = alpha.max(-u[i]);
    }
    for k in 0..cones.n_soc3 {
        let i = cones.n_orthant + 3 * k;
        alpha = alpha.max((u[i + 1].powi(2) + u[i + 2].powi(2)).sqrt() - u[i]);
    }
    if alpha >= -1e-3 {
        let e = cone_identity(cones);
        *u += (1.0 + alpha) * e;
    }
}

/// Minimum normalized block complementarity of (s, z): per orthant row the
/// product s_i z_i, per SOC block the geometric mean of the two cone
/// determinants (which equals the product of the paired eigenvalues at a
/// centered point). All are mu for a perfectly centered iterate.
fn min_block_complementarity(
    cones: &ConeSpec,
    s: &DVector<f64>,
    z: &DVector<f64>,
    tau: f64,
    kappa: f64,
) -> f64 {
    let mut lo = tau * kappa;
    for i in 0..cones.n_orthant {
        lo = lo.min(s[i] * z[i]);
    }
    for k in 0..cones.n_soc3 {
        let i = cones.n_orthant + 3 * k;
        let ds = s[i] * s[i] - s[i + 1] * s[i + 1] - s[i + 2] * s[i + 2];
        let dz = z[i] * z[i] - z[i + 1] * z[i + 1] - z[i + 2] * z[i + 2];
        lo = lo.min(if ds > 0.0 && dz > 0.0 { 0.5 * (ds * dz).sqrt() } else { 0.0 });
    }
    lo
}

/// Least-squares starting point from two identity-scaled KKT solves.
fn init_point(
    prog: &ConicProgram,
) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> {
    let ident = identity_scaling(&prog.cones);
    let kkt = KktSolver::factor(prog, &ident)?;
    let zeros_n = DVector::zeros(prog.num_vars());
    let (x, _, zhat) = kkt.solve(prog, &ident, &zeros_n, &prog.b, &prog.h);
    let mut s = -zhat;
    push_interior(&prog.cones, &mut s);
    let (_, y, mut z) = kkt.solve(
        prog,
        &ident,
        &(-&prog.c),
        &DVector::zeros(prog.a.nrows()),
        &DVector::zeros(prog.g.nrows()),
    );
    push_interior(&prog.cones, &mut z);
    Some((x, y, s, z))
}

fn ipm(
    prog: &ConicProgram,
    orig: &ConicProgram,
    eq_scale: &Equilibration,
    settings: &SolverSettings,
) -> ConicSolution {
    let n = prog.num_vars();
    let p = prog.a.nrows();
    let cones = &prog.cones;
    let nu = (cones.degree() + 1) as f64;

    let e = cone_identity(cones);
    let (mut x, mut y, mut s, mut z) = match init_point(prog) {
        Some(init) => init,
        None => (DVector::zeros(n), DVector::zeros(p), e.clone(), e.clone()),
    };
    let mut tau = 1.0f64;
    let mut kappa = 1.0f64;

    // map an iterate back to the original (un-equilibrated) coordinates
    let unscale = |x: &DVector<f64>,
                   y: &DVector<f64>,
                   z: &DVector<f64>,
                   s: &DVector<f64>,
                   scale: f64|
     -> Candidate {
        Candidate {
            x: DVector::from_fn(x.len(), |j, _| x[j] * eq_scale.col[j] / scale),
            y: DVector::from_fn(y.len(), |i, _| y[i] * eq_scale.row_a[i] / scale),
            z: DVector::from_fn(z.len(), |i, _| z[i] * eq_scale.row_g[i] / scale),
            s: DVector::from_fn(s.len(), |i, _| s[i] / eq_scale.row_g[i] / scale),
        }
    };

    let mut status = SolveStatus::MaxIter;
    let mut iterations = settings.max_iter;
    let polisher = Polisher::build(orig);
    // best iterate seen, by the worst of the certified residuals; rescued if
    // the iteration later stalls at the floating-point floor
    let mut best_metric = f64::INFINITY;
    let mut best: Option<(Candidate, (f64, f64, f64))> = None;

    for iter in 0..settings.max_iter {
        // homogeneous residuals
        let rx = -prog.a.tr_mul(&y) - prog.g.tr_mul(&z) - &prog.c * tau;
        let ry = &prog.a * &x - &prog.b * tau;
        let rz = &s + &prog.g * &x - &prog.h * tau;
        let rtau = kappa + prog.c.dot(&x) + prog.b.dot(&y) + prog.h.dot(&z);
        let mu = (s.dot(&z) + tau * kappa) / nu;
        let trace = std::env::var_os("CONIC_TRACE").is_some();

        // convergence on tau-normalized quantities
        let bh_scale = prog.b.amax().max(prog.h.amax()).max(1.0);
        let c_scale = prog.c.amax().max(1.0);
        let pres = ry.amax().max(rz.amax()) / tau / bh_scale;
        let dres = rx.amax() / tau / c_scale;
        let pcost = prog.c.dot(&x) / tau;
        let dcost = -(prog.b.dot(&y) + prog.h.dot(&z)) / tau;
        let relgap = (pcost - dcost).abs() / pcost.abs().max(dcost.abs()).max(1.0);
        // convergence is judged on residuals certified against the original
        // data, so equilibration and the homogeneous scaling cannot mask a
        // poorly converged iterate
        let raw = unscale(&x, &y, &z, &s, tau);
        // polishing pays off only near the optimum; keep whichever of the raw
        // and polished candidates certifies better
        let (cand, (cpres, cdres, cgap)) = {
            let worst = |r: (f64, f64, f64)| r.0.max(r.1).max(r.2);
            let raw_res = certified_residuals(orig, &raw);
            // polishing only pays off near the optimum
            if worst(raw_res) < 1e-4 {
                let pol = polisher.polish(orig, &raw);
                let pol_res = certified_residuals(orig, &pol);
                if worst(pol_res) < worst(raw_res) {
                    (pol, pol_res)
                } else {
                    (raw, raw_res)
                }
            } else {
                (raw, raw_res)
            }
        };
        if trace {
            eprintln!(
                "it {iter:2} mu {mu:9.2e} pres {pres:9.2e} dres {dres:9.2e} gap {relgap:9.2e} cert {cpres:9.2e} {cdres:9.2e} {cgap:9.2e} tau {tau:9.2e} kappa {kappa:9.2e}"
            );
        }
        let metric = cpres.max(cdres).max(cgap);
        if metric.is_finite() && metric < best_metric {
            best_metric = metric;
            best = Some((cand, (cpres, cdres, cgap)));
        }
        if metric < settings.tol {
            status = SolveStatus::Optimal;
            iterations = iter;
            break;
        }

        // infeasibility certificates
        let by_hz = prog.b.dot(&y) + prog.h.dot(&z);
        if by_hz < -1e-10 {
            let cert = (prog.a.tr_mul(&y) + prog.g.tr_mul(&z)).amax() / (-by_hz);
            if cert < settings.tol * 0.1 / bh_scale.max(1.0) && tau < 1e-6 * kappa.max(1.0) {
                status = SolveStatus::Infeasible;
                iterations = iter;
                break;
            }
        }
        let cx = prog.c.dot(&x);
        if cx < -1e-10 {
            let cert = (&prog.a * &x).amax().max((&prog.g * &x + &s).amax()) / (-cx);
            if cert < settings.tol * 0.1 && tau < 1e-6 * kappa.max(1.0) {
                status = SolveStatus::Unbounded;
                iterations = iter;
                break;
            }
        }

        let scaling = match nt_scaling(cones, &s, &z) {
            Some(sc) => sc,
            None => {
                status = SolveStatus::NumericalFailure;
                iterations = iter;
                break;
            }
        };
        let kkt = match KktSolver::factor(prog, &scaling) {
            Some(k) => k,
            None => {
                status = SolveStatus::NumericalFailure;
                iterations = iter;
                break;
            }
        };
        // static column (multiplies d_tau)
        let (u1x, u1y, u1z) = kkt.solve(prog, &scaling, &(-&prog.c), &prog.b, &prog.h);
        let u1_dot = prog.c.dot(&u1x) + prog.b.dot(&u1y) + prog.h.dot(&u1z);

        let lambda = &scaling.lambda;
        let lam_sq = jordan_mul(cones, lambda, lambda);

        // one Newton direction for the given targets
        let direction = |rx_t: &DVector<f64>,
                         ry_t: &DVector<f64>,
                         rz_t: &DVector<f64>,
                         rtau_t: f64,
                         dcomp: &DVector<f64>,
                         dcomp_tau: f64|
         -> (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>, f64, f64) {
            let wdiv = scaling.apply_w(cones, &jordan_div(cones, lambda, dcomp));
            let r3 = -rz_t - &wdiv;
            let (u2x, u2y, u2z) = kkt.solve(prog, &scaling, rx_t, &(-ry_t), &r3);
            let u2_dot = prog.c.dot(&u2x) + prog.b.dot(&u2y) + prog.h.dot(&u2z);
            let dtau = (-rtau_t - dcomp_tau / tau - u2_dot)
                / (u1_dot - kappa / tau);
            let dx = &u2x + &u1x * dtau;
            let dy = &u2y + &u1y * dtau;
            let dz = &u2z + &u1z * dtau;
            let ds = &wdiv - scaling.apply_w(cones, &scaling.apply_w(cones, &dz));
            let dkappa = (dcomp_tau - kappa * dtau) / tau;
            (dx, dy, dz, ds, dtau, dkappa)
        };

        // predictor (affine) step
        let dcomp_aff = -&lam_sq;
        let (_, _, dz_a, ds_a, dtau_a, dkappa_a) =
            direction(&rx, &ry, &rz, rtau, &dcomp_aff, -tau * kappa);

        let mut alpha_aff = max_step(cones, &s, &ds_a, 1.0);
        alpha_aff = alpha_aff.min(max_step(cones, &z, &dz_a, 1.0));
        if dtau_a < 0.0 {
            alpha_aff = alpha_aff.min(-tau / dtau_a);
        }
        if dkappa_a < 0.0 {
            alpha_aff = alpha_aff.min(-kappa / dkappa_a);
        }
        alpha_aff = alpha_aff.min(1.0);
        let mu_aff = ((&s + &ds_a * alpha_aff).dot(&(&z + &dz_a * alpha_aff))
            + (tau + alpha_aff * dtau_a) * (kappa + alpha_aff * dkappa_a))
            / nu;
        let sigma = (mu_aff / mu).max(0.0).min(1.0).powi(3);

        // corrector: scaled second-order term
        let ws_a = scaling.apply_w_inv(cones, &ds_a);
        let wz_a = scaling.apply_w(cones, &dz_a);
        let corr = jordan_mul(cones, &ws_a, &wz_a);
        let dcomp = -&lam_sq - &corr + &e * (sigma * mu);
        let dcomp_tau = -tau * kappa - dtau_a * dkappa_a + sigma * mu;
        let f = 1.0 - sigma;
        let (dx, dy, dz, ds, dtau, dkappa) = direction(
            &(&rx * f),
            &(&ry * f),
            &(&rz * f),
            rtau * f,
            &dcomp,
            dcomp_tau,
        );

        let mut alpha = max_step(cones, &s, &ds, 10.0);
        alpha = alpha.min(max_step(cones, &z, &dz, 10.0));
        if dtau < 0.0 {
            alpha = alpha.min(-tau / dtau);
        }
        if dkappa < 0.0 {
            alpha = alpha.min(-kappa / dkappa);
        }
        alpha = (0.99 * alpha).min(1.0);
        // centrality safeguard: back off until no cone block's complementarity
        // sits far below the average, so later predictor steps are not pinned
        // against the boundary by one stray block
        const CENTRALITY: f64 = 1e-3;
        for _ in 0..40 {
            let st = &s + &ds * alpha;
            let zt = &z + &dz * alpha;
            let taut = tau + alpha * dtau;
            let kappat = kappa + alpha * dkappa;
            let mu_t = (st.dot(&zt) + taut * kappat) / nu;
            if min_block_complementarity(cones, &st, &zt, taut, kappat) >= CENTRALITY * mu_t {
                break;
            }
            alpha *= 0.9;
        }
        if !alpha.is_finite() || alpha < 1e-12 {
            status = SolveStatus::NumericalFailure;
            iterations = iter;
            break;
        }

        x += &dx * alpha;
        y += &dy * alpha;
        z += &dz * alpha;
        s += &ds * alpha;
        tau += alpha * dtau;
        kappa += alpha * dkappa;
    }

    if matches!(status, SolveStatus::MaxIter | SolveStatus::NumericalFailure)
        && best_metric < settings.tol * 10.0
    {
        // stalled at the floating-point floor with a certified near-optimal
        // iterate in hand
        status = SolveStatus::Optimal;
    }
    let (cand, residuals) = if status == SolveStatus::Optimal {
        best.expect("an optimal status always has a best iterate")
    } else {
        // certificates (and failed iterates) are reported unnormalized
        let cand = unscale(&x, &y, &z, &s, 1.0);
        let r = certified_residuals(orig, &cand);
        (cand, r)
    };
    ConicSolution {
        status,
        objective: orig.c.dot(&cand.x),
        x: cand.x,
        y: cand.y,
        z: cand.z,
        s: cand.s,
        iterations,
        primal_residual: residuals.0,
        dual_residual: residuals.1,
        gap: residuals.2,
    }
}

// ---------------------------------------------------------------------------
// presolve: eliminate variables fixed by singleton equality rows
// ---------------------------------------------------------------------------

struct FixedVars {
    /// (variable index in the original program, value)
    fixed: Vec<(usize, f64)>,
    /// original equality-row indices that were consumed
    dropped_rows: Vec<usize>,
    /// map reduced variable index -> original index
    keep: Vec<usize>,
}

fn presolve_fixed_vars(prog: &ConicProgram) -> (ConicProgram, FixedVars, bool) {
    let n = prog.num_vars();
    let mut value = vec![None::<f64>; n];
    let mut dropped_rows = Vec::new();
    for i in 0..prog.a.nrows() {
        let row = prog.a.row(i);
        let nz: Vec<usize> = (0..n).filter(|&j| row[j] != 0.0).collect();
        if nz.len() == 1 {
            let j = nz[0];
            let v = prog.b[i] / row[j];
            if let Some(prev) = value[j] {
                if (prev - v).abs() > 1e-9 * prev.abs().max(1.0) {
                    return (
                        prog.clone(),
                        FixedVars { fixed: vec![], dropped_rows: vec![], keep: (0..n).collect() },
                        false,
                    );
                }
            }
            value[j] = Some(v);
            dropped_rows.push(i);
        }
    }
    if dropped_rows.is_empty() {
        return (
            prog.clone(),
            FixedVars { fixed: vec![], dropped_rows: vec![], keep: (0..n).collect() },
            true,
        );
    }
    let keep: Vec<usize> = (0..n).filter(|j| value[*j].is_none()).collect();
    let keep_rows: Vec<usize> =
        (0..prog.a.nrows()).filter(|i| !dropped_rows.contains(i)).collect();
    let fixed: Vec<(usize, f64)> = value
        .iter()
        .enumerate()
        .filter_map(|(j, v)| v.map(|v| (j, v)))
        .collect();

    let c = DVector::from_fn(keep.len(), |jj, _| prog.c[keep[jj]]);
    let mut b = DVector::from_fn(keep_rows.len(), |ii, _| prog.b[keep_rows[ii]]);
    let mut h = prog.h.clone();
    for &(j, v) in &fixed {
        for (ii, &i) in keep_rows.iter().enumerate() {
            b[ii] -= prog.a[(i, j)] * v;
        }
        for i in 0..prog.g.nrows() {
            h[i] -= prog.g[(i, j)] * v;
        }
    }
    let a = DMatrix::from_fn(keep_rows.len(), keep.len(), |ii, jj| {
        prog.a[(keep_rows[ii], keep[jj])]
    });
    let g = DMatrix::from_fn(prog.g.nrows(), keep.len(), |ii, jj| prog.g[(ii, keep[jj])]);
    (
        ConicProgram { c, a, b, g, h, cones: prog.cones },
        FixedVars { fixed, dropped_rows, keep },
        true,
    )
}

fn restore_presolved(
    orig: &ConicProgram,
    _reduced: &ConicProgram,
    sol: ConicSolution,
    fixed: &FixedVars,
) -> ConicSolution {
    if fixed.fixed.is_empty() {
        return sol;
    }
    let n = orig.num_vars();
    let mut x = DVector::zeros(n);
    for (jj, &j) in fixed.keep.iter().enumerate() {
        x[j] = sol.x[jj];
    }
    for &(j, v) in &fixed.fixed {
        x[j] = v;
    }
    // dual of dropped singleton rows from stationarity: A'y + G'z + c = 0
    let mut y = DVector::zeros(orig.a.nrows());
    let keep_rows: Vec<usize> =
        (0..orig.a.nrows()).filter(|i| !fixed.dropped_rows.contains(i)).collect();
    for (ii, &i) in keep_rows.iter().enumerate() {
        y[i] = sol.y[ii];
    }
    let z = sol.z.clone();
    for &i in &fixed.dropped_rows {
        // the dropped row fixes variable j; recover y_i from column j
        let j = (0..n).find(|&j| orig.a[(i, j)] != 0.0).unwrap();
        let mut resid = orig.c[j];
        for r in 0..orig.a.nrows() {
            if r != i {
                resid += orig.a[(r, j)] * y[r];
            }
        }
        for r in 0..orig.g.nrows() {
            resid += orig.g[(r, j)] * z[r];
        }
        y[i] = -resid / orig.a[(i, j)];
    }
    let mut out = ConicSolution {
        status: sol.status,
        objective: orig.c.dot(&x),
        x,
        y,
        z,
        s: sol.s,
        iterations: sol.iterations,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        gap: sol.gap,
    };
    if out.status == SolveStatus::Optimal {
        let cand = Candidate {
            x: out.x.clone(),
            y: out.y.clone(),
            z: out.z.clone(),
            s: out.s.clone(),
        };
        let (pres, dres, gap) = certified_residuals(orig, &cand);
        out.primal_residual = pres;
        out.dual_residual = dres;
        out.gap = gap;
    }
    out
}
