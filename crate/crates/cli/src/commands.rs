//! Subcommand implementations: surface checking, profile planning, scenario
//! simulation, standalone conic solving and the regression bench.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nonplanar::conic::{self, SolveStatus, SolverSettings};
use nonplanar::planner::{
    build_stages, solve_profile, PlannerError, PlannerOptions, SpeedProfile,
};
use nonplanar::presets;
use nonplanar::road::max_fd_error;
use nonplanar::simulator::{run_scenario, Mode, ScenarioParams, ScenarioResult, TireModel};
use nonplanar::force::VehicleParams;
use nonplanar::RoadSurface;

use crate::config::{
    load_json, ConicProgramConfig, ModeConfig, RoadConfig, ScenarioConfig, VehicleConfig,
};
use crate::CliError;

/// Serialize one float with 17 significant digits, enough for an exact f64
/// round trip.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

/// Optional provenance header; suppressed by --no-meta so identical inputs
/// give byte-identical files.
fn meta_line(subcommand: &str, no_meta: bool) -> String {
    if no_meta {
        String::new()
    } else {
        let epoch = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        format!("# nonplanar {subcommand} unix_time={epoch}\n")
    }
}

pub fn check_surface(road: &Path, grid: &str, tol: f64) -> Result<i32, CliError> {
    let surface: RoadSurface = load_json::<RoadConfig>(road)?.build()?;
    let (ns, ny) = parse_grid(grid)?;
    let err = max_fd_error(&surface, ns, ny)
        .map_err(|e| CliError::Config(format!("surface evaluation failed: {e}")))?;
    let pass = err < tol;
    println!(
        "{}",
        serde_json::json!({ "max_fd_error": err, "tol": tol, "pass": pass })
    );
    Ok(if pass { 0 } else { 4 })
}

fn parse_grid(grid: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Config(format!("grid must look like 20x5, got {grid:?}"));
    let (a, b) = grid.split_once('x').ok_or_else(bad)?;
    let ns: usize = a.parse().map_err(|_| bad())?;
    let ny: usize = b.parse().map_err(|_| bad())?;
    if ns < 2 || ny < 2 {
        return Err(bad());
    }
    Ok((ns, ny))
}

fn map_planner_error(e: PlannerError) -> CliError {
    match e {
        PlannerError::Infeasible { stage, s } => {
            CliError::Infeasible(format!("infeasible from stage {stage} (s = {s:.2} m)"))
        }
        PlannerError::SolverFailure(status) => {
            CliError::Solver(format!("solver failure: {status:?}"))
        }
        other => CliError::Config(other.to_string()),
    }
}

pub fn plan(
    road: &Path,
    vehicle: &Path,
    scenario: &Path,
    out: &Path,
    paper_literal: bool,
    no_meta: bool,
) -> Result<i32, CliError> {
    let surface = load_json::<RoadConfig>(road)?.build()?;
    let params = load_json::<VehicleConfig>(vehicle)?.build()?;
    let sc: ScenarioConfig = load_json(scenario)?;
    let options = PlannerOptions { paper_literal, ..Default::default() };
    let stages = build_stages(
        &surface,
        &params,
        sc.lane_offset,
        sc.s_start,
        sc.s_end,
        sc.n_stages,
        &sc.b_profile.build(),
        options,
    )
    .map_err(map_planner_error)?;
    let profile = solve_profile(&stages, sc.v0, options).map_err(map_planner_error)?;
    write_file(out, &profile_csv(&profile, no_meta))?;
    println!(
        "{}",
        serde_json::json!({
            "status": "optimal",
            "stages": profile.stages.len(),
            "objective": profile.objective,
            "iterations": profile.iterations,
            "max_continuity_residual": profile.max_continuity_residual,
            "max_constraint_violation": profile.max_constraint_violation,
        })
    );
    Ok(0)
}

fn profile_csv(profile: &SpeedProfile, no_meta: bool) -> String {
    let mut csv = meta_line("plan", no_meta);
    csv.push_str("k,s,l,v2,vdot,Ft1,Ft2,Ft3,margin,friction_util,Nfr,Nfl,Nrr,Nrl,flag\n");
    for r in &profile.stages {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.k,
            num(r.s),
            num(r.l),
            num(r.v2),
            num(r.vdot),
            num(r.ft1),
            num(r.ft2),
            num(r.ft3),
            num(r.margin),
            num(r.friction_util),
            num(r.n_fr),
            num(r.n_fl),
            num(r.n_rr),
            num(r.n_rl),
            u8::from(r.flag),
        ));
    }
    csv
}

pub fn simulate(
    road: &Path,
    vehicle: &Path,
    scenario: &Path,
    mode_flag: Option<ModeConfig>,
    out: &Path,
    paper_literal: bool,
    no_meta: bool,
) -> Result<i32, CliError> {
    let surface = load_json::<RoadConfig>(road)?.build()?;
    let params = load_json::<VehicleConfig>(vehicle)?.build()?;
    let sc: ScenarioConfig = load_json(scenario)?;
    let mode: Mode = mode_flag.or(sc.mode).unwrap_or(ModeConfig::None).into();
    let sp = sc.scenario_params(paper_literal)?;
    let result = run_scenario(&surface, &params, &TireModel::default(), &sp, mode)
        .map_err(|e| match e {
            nonplanar::simulator::SimError::NumericalBlowup { .. } => {
                CliError::Scenario(e.to_string())
            }
            nonplanar::simulator::SimError::Planner(p) => map_planner_error(p),
            other => CliError::Config(other.to_string()),
        })?;
    write_file(out, &run_csv(&result, no_meta))?;
    println!("{}", summary_json(&result));
    // a safety-system run that leaves the lane is a scenario failure; the
    // uncontrolled modes are allowed to depart
    if mode == Mode::SafetySystem && !result.completed {
        return Ok(4);
    }
    Ok(0)
}

fn run_csv(result: &ScenarioResult, no_meta: bool) -> String {
    let mut csv = meta_line("simulate", no_meta);
    csv.push_str(
        "t,s,y,theta_s,v,beta,Nfr,Nfl,Nrr,Nrl,Bfr,Bfl,Brr,Brl,friction_util,ax,ay,az,margin,driver_brake,lifted\n",
    );
    for r in &result.log {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            num(r.t),
            num(r.s),
            num(r.y),
            num(r.theta_s),
            num(r.v),
            num(r.beta),
            num(r.loads[0]),
            num(r.loads[1]),
            num(r.loads[2]),
            num(r.loads[3]),
            num(r.brake[0]),
            num(r.brake[1]),
            num(r.brake[2]),
            num(r.brake[3]),
            num(r.friction_util),
            num(r.a_proper.x),
            num(r.a_proper.y),
            num(r.a_proper.z),
            num(r.margin),
            num(r.driver_brake),
            u8::from(r.lifted),
        ));
    }
    csv
}

fn summary_json(result: &ScenarioResult) -> String {
    serde_json::json!({
        "completed": result.completed,
        "off_road": result.off_road,
        "max_abs_y": result.max_abs_y,
        "max_friction_util": result.max_friction_util,
        "min_wheel_load": result.min_wheel_load,
        "planner_failures": result.planner_failures,
    })
    .to_string()
}

pub fn solve_conic(input: &Path, out: &Path) -> Result<i32, CliError> {
    let program = load_json::<ConicProgramConfig>(input)?.build()?;
    let sol = conic::solve(&program, &SolverSettings::default());
    let doc = serde_json::json!({
        "status": format!("{:?}", sol.status),
        "objective": sol.objective,
        "iterations": sol.iterations,
        "primal_residual": sol.primal_residual,
        "dual_residual": sol.dual_residual,
        "gap": sol.gap,
        "x": sol.x.as_slice(),
        "y": sol.y.as_slice(),
        "z": sol.z.as_slice(),
        "s": sol.s.as_slice(),
    });
    write_file(out, &format!("{doc}\n"))?;
    println!(
        "{}",
        serde_json::json!({ "status": format!("{:?}", sol.status), "objective": sol.objective })
    );
    match sol.status {
        SolveStatus::Optimal => Ok(0),
        SolveStatus::Infeasible | SolveStatus::Unbounded => Ok(2),
        SolveStatus::MaxIter | SolveStatus::NumericalFailure => Ok(3),
    }
}

struct BenchRow {
    name: &'static str,
    expectation: &'static str,
    pass: bool,
    detail: String,
    seconds: f64,
}

/// Run the shipped scenario pack and print one pass/fail row per case.
pub fn bench(paper_literal: bool) -> Result<i32, CliError> {
    let params = VehicleParams::default();
    let scenario = ScenarioParams {
        v0: 25.0,
        s_end: 275.0,
        t_max: 40.0,
        paper_literal,
        ..Default::default()
    };

    let scenario_case = move |name: &'static str,
                              expectation: &'static str,
                              mode: Mode,
                              judge: fn(&ScenarioResult) -> (bool, String)|
          -> std::thread::JoinHandle<BenchRow> {
        std::thread::spawn(move || {
            let start = Instant::now();
            let outcome = run_scenario(
                &presets::off_camber_uturn(),
                &params,
                &TireModel::default(),
                &scenario,
                mode,
            );
            let (pass, detail) = match &outcome {
                Ok(r) => judge(r),
                Err(e) => (false, format!("error: {e}")),
            };
            BenchRow { name, expectation, pass, detail, seconds: start.elapsed().as_secs_f64() }
        })
    };

    let handles = vec![
        scenario_case("uturn_none", "departs lane", Mode::None, |r| {
            (r.off_road, format!("off_road={} max|y|={:.2}", r.off_road, r.max_abs_y))
        }),
        scenario_case(
            "uturn_safety_system",
            "completes in lane",
            Mode::SafetySystem,
            |r| {
                let pass = r.completed
                    && !r.off_road
                    && r.max_friction_util <= 1.0 + 1e-9
                    && r.min_wheel_load >= 0.0;
                (
                    pass,
                    format!(
                        "completed={} max|y|={:.2} util={:.3} min_load={:.0}",
                        r.completed, r.max_abs_y, r.max_friction_util, r.min_wheel_load
                    ),
                )
            },
        ),
        scenario_case(
            "uturn_safety_system_planar",
            "departs lane",
            Mode::SafetySystemPlanar,
            |r| (r.off_road, format!("off_road={} max|y|={:.2}", r.off_road, r.max_abs_y)),
        ),
    ];

    let mut rows: Vec<BenchRow> = handles.into_iter().map(|h| h.join().unwrap()).collect();

    // planner certification on the same road: a feasible entry speed must
    // solve with tight continuity residuals
    let start = Instant::now();
    let options = PlannerOptions { paper_literal, ..Default::default() };
    let plan_row = build_stages(
        &presets::off_camber_uturn(),
        &params,
        0.0,
        0.0,
        275.0,
        40,
        &nonplanar::planner::TargetProfile::Constant(0.0),
        options,
    )
    .map_err(map_planner_error)
    .and_then(|stages| solve_profile(&stages, 15.0, options).map_err(map_planner_error));
    let (pass, detail) = match &plan_row {
        Ok(p) => (
            p.max_continuity_residual < 1e-6,
            format!(
                "continuity={:.2e} violation={:.2e}",
                p.max_continuity_residual, p.max_constraint_violation
            ),
        ),
        Err(e) => (false, format!("error: {e}")),
    };
    rows.push(BenchRow {
        name: "uturn_plan",
        expectation: "solves, continuity < 1e-6",
        pass,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    });

    let mut all_pass = true;
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    writeln!(w, "{:<28} {:<24} {:<6} {:>7}  detail", "case", "expectation", "result", "time")
        .ok();
    for row in &rows {
        all_pass &= row.pass;
        writeln!(
            w,
            "{:<28} {:<24} {:<6} {:>6.1}s  {}",
            row.name,
            row.expectation,
            if row.pass { "pass" } else { "FAIL" },
            row.seconds,
            row.detail
        )
        .ok();
    }
    Ok(if all_pass { 0 } else { 4 })
}
