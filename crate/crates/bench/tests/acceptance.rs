//! Acceptance criteria. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits nonzero on any failure.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::process::ExitCode;
use std::time::Instant;

use coneal::par::Execution;
use coneal::trajopt::transcribe;
use coneal::{solve, validate_derivatives, ProblemModel, SolverOptions, Status};
use coneal_bench::autotune::{autotune_mpc, AutotuneOptions};
use coneal_bench::problems::{reach_data, tracking_problem, REACH_CONTROL_BOUND};
use coneal_bench::{build_problem, problem_names, run_benchmark, run_problem, sensitivity_check, RunOptions};
use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const CONE_INSTANCES: u64 = 1000;
const CONE_TIME_LIMIT_S: f64 = 10.0;
const KKT_INSTANCES: u64 = 200;
const JACOBIAN_TOL: f64 = 1e-5;
const REDUCTION_TOL: f64 = 1e-8;
const DIRECTION_TOL: f64 = 1e-8;
const INERTIA_INSTANCES: u64 = 100;
const KKT_RESIDUAL_TOL: f64 = 1e-6;
const COMPLEMENTARITY_TOL: f64 = 1e-6;
const SUITE_TIME_LIMIT_S: f64 = 60.0;
const SENSITIVITY_TOL: f64 = 1e-4;
const TUNING_STEPS: usize = 10;
const TUNING_GRADIENT_TOL: f64 = 1e-3;
const VALIDATION_TOL: f64 = 1e-5;
const DEFECT_TOL: f64 = 1e-6;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn cone_algebra() -> Outcome {
    let start = Instant::now();
    for family in CONE_FAMILIES {
        for seed in 0..CONE_INSTANCES {
            check_cone_instance(&mut rng(seed), family).map_err(|e| format!("{family:?} seed {seed}: {e}"))?;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("{} instances per family, {secs:.2} s", CONE_INSTANCES);
    if secs < CONE_TIME_LIMIT_S {
        Ok(detail)
    } else {
        Err(format!("{detail} exceeds {CONE_TIME_LIMIT_S} s"))
    }
}

fn kkt_consistency() -> Outcome {
    let mut worst = KktCheck::default();
    for seed in 0..KKT_INSTANCES {
        let c = check_kkt_instance(&mut rng(seed)).map_err(|e| format!("seed {seed}: {e}"))?;
        worst.jacobian_error = worst.jacobian_error.max(c.jacobian_error);
        worst.reduction_error = worst.reduction_error.max(c.reduction_error);
        worst.direction_residual = worst.direction_residual.max(c.direction_residual);
    }
    let detail = format!(
        "{KKT_INSTANCES} instances; Jacobian vs FD {:.1e}, reduced vs full {:.1e}, ‖JΔw+R‖ {:.1e}",
        worst.jacobian_error, worst.reduction_error, worst.direction_residual
    );
    if worst.jacobian_error <= JACOBIAN_TOL
        && worst.reduction_error <= REDUCTION_TOL
        && worst.direction_residual <= DIRECTION_TOL
    {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn inertia() -> Outcome {
    let mut dual_regularized = 0;
    for seed in 0..INERTIA_INSTANCES {
        let reduced = seed % 2 == 0;
        let reg = check_inertia_instance(&mut rng(seed), reduced).map_err(|e| format!("seed {seed}: {e}"))?;
        if !reduced && reg.eps_d == 0.0 {
            return Err(format!("seed {seed}: duplicated rows corrected without ε_d"));
        }
        dual_regularized += usize::from(reg.eps_d > 0.0);
    }
    Ok(format!(
        "{INERTIA_INSTANCES} instances with indefinite Hessians and duplicated rows; {dual_regularized} needed ε_d"
    ))
}

fn solver_vs_oracle() -> Outcome {
    let start = Instant::now();
    let (report, _) = run_benchmark(&problem_names(), &RunOptions::default()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let mut failures = Vec::new();
    for row in &report.rows {
        let kkt = row.kkt_residual.unwrap_or(f64::INFINITY);
        let comp = row.complementarity.unwrap_or(f64::INFINITY);
        if row.status != Status::Solved.to_string() || !row.within_tolerance || kkt > KKT_RESIDUAL_TOL || comp > COMPLEMENTARITY_TOL {
            failures.push(format!(
                "{} ({}, gap {:?}, distance {:?}, ‖R‖ {kkt:e}, s∘t {comp:e})",
                row.problem, row.status, row.oracle_gap, row.oracle_distance
            ));
        }
    }
    if secs >= SUITE_TIME_LIMIT_S {
        failures.push(format!("suite took {secs:.1} s"));
    }
    if failures.is_empty() {
        Ok(format!("{} problems solved and matched, {secs:.2} s", report.rows.len()))
    } else {
        Err(failures.join("; "))
    }
}

fn licq_robustness() -> Outcome {
    let opts = RunOptions::default().solver;
    let mut notes = Vec::new();
    for (name, contact) in [("particle-impact-free", false), ("particle-impact-contact", true)] {
        let problem = build_problem(name).map_err(|e| e.to_string())?;
        let run = run_problem(&problem, &opts);
        let sol = run.solution.ok_or_else(|| format!("{name}: {:?}", run.row.message))?;
        let (z, gamma) = (sol.point.x[0], sol.point.x[2]);
        let branch = if contact {
            z.abs() <= 1e-6 && gamma > 0.0
        } else {
            gamma.abs() <= 1e-6 && z > 0.0
        };
        if sol.status != Status::Solved || !run.row.within_tolerance || !branch {
            return Err(format!("{name}: {} z = {z:e}, γ = {gamma:e}, gap {:?}", sol.status, run.row.oracle_gap));
        }
        notes.push(format!("{name} z = {z:.3e}, γ = {gamma:.3e}"));
    }
    Ok(notes.join("; "))
}

fn differentiability() -> Outcome {
    let mut checked = Vec::new();
    let mut degenerate = Vec::new();
    for name in problem_names() {
        let problem = build_problem(name).map_err(|e| e.to_string())?;
        let check = sensitivity_check(&problem, Execution::default()).map_err(|e| format!("{name}: {e}"))?;
        if check.nondegenerate() {
            if check.max_rel_error > SENSITIVITY_TOL {
                return Err(format!("{name}: relative error {:.2e}", check.max_rel_error));
            }
            checked.push(format!("{name} {:.1e}", check.max_rel_error));
        } else {
            degenerate.push(name);
        }
        // The impact problem is degenerate in its multipliers only; the
        // position sensitivity is still unique.
        if name.starts_with("particle-impact") && check.max_rel_error_x > SENSITIVITY_TOL {
            return Err(format!("{name}: dx/dθ relative error {:.2e}", check.max_rel_error_x));
        }
    }
    if checked.is_empty() {
        return Err("no nondegenerate problem".into());
    }
    Ok(format!("{}; singular J: {}", checked.join(", "), degenerate.join(", ")))
}

fn autotuning() -> Outcome {
    let opts = AutotuneOptions {
        steps: TUNING_STEPS,
        ..Default::default()
    };
    let report = autotune_mpc(&opts).map_err(|e| e.to_string())?;
    let grad_err = report.gradient_check.as_ref().map_or(f64::INFINITY, |g| g.rel_error);
    let detail = format!(
        "tuned {:.4} < untuned {:.4} < open loop {:.4}; gradient error {grad_err:.1e}",
        report.tuned_cost, report.untuned_cost, report.open_loop_cost
    );
    if report.tuned_cost < report.untuned_cost
        && report.untuned_cost < report.open_loop_cost
        && grad_err <= TUNING_GRADIENT_TOL
    {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn transcription() -> Outcome {
    let data = reach_data();
    let (model, map) =
        transcribe(tracking_problem(&data, false, Some(REACH_CONTROL_BOUND))).map_err(|e| e.to_string())?;
    let dims = model.dims();
    let theta = data.x_init.to_vec();
    let x: Vec<f64> = (0..dims.n).map(|i| 0.3 * (i as f64).sin() + 0.1).collect();
    let y: Vec<f64> = (0..dims.m).map(|i| 0.5 - 0.07 * i as f64).collect();
    let z: Vec<f64> = (0..dims.p).map(|i| -0.2 - 0.03 * i as f64).collect();
    let report = validate_derivatives(&model, &x, &theta, &y, &z, VALIDATION_TOL);
    if !report.passed() {
        return Err(format!("derivative validation failed: {:?}", report.checks));
    }
    let sol = solve(&model, &vec![0.0; dims.n], &theta, &SolverOptions::default()).map_err(|e| e.to_string())?;
    if sol.status != Status::Solved {
        return Err(format!("solve ended with {}", sol.status));
    }
    let g = model.equality(sol.point.x.as_slice(), &theta);
    let defect = map
        .dynamics
        .iter()
        .flat_map(|r| g.rows(r.start, r.len()).iter().copied().collect::<Vec<_>>())
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let detail = format!("{} callbacks validated; max defect {defect:.1e}", report.checks.len());
    if defect <= DEFECT_TOL {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("cone algebra", cone_algebra),
        ("KKT consistency", kkt_consistency),
        ("inertia", inertia),
        ("solver vs oracle", solver_vs_oracle),
        ("LICQ robustness", licq_robustness),
        ("differentiability", differentiability),
        ("auto-tuning", autotuning),
        ("trajectory transcription", transcription),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
