//! Benchmark problems, reference oracles, reports and the MPC tuning
//! demonstration for the `coneal` solver.

pub mod autotune;
pub mod problems;
pub mod qp;
pub mod report;

use std::time::Instant;

use coneal::par::{map_slice, Execution};
use coneal::sensitivity::{differentiate_with, SensitivityOptions};
use coneal::{solve, Solution, SolverOptions, Status, TraceRecord};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use problems::{build_problem, problem_names, BenchmarkProblem, OracleSolution};
pub use report::{emit_report, BenchmarkReport, Format, ReportRow};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown benchmark problem `{0}`")]
    NotFound(String),
    #[error(transparent)]
    Solver(#[from] coneal::Error),
    #[error("solve failed: {0}")]
    SolveFailed(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Objective gap allowed against the oracle: `1e-5·(1 + |oracle|)`.
pub const OBJECTIVE_GAP_TOL: f64 = 1e-5;
/// Distance allowed to a unique oracle minimizer.
pub const POINT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub solver: SolverOptions,
    /// Run problems concurrently.
    pub execution: Execution,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions {
                record_trace: true,
                ..Default::default()
            },
            execution: Execution::default(),
        }
    }
}

/// One solved problem with its report row and trace.
#[derive(Debug, Clone)]
pub struct ProblemRun {
    pub row: ReportRow,
    pub solution: Option<Solution>,
    pub trace: Vec<TraceRecord>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn run_problem(problem: &BenchmarkProblem, opts: &SolverOptions) -> ProblemRun {
    let start = Instant::now();
    let result = solve(problem.model.as_ref(), &problem.x0, &problem.theta, opts);
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    let oracle = problem.oracle();
    match result {
        Ok(sol) => {
            let gap = (sol.objective - oracle.objective).abs();
            let distance = oracle.x.as_ref().map(|x| (&sol.point.x - x).amax());
            let within = sol.status == Status::Solved
                && gap <= OBJECTIVE_GAP_TOL * (1.0 + oracle.objective.abs())
                && distance.is_none_or(|d| d <= POINT_TOL);
            let row = ReportRow {
                problem: problem.name.to_string(),
                solver: "coneal".to_string(),
                status: sol.status.to_string(),
                objective: finite(sol.objective),
                violation: finite(sol.violation),
                iterations: sol.total_iterations,
                outer_iterations: sol.outer_iterations,
                kkt_residual: finite(sol.kkt_residual),
                complementarity: finite(sol.complementarity),
                oracle_objective: finite(oracle.objective),
                oracle_gap: finite(gap),
                oracle_distance: distance.and_then(finite),
                within_tolerance: within,
                message: sol.message.clone(),
                wall_time_ms,
            };
            let trace = sol.trace.clone();
            ProblemRun {
                row,
                solution: Some(sol),
                trace,
            }
        }
        Err(e) => ProblemRun {
            row: ReportRow {
                problem: problem.name.to_string(),
                solver: "coneal".to_string(),
                status: "invalid_input".to_string(),
                objective: None,
                violation: None,
                iterations: 0,
                outer_iterations: 0,
                kkt_residual: None,
                complementarity: None,
                oracle_objective: finite(oracle.objective),
                oracle_gap: None,
                oracle_distance: None,
                within_tolerance: false,
                message: Some(e.to_string()),
                wall_time_ms,
            },
            solution: None,
            trace: Vec::new(),
        },
    }
}

/// Solve every problem; rows follow input order.
pub fn run_problems(problems: &[BenchmarkProblem], opts: &RunOptions) -> Vec<ProblemRun> {
    map_slice(opts.execution, problems, |p| run_problem(p, &opts.solver))
}

/// Build and solve registered problems by name. Unknown names are an
/// error; solver failures are recorded in the report.
pub fn run_benchmark(names: &[&str], opts: &RunOptions) -> Result<(BenchmarkReport, Vec<ProblemRun>), BenchError> {
    let problems = names
        .iter()
        .map(|n| build_problem(n))
        .collect::<Result<Vec<_>, _>>()?;
    let runs = run_problems(&problems, opts);
    let report = BenchmarkReport {
        rows: runs.iter().map(|r| r.row.clone()).collect(),
    };
    Ok((report, runs))
}

/// Comparison of solver sensitivities with central differences of re-solves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCheck {
    pub problem: String,
    /// Max over entries of `|analytic − fd| / max(1, |fd|)`.
    pub max_rel_error: f64,
    /// The same restricted to the rows of `x`.
    pub max_rel_error_x: f64,
    pub used_least_squares: bool,
    /// Reciprocal condition of the row-equilibrated `J`.
    pub rcond: f64,
}

impl SensitivityCheck {
    pub fn nondegenerate(&self) -> bool {
        !self.used_least_squares
    }
}

pub const SENSITIVITY_STEP: f64 = 1e-5;
pub const SENSITIVITY_SOLVE_TOL: f64 = 1e-10;

fn tight_options() -> SolverOptions {
    SolverOptions {
        tol: SENSITIVITY_SOLVE_TOL,
        max_total: 3000,
        ..Default::default()
    }
}

/// Differentiate the solution of `problem` and compare every column of
/// `dw/dθ` with `(w(θ + δe_j) − w(θ − δe_j)) / 2δ`.
pub fn sensitivity_check(problem: &BenchmarkProblem, execution: Execution) -> Result<SensitivityCheck, BenchError> {
    let opts = tight_options();
    let model = problem.model.as_ref();
    let sol = solve(model, &problem.x0, &problem.theta, &opts)?;
    if sol.status != Status::Solved {
        return Err(BenchError::SolveFailed(format!("{}: {}", problem.name, sol.status)));
    }
    let sens_opts = SensitivityOptions {
        execution,
        ..Default::default()
    };
    let sens = differentiate_with(model, &sol, &problem.theta, &sens_opts)?;
    let d = problem.theta.len();
    let columns = coneal::par::map_indexed(execution, d, |j| -> Result<_, BenchError> {
        let shifted = |sign: f64| -> Result<_, BenchError> {
            let mut th = problem.theta.clone();
            th[j] += sign * SENSITIVITY_STEP;
            let s = solve(model, &problem.x0, &th, &opts)?;
            if s.status != Status::Solved {
                return Err(BenchError::SolveFailed(format!("{} (θ{j} shifted): {}", problem.name, s.status)));
            }
            Ok(s.point.to_vector())
        };
        Ok((shifted(1.0)? - shifted(-1.0)?) / (2.0 * SENSITIVITY_STEP))
    });
    let mut fd = DMatrix::zeros(sens.dw_dtheta.nrows(), d);
    for (j, col) in columns.into_iter().enumerate() {
        fd.set_column(j, &col?);
    }
    let rel = |a: &f64, f: &f64| (a - f).abs() / f.abs().max(1.0);
    let max_rel_error = sens.dw_dtheta.iter().zip(fd.iter()).map(|(a, f)| rel(a, f)).fold(0.0, f64::max);
    let n = model.dims().n;
    let max_rel_error_x = sens
        .dw_dtheta
        .rows(0, n)
        .iter()
        .zip(fd.rows(0, n).iter())
        .map(|(a, f)| rel(a, f))
        .fold(0.0, f64::max);
    Ok(SensitivityCheck {
        problem: problem.name.to_string(),
        max_rel_error,
        max_rel_error_x,
        used_least_squares: sens.used_least_squares,
        rcond: sens.rcond,
    })
}
