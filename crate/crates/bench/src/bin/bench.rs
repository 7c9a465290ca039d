use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coneal::{validate_derivatives, Execution, TraceRecord};
use coneal_bench::autotune::{autotune_mpc, AutotuneOptions};
use coneal_bench::problems::REGISTRY;
use coneal_bench::{build_problem, emit_report, problem_names, run_benchmark, BenchError, Format, RunOptions};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "bench", about = "Benchmark problems for the coneal solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List registered problems.
    List,
    /// Solve problems and compare against their oracles.
    Run {
        names: Vec<String>,
        #[arg(long)]
        all: bool,
        /// Final KKT tolerance.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 1000)]
        max_iters: usize,
        #[arg(long, default_value = "table")]
        format: Format,
        /// Write per-iteration records as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Solve problems one after another.
        #[arg(long)]
        sequential: bool,
    },
    /// Tune MPC weights by differentiating through the solver.
    Autotune {
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long)]
        json: bool,
    },
    /// Check a problem's derivative callbacks against finite differences.
    Validate {
        name: String,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
}

#[derive(Serialize)]
struct TraceLine<'a> {
    problem: &'a str,
    #[serde(flatten)]
    record: &'a TraceRecord,
}

fn run(cli: Cli) -> Result<bool, BenchError> {
    match cli.command {
        Command::List => {
            for (name, desc) in REGISTRY {
                println!("{name:<26} {desc}");
            }
            Ok(true)
        }
        Command::Run {
            names,
            all,
            tol,
            max_iters,
            format,
            trace,
            sequential,
        } => {
            let names: Vec<&str> = if all {
                problem_names()
            } else {
                names.iter().map(String::as_str).collect()
            };
            let mut opts = RunOptions::default();
            opts.solver.tol = tol;
            opts.solver.max_total = max_iters;
            opts.solver.record_trace = trace.is_some();
            if sequential {
                opts.execution = Execution::Sequential;
            }
            let (report, runs) = run_benchmark(&names, &opts)?;
            if let Some(path) = trace {
                let mut w = BufWriter::new(File::create(path)?);
                for run in &runs {
                    for record in &run.trace {
                        let line = TraceLine {
                            problem: &run.row.problem,
                            record,
                        };
                        serde_json::to_writer(&mut w, &line)?;
                        w.write_all(b"\n")?;
                    }
                }
                w.flush()?;
            }
            print!("{}", emit_report(&report, format)?);
            Ok(report.all_passed())
        }
        Command::Autotune { steps, json } => {
            let opts = AutotuneOptions {
                steps,
                ..Default::default()
            };
            let report = autotune_mpc(&opts)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!("open-loop cost     {:.6e}", report.open_loop_cost);
                println!("untuned MPC cost   {:.6e}", report.untuned_cost);
                println!("tuned MPC cost     {:.6e}", report.tuned_cost);
                println!("weights            {:?} -> {:?}", report.initial_weights, report.tuned_weights);
                if let Some(check) = &report.gradient_check {
                    println!("gradient rel. err  {:.3e}", check.rel_error);
                }
            }
            Ok(report.tuned_cost < report.untuned_cost && report.untuned_cost < report.open_loop_cost)
        }
        Command::Validate { name, tol } => {
            let problem = build_problem(&name)?;
            let dims = problem.model.dims();
            // Off-solution point so that every term contributes.
            let x: Vec<f64> = problem.x0.iter().enumerate().map(|(i, v)| v + 0.1 + 0.01 * i as f64).collect();
            let y: Vec<f64> = (0..dims.m).map(|i| 0.5 - 0.1 * i as f64).collect();
            let z: Vec<f64> = (0..dims.p).map(|i| -0.3 - 0.05 * i as f64).collect();
            let report = validate_derivatives(problem.model.as_ref(), &x, &problem.theta, &y, &z, tol);
            for c in &report.checks {
                let verdict = if c.skipped {
                    "skipped"
                } else if c.passed {
                    "ok"
                } else {
                    "FAILED"
                };
                println!("{:<32} {:>12.3e}  {verdict}", c.callback, c.max_rel_error);
            }
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
