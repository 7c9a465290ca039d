use coneal::par::Execution;
use coneal_bench::problems::infeasible_problem;
use coneal_bench::{emit_report, problem_names, run_benchmark, run_problems, BenchError, BenchmarkReport, Format, ReportRow, RunOptions};
use proptest::prelude::*;

#[test]
fn infeasible_problem_is_reported_not_raised() {
    let runs = run_problems(&[infeasible_problem()], &RunOptions::default());
    let row = &runs[0].row;
    assert_ne!(row.status, "solved");
    assert!(!row.within_tolerance);
    assert!(row.oracle_objective.is_none());
}

#[test]
fn empty_selection_gives_empty_report() {
    let (report, runs) = run_benchmark(&[], &RunOptions::default()).unwrap();
    assert!(report.rows.is_empty());
    assert!(runs.is_empty());
    assert!(report.all_passed());
}

#[test]
fn unknown_problem_is_an_error() {
    assert!(matches!(
        run_benchmark(&["no-such-problem"], &RunOptions::default()),
        Err(BenchError::NotFound(_))
    ));
}

#[test]
fn parallel_and_sequential_runs_agree() {
    let names = problem_names();
    let run = |execution| {
        let opts = RunOptions {
            execution,
            ..Default::default()
        };
        run_benchmark(&names, &opts).unwrap()
    };
    let (seq, seq_runs) = run(Execution::Sequential);
    let (par, par_runs) = run(Execution::Parallel);
    assert_eq!(seq, par);
    for (a, b) in seq_runs.iter().zip(&par_runs) {
        assert_eq!(a.trace, b.trace);
    }
    let order: Vec<_> = par.rows.iter().map(|r| r.problem.as_str()).collect();
    assert_eq!(order, names);
}

fn finite() -> impl Strategy<Value = Option<f64>> {
    prop_oneof![Just(None), (-1e6..1e6_f64).prop_map(Some)]
}

prop_compose! {
    fn row()(
        problem in "[a-z-]{1,12}",
        status in prop_oneof![Just("solved"), Just("max_iterations")],
        objective in finite(),
        violation in finite(),
        iterations in 0usize..1000,
        outer_iterations in 0usize..100,
        oracle_gap in finite(),
        within_tolerance: bool,
        message in proptest::option::of("[ a-z,]{0,20}"),
    ) -> ReportRow {
        ReportRow {
            problem,
            solver: "coneal".into(),
            status: status.into(),
            objective,
            violation,
            iterations,
            outer_iterations,
            kkt_residual: objective.map(f64::abs),
            complementarity: violation.map(f64::abs),
            oracle_objective: objective,
            oracle_gap,
            oracle_distance: None,
            within_tolerance,
            message,
            wall_time_ms: 1.0,
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn json_reports_round_trip(rows in proptest::collection::vec(row(), 0..6)) {
        let report = BenchmarkReport { rows };
        let text = emit_report(&report, Format::Json).unwrap();
        let back: BenchmarkReport = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, report);
    }

    #[test]
    fn csv_has_a_line_per_row(rows in proptest::collection::vec(row(), 0..6)) {
        let n = rows.len();
        let text = emit_report(&BenchmarkReport { rows }, Format::Csv).unwrap();
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        prop_assert_eq!(reader.records().count(), n);
    }
}
