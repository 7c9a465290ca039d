use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::BenchError;

/// One problem's results. Non-finite numbers are stored as `None`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub problem: String,
    pub solver: String,
    pub status: String,
    pub objective: Option<f64>,
    pub violation: Option<f64>,
    pub iterations: usize,
    pub outer_iterations: usize,
    pub kkt_residual: Option<f64>,
    pub complementarity: Option<f64>,
    pub oracle_objective: Option<f64>,
    pub oracle_gap: Option<f64>,
    /// Max-norm distance to the oracle minimizer when it is unique.
    pub oracle_distance: Option<f64>,
    pub within_tolerance: bool,
    pub message: Option<String>,
    pub wall_time_ms: f64,
}

// Wall time is excluded so reports from separate runs compare equal.
impl PartialEq for ReportRow {
    fn eq(&self, other: &Self) -> bool {
        self.problem == other.problem
            && self.solver == other.solver
            && self.status == other.status
            && self.objective == other.objective
            && self.violation == other.violation
            && self.iterations == other.iterations
            && self.outer_iterations == other.outer_iterations
            && self.kkt_residual == other.kkt_residual
            && self.complementarity == other.complementarity
            && self.oracle_objective == other.oracle_objective
            && self.oracle_gap == other.oracle_gap
            && self.oracle_distance == other.oracle_distance
            && self.within_tolerance == other.within_tolerance
            && self.message == other.message
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<ReportRow>,
}

impl BenchmarkReport {
    /// Every row solved and within oracle tolerance.
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.within_tolerance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Table,
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(Format::Table),
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format `{other}` (expected table, json or csv)")),
        }
    }
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6e}"))
}

pub fn emit_report(report: &BenchmarkReport, format: Format) -> Result<String, BenchError> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(report)? + "\n"),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            if report.rows.is_empty() {
                w.write_record(CSV_HEADER)?;
            }
            for row in &report.rows {
                w.serialize(row)?;
            }
            let bytes = w.into_inner().map_err(|e| BenchError::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        Format::Table => {
            let mut out = String::new();
            let _ = writeln!(
                out,
                "{:<26} {:<7} {:<28} {:>14} {:>14} {:>10} {:>12}",
                "problem", "solver", "status", "objective", "violation", "iterations", "oracle_gap"
            );
            for r in &report.rows {
                let _ = writeln!(
                    out,
                    "{:<26} {:<7} {:<28} {:>14} {:>14} {:>10} {:>12}",
                    r.problem,
                    r.solver,
                    r.status,
                    num(r.objective),
                    num(r.violation),
                    r.iterations,
                    num(r.oracle_gap)
                );
            }
            Ok(out)
        }
    }
}

const CSV_HEADER: &[&str] = &[
    "problem",
    "solver",
    "status",
    "objective",
    "violation",
    "iterations",
    "outer_iterations",
    "kkt_residual",
    "complementarity",
    "oracle_objective",
    "oracle_gap",
    "oracle_distance",
    "within_tolerance",
    "message",
    "wall_time_ms",
];

#[cfg(test)]
mod tests {
    use super::*;

    fn row(name: &str) -> ReportRow {
        ReportRow {
            problem: name.into(),
            solver: "coneal".into(),
            status: "solved".into(),
            objective: Some(0.1 + 0.2),
            violation: Some(1e-9),
            iterations: 12,
            outer_iterations: 4,
            kkt_residual: Some(3e-7),
            complementarity: None,
            oracle_objective: Some(0.3),
            oracle_gap: Some(5.551115123125783e-17),
            oracle_distance: None,
            within_tolerance: true,
            message: None,
            wall_time_ms: 1.5,
        }
    }

    #[test]
    fn json_round_trip() {
        let report = BenchmarkReport {
            rows: vec![row("a"), row("b")],
        };
        let text = emit_report(&report, Format::Json).unwrap();
        let back: BenchmarkReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn empty_table_is_header_only() {
        let text = emit_report(&BenchmarkReport::default(), Format::Table).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("problem"));
    }

    #[test]
    fn csv_has_one_line_per_row_plus_header() {
        let report = BenchmarkReport {
            rows: vec![row("a"), row("b"), row("c")],
        };
        let text = emit_report(&report, Format::Csv).unwrap();
        assert_eq!(text.lines().count(), 4);
        let empty = emit_report(&BenchmarkReport::default(), Format::Csv).unwrap();
        assert_eq!(empty.lines().count(), 1);
        assert_eq!(empty.trim_end().split(',').count(), CSV_HEADER.len());
    }

    #[test]
    fn wall_time_is_ignored_in_comparisons() {
        let mut other = row("a");
        other.wall_time_ms = 99.0;
        assert_eq!(row("a"), other);
    }
}
