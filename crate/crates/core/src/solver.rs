//! Outer augmented-Lagrangian / barrier loop around Newton inner iterations
//! with a cone fraction-to-the-boundary rule and a filter line search.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::cone::{barrier_value, cone_product, cone_target, in_cone, interior_initialization, max_step_to_boundary, ConeSpec};
use crate::error::{Error, Result};
use crate::kkt::{direction_from_cache, residual_from_cache, KktPoint, LinearSolverOptions, SolverPoint};
use crate::linsolve::RegularizationState;
use crate::model::{check_inputs, evaluate, Dims, ProblemModel};
use crate::sensitivity::{differentiate, SensitivityResult};

pub use crate::kkt::OuterState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Final tolerance `γ_R` on the unrelaxed KKT residual.
    pub tol: f64,
    /// Subproblems stop once `‖R‖∞ ≤ γ_κ κ`.
    pub subproblem_tol_factor: f64,
    pub kappa_init: f64,
    pub rho_init: f64,
    pub kappa_min: f64,
    /// `ψ_κ` in `κ ← max(κ_min, min(ψ_κ κ, κ^ζ_κ))`.
    pub kappa_decrease: f64,
    /// `ζ_κ`.
    pub kappa_exponent: f64,
    /// `φ_ρ` in `ρ ← min(ρ_max, max(φ_ρ ρ, 1/κ))`.
    pub rho_increase: f64,
    pub rho_max: f64,
    /// Floor of the fraction-to-the-boundary factor `τ = max(τ_min, 1 − κ)`.
    pub tau_min: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    pub max_total: usize,
    pub min_step: f64,
    /// Slack used when pushing `h(x₀)` into the cone interior.
    pub interior_margin: f64,
    pub linear: LinearSolverOptions,
    pub record_trace: bool,
    /// Compute `∂w/∂θ` after a successful solve.
    pub differentiate: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            subproblem_tol_factor: 1e-2,
            kappa_init: 1.0,
            rho_init: 1.0,
            kappa_min: 1e-8,
            kappa_decrease: 0.2,
            kappa_exponent: 1.2,
            rho_increase: 10.0,
            rho_max: 1e8,
            tau_min: 0.99,
            max_inner: 1000,
            max_outer: 200,
            max_total: 1000,
            min_step: 1e-12,
            interior_margin: 1.0,
            linear: LinearSolverOptions::default(),
            record_trace: false,
            differentiate: false,
        }
    }
}

impl SolverOptions {
    /// `κ_min` actually used: the complementarity products settle near `κ`,
    /// so it is kept two orders below the final tolerance.
    pub fn effective_kappa_min(&self) -> f64 {
        self.kappa_min.min(0.01 * self.tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Solved,
    MaxIterations,
    LineSearchFailure,
    InertiaCorrectionFailure,
    NumericalFailure,
}

impl Status {
    fn from_error(err: &Error) -> Self {
        match err {
            Error::LineSearchFailure { .. } => Status::LineSearchFailure,
            Error::InertiaCorrectionFailure { .. } => Status::InertiaCorrectionFailure,
            _ => Status::NumericalFailure,
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Status::Solved => "solved",
            Status::MaxIterations => "max_iterations",
            Status::LineSearchFailure => "line_search_failure",
            Status::InertiaCorrectionFailure => "inertia_correction_failure",
            Status::NumericalFailure => "numerical_failure",
        };
        f.write_str(s)
    }
}

/// One row of the per-iteration trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub outer_iteration: usize,
    pub residual_norm: f64,
    pub merit: f64,
    pub violation: f64,
    pub alpha: f64,
    pub alpha_t: f64,
    pub eps_p: f64,
    pub eps_d: f64,
    pub kappa: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub point: SolverPoint,
    pub status: Status,
    pub objective: f64,
    pub violation: f64,
    /// Max-norm of the unrelaxed KKT residual at `point`.
    pub kkt_residual: f64,
    /// `‖s ∘ t‖∞`.
    pub complementarity: f64,
    pub total_iterations: usize,
    pub outer_iterations: usize,
    /// Outer state at termination; sensitivities are taken with respect to
    /// the subproblem it defines.
    pub outer: OuterState,
    /// Some accepted direction needed dual regularization.
    pub dual_regularization_used: bool,
    pub max_eps_p: f64,
    pub message: Option<String>,
    pub trace: Vec<TraceRecord>,
    pub sensitivity: Option<SensitivityResult>,
}

impl Solution {
    pub fn kappa(&self) -> f64 {
        self.outer.kappa
    }
    pub fn rho(&self) -> f64 {
        self.outer.rho
    }
}

/// Pairs `(merit, violation)` accepted during the current subproblem.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Filter {
    entries: Vec<(f64, f64)>,
}

impl Filter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Some entry is at least as good in both components. Differences at
    /// roundoff level do not count as worse.
    pub fn dominates(&self, merit: f64, violation: f64) -> bool {
        self.entries
            .iter()
            .any(|&(phi, eta)| !roundoff_le(merit, phi, merit) && !roundoff_le(violation, eta, violation))
    }

    /// Insert a pair, dropping entries it dominates.
    pub fn add(&mut self, merit: f64, violation: f64) {
        if self.dominates(merit, violation) {
            return;
        }
        self.entries
            .retain(|&(phi, eta)| !(merit <= phi && violation <= eta));
        self.entries.push((merit, violation));
    }
}

/// `a ≤ b` up to a few ulps of `base`.
fn roundoff_le(a: f64, b: f64, base: f64) -> bool {
    a - b <= 10.0 * f64::EPSILON * base.abs()
}

/// `(c, g, h)` at `x`.
fn values(model: &dyn ProblemModel, x: &[f64], theta: &[f64]) -> Option<(f64, DVector<f64>, DVector<f64>)> {
    let c = model.objective(x, theta);
    let g = model.equality(x, theta);
    let h = model.cone_constraint(x, theta);
    let finite = c.is_finite() && g.iter().chain(h.iter()).all(|v| v.is_finite());
    finite.then_some((c, g, h))
}

fn merit_value(c: f64, point_r: &DVector<f64>, s: &DVector<f64>, outer: &OuterState, cone: &ConeSpec) -> Result<f64> {
    let mut phi = c + outer.lambda.dot(point_r) + 0.5 * outer.rho * point_r.norm_squared();
    if !cone.is_empty() {
        phi -= outer.kappa * barrier_value(s.as_slice(), cone)?;
    }
    Ok(phi)
}

fn violation_value(g: &DVector<f64>, h: &DVector<f64>, r: &DVector<f64>, s: &DVector<f64>) -> f64 {
    let count = g.len() + h.len();
    if count == 0 {
        return 0.0;
    }
    let total: f64 = (g - r).iter().chain((h - s).iter()).map(|v| v.abs()).sum();
    total / count as f64
}

/// `c(x) + λᵀr + (ρ/2)‖r‖² − κ·barrier(s)`.
pub fn merit(model: &dyn ProblemModel, point: &SolverPoint, theta: &[f64], outer: &OuterState) -> Result<f64> {
    check_inputs(model, point.x.as_slice(), theta)?;
    let c = model.objective(point.x.as_slice(), theta);
    merit_value(c, &point.r, &point.s, outer, model.cone())
}

/// `‖(g − r, h − s)‖₁ / (m + p)`, zero when there are no constraints.
pub fn violation(model: &dyn ProblemModel, point: &SolverPoint, theta: &[f64]) -> Result<f64> {
    check_inputs(model, point.x.as_slice(), theta)?;
    let g = model.equality(point.x.as_slice(), theta);
    let h = model.cone_constraint(point.x.as_slice(), theta);
    Ok(violation_value(&g, &h, &point.r, &point.s))
}

/// Fraction-to-the-boundary step sizes: `α` for `(x, r, s, y, z)` from the
/// slack `s`, and a separate `α_t` for `t`.
pub fn cone_line_search(point: &SolverPoint, direction: &SolverPoint, tau: f64, cone: &ConeSpec) -> Result<(f64, f64)> {
    let alpha = max_step_to_boundary(point.s.as_slice(), direction.s.as_slice(), tau, cone)?;
    let alpha_t = max_step_to_boundary(point.t.as_slice(), direction.t.as_slice(), tau, cone)?;
    Ok((alpha.min(1.0), alpha_t.min(1.0)))
}

/// Outcome of an accepted line search.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceptedStep {
    pub point: SolverPoint,
    pub alpha: f64,
    pub alpha_t: f64,
    pub merit: f64,
    pub violation: f64,
}

/// Backtrack from the cone step until the filter accepts the candidate.
#[allow(clippy::too_many_arguments)]
pub fn filter_step(
    model: &dyn ProblemModel,
    point: &SolverPoint,
    direction: &SolverPoint,
    theta: &[f64],
    outer: &OuterState,
    filter: &mut Filter,
    opts: &SolverOptions,
) -> Result<AcceptedStep> {
    let cone = model.cone();
    let (c, g, h) = values(model, point.x.as_slice(), theta).ok_or(Error::EvaluationFailure {
        callback: "objective/equality/cone_constraint",
    })?;
    let phi = merit_value(c, &point.r, &point.s, outer, cone)?;
    let eta = violation_value(&g, &h, &point.r, &point.s);

    // The acceptance tests tolerate roundoff, which a null step would pass.
    if direction.to_vector().amax() == 0.0 {
        return Err(Error::LineSearchFailure {
            min_step: opts.min_step,
        });
    }
    let tau = opts.tau_min.max(1.0 - outer.kappa);
    let (mut alpha, alpha_t) = cone_line_search(point, direction, tau, cone)?;
    while alpha >= opts.min_step {
        let x = &point.x + &direction.x * alpha;
        let r = &point.r + &direction.r * alpha;
        let s = &point.s + &direction.s * alpha;
        if let Some((c_hat, g_hat, h_hat)) = values(model, x.as_slice(), theta) {
            if let Ok(phi_hat) = merit_value(c_hat, &r, &s, outer, cone) {
                let eta_hat = violation_value(&g_hat, &h_hat, &r, &s);
                let improves =
                    roundoff_le(phi_hat, phi - 1e-8 * eta, phi) || roundoff_le(eta_hat, (1.0 - 1e-8) * eta, eta);
                if improves && !filter.dominates(phi_hat, eta_hat) {
                    filter.add(phi_hat, eta_hat);
                    let next = SolverPoint {
                        x,
                        r,
                        s,
                        y: &point.y + &direction.y * alpha,
                        z: &point.z + &direction.z * alpha,
                        t: &point.t + &direction.t * alpha_t,
                    };
                    return Ok(AcceptedStep {
                        point: next,
                        alpha,
                        alpha_t,
                        merit: phi_hat,
                        violation: eta_hat,
                    });
                }
            }
        }
        alpha *= 0.5;
    }
    Err(Error::LineSearchFailure {
        min_step: opts.min_step,
    })
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// `‖R‖∞ ≤ γ_κ κ`.
pub fn subproblem_converged(residual: &DVector<f64>, kappa: f64, factor: f64) -> bool {
    inf_norm(residual) <= factor * kappa
}

/// Components of the unrelaxed KKT residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktError {
    pub stationarity: f64,
    pub dual_cone: f64,
    pub equality: f64,
    pub cone: f64,
    pub complementarity: f64,
    pub slack: f64,
}

impl KktError {
    pub fn max(&self) -> f64 {
        [
            self.stationarity,
            self.dual_cone,
            self.equality,
            self.cone,
            self.complementarity,
            self.slack,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn kkt_error_from(
    cache: &crate::model::EvaluationCache,
    point: &SolverPoint,
    cone: &ConeSpec,
) -> KktError {
    let unrelaxed = OuterState {
        lambda: point.y.clone(),
        rho: 0.0,
        kappa: 0.0,
    };
    let rows = residual_from_cache(cache, point, &unrelaxed, cone);
    let l = point.layout();
    let part = |r: std::ops::Range<usize>| inf_norm(&rows.rows(r.start, r.len()).into_owned());
    KktError {
        stationarity: part(l.x()),
        dual_cone: part(l.s()),
        equality: part(l.y()),
        cone: part(l.z()),
        complementarity: part(l.t()),
        slack: inf_norm(&point.r),
    }
}

/// Unrelaxed KKT residual of the original problem at `point`.
pub fn kkt_error(model: &dyn ProblemModel, point: &SolverPoint, theta: &[f64]) -> Result<KktError> {
    let cache = evaluate(model, point.x.as_slice(), theta, point.y.as_slice(), point.z.as_slice())?;
    Ok(kkt_error_from(&cache, point, model.cone()))
}

/// The original problem's KKT conditions hold to `opts.tol`.
pub fn solution_converged(model: &dyn ProblemModel, point: &SolverPoint, theta: &[f64], opts: &SolverOptions) -> bool {
    kkt_error(model, point, theta).is_ok_and(|e| e.max() <= opts.tol)
}

/// `λ ← y`, then decrease `κ` and increase `ρ` with clipping.
pub fn outer_update(outer: &OuterState, point: &SolverPoint, opts: &SolverOptions) -> OuterState {
    let kappa = opts
        .effective_kappa_min()
        .max((opts.kappa_decrease * outer.kappa).min(outer.kappa.powf(opts.kappa_exponent)));
    let rho = opts.rho_max.min((opts.rho_increase * outer.rho).max(1.0 / kappa));
    OuterState {
        lambda: point.y.clone(),
        rho,
        kappa,
    }
}

/// Initial primal-dual point for `x0`.
pub fn initial_point(model: &dyn ProblemModel, x0: &[f64], theta: &[f64], opts: &SolverOptions) -> Result<SolverPoint> {
    check_inputs(model, x0, theta)?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("initial point is not finite".into()));
    }
    let Dims { m, p, .. } = model.dims();
    let (_, g, h) = values(model, x0, theta).ok_or(Error::EvaluationFailure {
        callback: "objective/equality/cone_constraint",
    })?;
    crate::error::check_len("equality", m, g.len())?;
    crate::error::check_len("cone_constraint", p, h.len())?;
    Ok(SolverPoint {
        x: DVector::from_column_slice(x0),
        r: g,
        s: interior_initialization(h.as_slice(), model.cone(), opts.interior_margin),
        y: DVector::zeros(m),
        z: DVector::zeros(p),
        t: cone_target(model.cone()),
    })
}

struct Run<'a> {
    model: &'a dyn ProblemModel,
    theta: &'a [f64],
    opts: &'a SolverOptions,
    point: SolverPoint,
    outer: OuterState,
    reg: RegularizationState,
    total: usize,
    outer_iterations: usize,
    dual_reg_used: bool,
    max_eps_p: f64,
    trace: Vec<TraceRecord>,
}

impl Run<'_> {
    fn finish(self, status: Status, message: Option<String>) -> Solution {
        let cone = self.model.cone();
        let x = self.point.x.as_slice();
        let (objective, violation) = match values(self.model, x, self.theta) {
            Some((c, g, h)) => (c, violation_value(&g, &h, &self.point.r, &self.point.s)),
            None => (f64::NAN, f64::NAN),
        };
        let kkt_residual = kkt_error(self.model, &self.point, self.theta)
            .map(|e| e.max())
            .unwrap_or(f64::INFINITY);
        let complementarity = cone_product(self.point.s.as_slice(), self.point.t.as_slice(), cone)
            .map(|v| inf_norm(&v))
            .unwrap_or(f64::INFINITY);
        let mut solution = Solution {
            point: self.point,
            status,
            objective,
            violation,
            kkt_residual,
            complementarity,
            total_iterations: self.total,
            outer_iterations: self.outer_iterations,
            outer: self.outer,
            dual_regularization_used: self.dual_reg_used,
            max_eps_p: self.max_eps_p,
            message,
            trace: self.trace,
            sensitivity: None,
        };
        if status == Status::Solved && self.opts.differentiate {
            match differentiate(self.model, &solution, self.theta) {
                Ok(sens) => solution.sensitivity = Some(sens),
                Err(e) => solution.message = Some(format!("sensitivity failed: {e}")),
            }
        }
        solution
    }

    fn step(&mut self, filter: &mut Filter) -> std::result::Result<StepOutcome, Error> {
        let cone = self.model.cone();
        let cache = evaluate(
            self.model,
            self.point.x.as_slice(),
            self.theta,
            self.point.y.as_slice(),
            self.point.z.as_slice(),
        )?;
        if kkt_error_from(&cache, &self.point, cone).max() <= self.opts.tol {
            return Ok(StepOutcome::Solved);
        }
        let rows = residual_from_cache(&cache, &self.point, &self.outer, cone);
        if subproblem_converged(&rows, self.outer.kappa, self.opts.subproblem_tol_factor) {
            return Ok(StepOutcome::SubproblemDone);
        }
        if self.total >= self.opts.max_total {
            return Ok(StepOutcome::Budget);
        }
        let kp = KktPoint {
            cache: &cache,
            point: &self.point,
            outer: &self.outer,
            cone,
        };
        let (direction, info) = direction_from_cache(&kp, &rows, &self.reg, &self.opts.linear)?;
        self.reg = info.reg;
        self.dual_reg_used |= info.reg.eps_d > 0.0;
        self.max_eps_p = self.max_eps_p.max(info.reg.eps_p);
        let accepted = filter_step(
            self.model,
            &self.point,
            &direction,
            self.theta,
            &self.outer,
            filter,
            self.opts,
        )?;
        debug_assert!(in_cone(accepted.point.s.as_slice(), cone, true).unwrap_or(false));
        debug_assert!(in_cone(accepted.point.t.as_slice(), cone, true).unwrap_or(false));
        self.total += 1;
        if self.opts.record_trace {
            self.trace.push(TraceRecord {
                iteration: self.total,
                outer_iteration: self.outer_iterations,
                residual_norm: inf_norm(&rows),
                merit: accepted.merit,
                violation: accepted.violation,
                alpha: accepted.alpha,
                alpha_t: accepted.alpha_t,
                eps_p: info.reg.eps_p,
                eps_d: info.reg.eps_d,
                kappa: self.outer.kappa,
                rho: self.outer.rho,
            });
        }
        self.point = accepted.point;
        Ok(StepOutcome::Continue)
    }
}

enum StepOutcome {
    Continue,
    SubproblemDone,
    Solved,
    Budget,
}

/// Solve `minimize c(x; θ) s.t. g(x; θ) = 0, h(x; θ) ∈ K` from `x0`.
///
/// Returns `Err` only for malformed input (dimension mismatch, non-finite
/// `x0`, callbacks failing at `x0`); every failure during iteration is
/// reported through [`Solution::status`].
pub fn solve(model: &dyn ProblemModel, x0: &[f64], theta: &[f64], opts: &SolverOptions) -> Result<Solution> {
    let point = initial_point(model, x0, theta, opts)?;
    let mut outer = OuterState::initial(model.dims().m);
    outer.kappa = opts.kappa_init;
    outer.rho = opts.rho_init;
    let mut run = Run {
        model,
        theta,
        opts,
        point,
        outer,
        reg: RegularizationState::default(),
        total: 0,
        outer_iterations: 0,
        dual_reg_used: false,
        max_eps_p: 0.0,
        trace: Vec::new(),
    };
    let mut filter = Filter::new();
    let mut inner = 0;
    loop {
        match run.step(&mut filter) {
            Ok(StepOutcome::Solved) => return Ok(run.finish(Status::Solved, None)),
            Ok(StepOutcome::Budget) => {
                return Ok(run.finish(Status::MaxIterations, Some("iteration budget exhausted".into())))
            }
            Ok(StepOutcome::SubproblemDone) => {
                run.outer = outer_update(&run.outer, &run.point, opts);
                run.outer_iterations += 1;
                filter.clear();
                inner = 0;
                if run.outer_iterations > opts.max_outer {
                    return Ok(run.finish(Status::MaxIterations, Some("outer iteration budget exhausted".into())));
                }
            }
            Ok(StepOutcome::Continue) => {
                inner += 1;
                if inner > opts.max_inner {
                    return Ok(run.finish(Status::MaxIterations, Some("inner iteration budget exhausted".into())));
                }
            }
            Err(e) => {
                let status = Status::from_error(&e);
                return Ok(run.finish(status, Some(e.to_string())));
            }
        }
    }
}
