//! Direct transcription of stage-structured trajectory problems.
//!
//! The decision vector interleaves states and controls,
//! `(X₁, U₁, X₂, U₂, …, X_T)`, so every stage callback sees the contiguous
//! slice `(X_t, U_t)`. The last stage has no control and no dynamics.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::cone::ConeSpec;
use crate::error::{Error, Result};
use crate::fd;
use crate::model::{Dims, ParameterJacobians, ProblemModel};
use crate::par::{map_indexed, Execution};

const FIRST_ORDER_STEP: f64 = 1e-6;
const SECOND_ORDER_STEP: f64 = 1e-4;

/// A vector-valued function of one stage's `(X_t, U_t)` and `θ`.
///
/// Only `out_dim` and `eval` are required; derivatives default to central
/// differences.
pub trait StageFunction: Send + Sync {
    fn out_dim(&self) -> usize;

    fn eval(&self, xu: &[f64], theta: &[f64]) -> DVector<f64>;

    /// `out_dim × len(xu)`.
    fn jacobian(&self, xu: &[f64], theta: &[f64]) -> DMatrix<f64> {
        fd::jacobian(
            Execution::Sequential,
            |v| self.eval(v, theta),
            xu,
            self.out_dim(),
            FIRST_ORDER_STEP,
        )
    }

    /// `out_dim × len(θ)`.
    fn param_jacobian(&self, xu: &[f64], theta: &[f64]) -> DMatrix<f64> {
        fd::jacobian(
            Execution::Sequential,
            |th| self.eval(xu, th),
            theta,
            self.out_dim(),
            FIRST_ORDER_STEP,
        )
    }

    /// Hessian of `wᵀf` with respect to `xu`.
    fn weighted_hessian(&self, xu: &[f64], theta: &[f64], w: &[f64]) -> DMatrix<f64> {
        let wv = DVector::from_column_slice(w);
        fd::hessian(
            Execution::Sequential,
            |v| wv.dot(&self.eval(v, theta)),
            xu,
            SECOND_ORDER_STEP,
        )
    }

    /// `∂²(wᵀf)/∂xu∂θ`, `len(xu) × len(θ)`.
    fn weighted_cross(&self, xu: &[f64], theta: &[f64], w: &[f64]) -> DMatrix<f64> {
        let wv = DVector::from_column_slice(w);
        fd::cross_hessian(
            Execution::Sequential,
            |v, th| wv.dot(&self.eval(v, th)),
            xu,
            theta,
            SECOND_ORDER_STEP,
        )
    }
}

/// `f(xu) = A·xu + b`, independent of `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl LinearMap {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Self {
        assert_eq!(a.nrows(), b.len(), "offset length must match rows");
        Self { a, b }
    }

    /// `X_{t+1} = A X_t + B U_t`.
    pub fn dynamics(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Self {
        let mut m = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
        m.view_mut((0, 0), a.shape()).copy_from(a);
        m.view_mut((0, a.ncols()), b.shape()).copy_from(b);
        Self::new(m, DVector::zeros(a.nrows()))
    }

    /// `(upper − v, v − lower)` for the block `v = xu[range]`; lies in the
    /// nonnegative orthant iff `lower ≤ v ≤ upper`.
    pub fn box_bounds(width: usize, range: Range<usize>, lower: &[f64], upper: &[f64]) -> Self {
        let k = range.len();
        assert!(lower.len() == k && upper.len() == k, "bound length mismatch");
        let mut a = DMatrix::zeros(2 * k, width);
        let mut b = DVector::zeros(2 * k);
        for (i, col) in range.enumerate() {
            a[(i, col)] = -1.0;
            b[i] = upper[i];
            a[(k + i, col)] = 1.0;
            b[k + i] = -lower[i];
        }
        Self::new(a, b)
    }
}

impl StageFunction for LinearMap {
    fn out_dim(&self) -> usize {
        self.a.nrows()
    }
    fn eval(&self, xu: &[f64], _theta: &[f64]) -> DVector<f64> {
        &self.a * DVector::from_column_slice(xu) + &self.b
    }
    fn jacobian(&self, _xu: &[f64], _theta: &[f64]) -> DMatrix<f64> {
        self.a.clone()
    }
    fn param_jacobian(&self, _xu: &[f64], theta: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.out_dim(), theta.len())
    }
    fn weighted_hessian(&self, xu: &[f64], _theta: &[f64], _w: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(xu.len(), xu.len())
    }
    fn weighted_cross(&self, xu: &[f64], theta: &[f64], _w: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(xu.len(), theta.len())
    }
}

/// A weight that is either a constant or an entry of `θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    Fixed(f64),
    Param(usize),
}

impl Weight {
    fn value(self, theta: &[f64]) -> f64 {
        match self {
            Weight::Fixed(w) => w,
            Weight::Param(k) => theta[k],
        }
    }
}

/// `½ Σᵢ wᵢ (xuᵢ − refᵢ)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalCost {
    pub reference: DVector<f64>,
    pub weights: Vec<Weight>,
}

impl DiagonalCost {
    pub fn new(reference: DVector<f64>, weights: Vec<Weight>) -> Self {
        assert_eq!(reference.len(), weights.len(), "one weight per entry");
        Self { reference, weights }
    }

    pub fn fixed(reference: DVector<f64>, weights: &[f64]) -> Self {
        Self::new(reference, weights.iter().map(|&w| Weight::Fixed(w)).collect())
    }
}

impl StageFunction for DiagonalCost {
    fn out_dim(&self) -> usize {
        1
    }
    fn eval(&self, xu: &[f64], theta: &[f64]) -> DVector<f64> {
        let c = self
            .weights
            .iter()
            .enumerate()
            .map(|(i, w)| 0.5 * w.value(theta) * (xu[i] - self.reference[i]).powi(2))
            .sum();
        DVector::from_element(1, c)
    }
    fn jacobian(&self, xu: &[f64], theta: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(1, xu.len(), |_, i| {
            self.weights[i].value(theta) * (xu[i] - self.reference[i])
        })
    }
    fn param_jacobian(&self, xu: &[f64], theta: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(1, theta.len());
        for (i, w) in self.weights.iter().enumerate() {
            if let Weight::Param(k) = *w {
                out[(0, k)] += 0.5 * (xu[i] - self.reference[i]).powi(2);
            }
        }
        out
    }
    fn weighted_hessian(&self, xu: &[f64], theta: &[f64], w: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(xu.len(), xu.len(), |i, j| {
            if i == j {
                w[0] * self.weights[i].value(theta)
            } else {
                0.0
            }
        })
    }
    fn weighted_cross(&self, xu: &[f64], theta: &[f64], w: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(xu.len(), theta.len());
        for (i, wt) in self.weights.iter().enumerate() {
            if let Weight::Param(k) = *wt {
                out[(i, k)] += w[0] * (xu[i] - self.reference[i]);
            }
        }
        out
    }
}

/// A closure stage with finite-difference derivatives.
pub struct FnStage<F> {
    out_dim: usize,
    f: F,
}

impl<F> FnStage<F>
where
    F: Fn(&[f64], &[f64]) -> DVector<f64> + Send + Sync,
{
    pub fn new(out_dim: usize, f: F) -> Self {
        Self { out_dim, f }
    }
}

impl<F> StageFunction for FnStage<F>
where
    F: Fn(&[f64], &[f64]) -> DVector<f64> + Send + Sync,
{
    fn out_dim(&self) -> usize {
        self.out_dim
    }
    fn eval(&self, xu: &[f64], theta: &[f64]) -> DVector<f64> {
        (self.f)(xu, theta)
    }
}

/// One time step. Costs must have `out_dim() == 1`.
pub struct Stage {
    pub state_dim: usize,
    pub control_dim: usize,
    pub cost: Option<Box<dyn StageFunction>>,
    /// `F_t`; required on every stage but the last.
    pub dynamics: Option<Box<dyn StageFunction>>,
    pub equality: Option<Box<dyn StageFunction>>,
    pub cone_constraint: Option<(Box<dyn StageFunction>, ConeSpec)>,
}

impl Stage {
    pub fn new(state_dim: usize, control_dim: usize) -> Self {
        Self {
            state_dim,
            control_dim,
            cost: None,
            dynamics: None,
            equality: None,
            cone_constraint: None,
        }
    }

    pub fn with_cost(mut self, f: impl StageFunction + 'static) -> Self {
        self.cost = Some(Box::new(f));
        self
    }

    pub fn with_dynamics(mut self, f: impl StageFunction + 'static) -> Self {
        self.dynamics = Some(Box::new(f));
        self
    }

    pub fn with_equality(mut self, f: impl StageFunction + 'static) -> Self {
        self.equality = Some(Box::new(f));
        self
    }

    pub fn with_cone(mut self, f: impl StageFunction + 'static, cone: ConeSpec) -> Self {
        self.cone_constraint = Some((Box::new(f), cone));
        self
    }

    fn width(&self) -> usize {
        self.state_dim + self.control_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// `X₁ − x_init = 0`.
    Fixed(DVector<f64>),
    Free,
    /// `X₁ − θ[offset..offset + n₁] = 0`.
    Parameter { offset: usize },
}

pub struct TrajectoryProblem {
    pub stages: Vec<Stage>,
    pub initial: InitialState,
    /// Length of the shared `θ`.
    pub param_dim: usize,
}

impl TrajectoryProblem {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }
}

/// Where each stage lives inside `x`, `g` and `h`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMap {
    pub states: Vec<Range<usize>>,
    pub controls: Vec<Range<usize>>,
    /// Defect rows `F_t − X_{t+1}` in `g`, `t = 1..T−1`.
    pub dynamics: Vec<Range<usize>>,
    /// `E_t` rows in `g` (possibly empty).
    pub equalities: Vec<Range<usize>>,
    /// Initial-state rows in `g` (empty when the initial state is free).
    pub initial: Range<usize>,
    /// `H_t` rows in `h` (possibly empty).
    pub cones: Vec<Range<usize>>,
    pub dims: Dims,
}

impl IndexMap {
    /// `(X_t, U_t)` columns of stage `t`.
    pub fn stage(&self, t: usize) -> Range<usize> {
        self.states[t].start..self.controls[t].end
    }
}

fn stage_err(t: usize, what: &str, expected: usize, got: usize) -> Error {
    Error::InvalidDimension {
        what: format!("stage {t}: {what}"),
        expected,
        got,
    }
}

fn build_map(traj: &TrajectoryProblem) -> Result<(IndexMap, ConeSpec)> {
    let horizon = traj.stages.len();
    if horizon == 0 {
        return Err(Error::dim("horizon", 1, 0));
    }
    let mut states = Vec::with_capacity(horizon);
    let mut controls = Vec::with_capacity(horizon);
    let mut col = 0;
    for (t, stage) in traj.stages.iter().enumerate() {
        let last = t + 1 == horizon;
        if last && stage.control_dim != 0 {
            return Err(stage_err(t, "terminal control dimension", 0, stage.control_dim));
        }
        states.push(col..col + stage.state_dim);
        col += stage.state_dim;
        controls.push(col..col + stage.control_dim);
        col += stage.control_dim;
        if let Some(cost) = &stage.cost {
            if cost.out_dim() != 1 {
                return Err(stage_err(t, "cost output", 1, cost.out_dim()));
            }
        }
        match (&stage.dynamics, last) {
            (Some(f), false) => {
                let next = traj.stages[t + 1].state_dim;
                if f.out_dim() != next {
                    return Err(stage_err(t, "dynamics output", next, f.out_dim()));
                }
            }
            (None, false) => return Err(stage_err(t, "dynamics blocks", 1, 0)),
            (Some(_), true) => return Err(stage_err(t, "terminal dynamics blocks", 0, 1)),
            (None, true) => {}
        }
        if let Some((f, cone)) = &stage.cone_constraint {
            if f.out_dim() != cone.total_dim() {
                return Err(stage_err(t, "cone constraint output", cone.total_dim(), f.out_dim()));
            }
        }
    }
    let n = col;

    let mut row = 0;
    let mut dynamics = Vec::new();
    for stage in &traj.stages[..horizon - 1] {
        let k = stage.dynamics.as_ref().map_or(0, |f| f.out_dim());
        dynamics.push(row..row + k);
        row += k;
    }
    let mut equalities = Vec::with_capacity(horizon);
    for stage in &traj.stages {
        let k = stage.equality.as_ref().map_or(0, |f| f.out_dim());
        equalities.push(row..row + k);
        row += k;
    }
    let n1 = traj.stages[0].state_dim;
    let init_rows = match &traj.initial {
        InitialState::Fixed(v) => {
            if v.len() != n1 {
                return Err(stage_err(0, "initial state", n1, v.len()));
            }
            n1
        }
        InitialState::Free => 0,
        InitialState::Parameter { offset } => {
            if offset + n1 > traj.param_dim {
                return Err(stage_err(0, "initial state parameter slice end", traj.param_dim, offset + n1));
            }
            n1
        }
    };
    let initial = row..row + init_rows;
    row += init_rows;
    let m = row;

    let mut cones = Vec::with_capacity(horizon);
    let mut specs = Vec::new();
    let mut hrow = 0;
    for stage in &traj.stages {
        let k = stage.cone_constraint.as_ref().map_or(0, |(f, _)| f.out_dim());
        cones.push(hrow..hrow + k);
        hrow += k;
        if let Some((_, spec)) = &stage.cone_constraint {
            specs.push(spec);
        }
    }
    let cone = ConeSpec::concat(specs);
    let map = IndexMap {
        states,
        controls,
        dynamics,
        equalities,
        initial,
        cones,
        dims: Dims::new(n, m, hrow, traj.param_dim),
    };
    Ok((map, cone))
}

/// A trajectory problem seen as a [`ProblemModel`].
pub struct TranscribedModel {
    problem: TrajectoryProblem,
    map: IndexMap,
    cone: ConeSpec,
    execution: Execution,
}

impl TranscribedModel {
    pub fn problem(&self) -> &TrajectoryProblem {
        &self.problem
    }

    pub fn index_map(&self) -> &IndexMap {
        &self.map
    }

    /// Evaluate stage callbacks sequentially or across threads.
    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    fn per_stage<R: Send>(&self, f: impl Fn(usize, &Stage, &[f64]) -> R + Sync, x: &[f64]) -> Vec<R> {
        map_indexed(self.execution, self.problem.stages.len(), |t| {
            f(t, &self.problem.stages[t], &x[self.map.stage(t)])
        })
    }
}

/// Build the stacked model and its index map.
pub fn transcribe(traj: TrajectoryProblem) -> Result<(TranscribedModel, IndexMap)> {
    let (map, cone) = build_map(&traj)?;
    let model = TranscribedModel {
        problem: traj,
        map: map.clone(),
        cone,
        execution: Execution::default(),
    };
    Ok((model, map))
}

fn place(out: &mut DMatrix<f64>, rows: Range<usize>, col: usize, block: &DMatrix<f64>) {
    if !rows.is_empty() && block.ncols() > 0 {
        out.view_mut((rows.start, col), (rows.len(), block.ncols()))
            .copy_from(block);
    }
}

impl ProblemModel for TranscribedModel {
    fn dims(&self) -> Dims {
        self.map.dims
    }

    fn cone(&self) -> &ConeSpec {
        &self.cone
    }

    fn objective(&self, x: &[f64], theta: &[f64]) -> f64 {
        self.per_stage(
            |_, st, xu| st.cost.as_ref().map_or(0.0, |c| c.eval(xu, theta)[0]),
            x,
        )
        .into_iter()
        .sum()
    }

    fn objective_gradient(&self, x: &[f64], theta: &[f64]) -> DVector<f64> {
        let grads = self.per_stage(|_, st, xu| st.cost.as_ref().map(|c| c.jacobian(xu, theta)), x);
        let mut out = DVector::zeros(self.map.dims.n);
        for (t, grad) in grads.into_iter().enumerate() {
            if let Some(gr) = grad {
                let r = self.map.stage(t);
                out.rows_mut(r.start, r.len()).copy_from(&gr.transpose());
            }
        }
        out
    }

    fn equality(&self, x: &[f64], theta: &[f64]) -> DVector<f64> {
        let vals = self.per_stage(
            |_, st, xu| {
                (
                    st.dynamics.as_ref().map(|f| f.eval(xu, theta)),
                    st.equality.as_ref().map(|f| f.eval(xu, theta)),
                )
            },
            x,
        );
        let mut g = DVector::zeros(self.map.dims.m);
        for (t, (dynamics, equality)) in vals.into_iter().enumerate() {
            if let Some(f) = dynamics {
                let rows = self.map.dynamics[t].clone();
                let next = &x[self.map.states[t + 1].clone()];
                let defect = f - DVector::from_column_slice(next);
                g.rows_mut(rows.start, rows.len()).copy_from(&defect);
            }
            if let Some(e) = equality {
                let rows = self.map.equalities[t].clone();
                g.rows_mut(rows.start, rows.len()).copy_from(&e);
            }
        }
        let rows = self.map.initial.clone();
        let x1 = &x[self.map.states[0].clone()];
        match &self.problem.initial {
            InitialState::Fixed(v) => {
                for (k, i) in rows.enumerate() {
                    g[i] = x1[k] - v[k];
                }
            }
            InitialState::Parameter { offset } => {
                for (k, i) in rows.enumerate() {
                    g[i] = x1[k] - theta[offset + k];
                }
            }
            InitialState::Free => {}
        }
        g
    }

    fn equality_jacobian(&self, x: &[f64], theta: &[f64]) -> DMatrix<f64> {
        let jacs = self.per_stage(
            |_, st, xu| {
                (
                    st.dynamics.as_ref().map(|f| f.jacobian(xu, theta)),
                    st.equality.as_ref().map(|f| f.jacobian(xu, theta)),
                )
            },
            x,
        );
        let Dims { n, m, .. } = self.map.dims;
        let mut out = DMatrix::zeros(m, n);
        for (t, (dynamics, equality)) in jacs.into_iter().enumerate() {
            let col = self.map.stage(t).start;
            if let Some(j) = dynamics {
                let rows = self.map.dynamics[t].clone();
                place(&mut out, rows.clone(), col, &j);
                for (k, i) in rows.enumerate() {
                    out[(i, self.map.states[t + 1].start + k)] -= 1.0;
                }
            }
            if let Some(j) = equality {
                place(&mut out, self.map.equalities[t].clone(), col, &j);
            }
        }
        for (k, i) in self.map.initial.clone().enumerate() {
            out[(i, self.map.states[0].start + k)] = 1.0;
        }
        out
    }

    fn cone_constraint(&self, x: &[f64], theta: &[f64]) -> DVector<f64> {
        let vals = self.per_stage(
            |_, st, xu| st.cone_constraint.as_ref().map(|(f, _)| f.eval(xu, theta)),
            x,
        );
        let mut h = DVector::zeros(self.map.dims.p);
        for (t, v) in vals.into_iter().enumerate() {
            if let Some(v) = v {
                let rows = self.map.cones[t].clone();
                h.rows_mut(rows.start, rows.len()).copy_from(&v);
            }
        }
        h
    }

    fn cone_jacobian(&self, x: &[f64], theta: &[f64]) -> DMatrix<f64> {
        let jacs = self.per_stage(
            |_, st, xu| st.cone_constraint.as_ref().map(|(f, _)| f.jacobian(xu, theta)),
            x,
        );
        let Dims { n, p, .. } = self.map.dims;
        let mut out = DMatrix::zeros(p, n);
        for (t, j) in jacs.into_iter().enumerate() {
            if let Some(j) = j {
                place(&mut out, self.map.cones[t].clone(), self.map.stage(t).start, &j);
            }
        }
        out
    }

    fn lagrangian_hessian(&self, x: &[f64], theta: &[f64], y: &[f64], z: &[f64]) -> DMatrix<f64> {
        let blocks = self.per_stage(
            |t, st, xu| {
                let w = xu.len();
                let mut hess = DMatrix::zeros(w, w);
                if let Some(c) = &st.cost {
                    hess += c.weighted_hessian(xu, theta, &[1.0]);
                }
                if let Some(f) = &st.dynamics {
                    hess += f.weighted_hessian(xu, theta, &y[self.map.dynamics[t].clone()]);
                }
                if let Some(f) = &st.equality {
                    hess += f.weighted_hessian(xu, theta, &y[self.map.equalities[t].clone()]);
                }
                if let Some((f, _)) = &st.cone_constraint {
                    hess += f.weighted_hessian(xu, theta, &z[self.map.cones[t].clone()]);
                }
                hess
            },
            x,
        );
        let n = self.map.dims.n;
        let mut out = DMatrix::zeros(n, n);
        for (t, block) in blocks.into_iter().enumerate() {
            let s = self.map.stage(t).start;
            if block.nrows() > 0 {
                out.view_mut((s, s), block.shape()).copy_from(&block);
            }
        }
        out
    }

    fn parameter_jacobians(&self, x: &[f64], theta: &[f64], y: &[f64], z: &[f64]) -> ParameterJacobians {
        let d = theta.len();
        let blocks = self.per_stage(
            |t, st, xu| {
                let mut cross = DMatrix::zeros(xu.len(), d);
                if let Some(c) = &st.cost {
                    cross += c.weighted_cross(xu, theta, &[1.0]);
                }
                let mut dyn_theta = None;
                if let Some(f) = &st.dynamics {
                    cross += f.weighted_cross(xu, theta, &y[self.map.dynamics[t].clone()]);
                    dyn_theta = Some(f.param_jacobian(xu, theta));
                }
                let mut eq_theta = None;
                if let Some(f) = &st.equality {
                    cross += f.weighted_cross(xu, theta, &y[self.map.equalities[t].clone()]);
                    eq_theta = Some(f.param_jacobian(xu, theta));
                }
                let mut cone_theta = None;
                if let Some((f, _)) = &st.cone_constraint {
                    cross += f.weighted_cross(xu, theta, &z[self.map.cones[t].clone()]);
                    cone_theta = Some(f.param_jacobian(xu, theta));
                }
                (cross, dyn_theta, eq_theta, cone_theta)
            },
            x,
        );
        let mut out = ParameterJacobians::zeros(self.map.dims);
        for (t, (cross, dyn_theta, eq_theta, cone_theta)) in blocks.into_iter().enumerate() {
            place(&mut out.l_xtheta, self.map.stage(t), 0, &cross);
            if let Some(b) = dyn_theta {
                place(&mut out.g_theta, self.map.dynamics[t].clone(), 0, &b);
            }
            if let Some(b) = eq_theta {
                place(&mut out.g_theta, self.map.equalities[t].clone(), 0, &b);
            }
            if let Some(b) = cone_theta {
                place(&mut out.h_theta, self.map.cones[t].clone(), 0, &b);
            }
        }
        if let InitialState::Parameter { offset } = self.problem.initial {
            for (k, i) in self.map.initial.clone().enumerate() {
                out.g_theta[(i, offset + k)] = -1.0;
            }
        }
        out
    }
}

/// Split a stacked decision vector into states and controls (the terminal
/// stage contributes no control).
pub fn extract_trajectory(x: &[f64], map: &IndexMap) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    crate::error::check_len("decision vector", map.dims.n, x.len())?;
    let states = map
        .states
        .iter()
        .map(|r| DVector::from_column_slice(&x[r.clone()]))
        .collect();
    let horizon = map.controls.len();
    let controls = map.controls[..horizon - 1]
        .iter()
        .map(|r| DVector::from_column_slice(&x[r.clone()]))
        .collect();
    Ok((states, controls))
}

/// Inverse of [`extract_trajectory`].
pub fn stack_trajectory(states: &[DVector<f64>], controls: &[DVector<f64>], map: &IndexMap) -> Result<DVector<f64>> {
    crate::error::check_len("states", map.states.len(), states.len())?;
    crate::error::check_len("controls", map.controls.len() - 1, controls.len())?;
    let mut x = DVector::zeros(map.dims.n);
    for (t, s) in states.iter().enumerate() {
        let r = map.states[t].clone();
        crate::error::check_len(&format!("state {t}"), r.len(), s.len())?;
        x.rows_mut(r.start, r.len()).copy_from(s);
    }
    for (t, u) in controls.iter().enumerate() {
        let r = map.controls[t].clone();
        crate::error::check_len(&format!("control {t}"), r.len(), u.len())?;
        x.rows_mut(r.start, r.len()).copy_from(u);
    }
    Ok(x)
}

/// Simulate `X_{t+1} = F_t(X_t, U_t)` from `x1`.
pub fn dynamics_rollout(
    traj: &TrajectoryProblem,
    x1: &DVector<f64>,
    controls: &[DVector<f64>],
    theta: &[f64],
) -> Result<Vec<DVector<f64>>> {
    let horizon = traj.stages.len();
    crate::error::check_len("controls", horizon.saturating_sub(1), controls.len())?;
    crate::error::check_len("initial state", traj.stages.first().map_or(0, |s| s.state_dim), x1.len())?;
    let mut states = vec![x1.clone()];
    for (t, u) in controls.iter().enumerate() {
        let stage = &traj.stages[t];
        if u.len() != stage.control_dim {
            return Err(stage_err(t, "control", stage.control_dim, u.len()));
        }
        let f = stage
            .dynamics
            .as_ref()
            .ok_or_else(|| stage_err(t, "dynamics blocks", 1, 0))?;
        let mut xu = Vec::with_capacity(stage.width());
        xu.extend_from_slice(states[t].as_slice());
        xu.extend_from_slice(u.as_slice());
        let next = f.eval(&xu, theta);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure(format!("non-finite state after stage {t}")));
        }
        states.push(next);
    }
    Ok(states)
}
