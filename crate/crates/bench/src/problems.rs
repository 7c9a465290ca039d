//! Registry of small benchmark problems, each paired with a reference
//! solution computed without the solver (closed form or branch enumeration).

use coneal::model::{Dims, ParameterJacobians, ProblemModel};
use coneal::trajopt::{
    transcribe, DiagonalCost, IndexMap, InitialState, LinearMap, Stage, TrajectoryProblem, Weight,
};
use coneal::{ConeSpec, Segment};
use nalgebra::{DMatrix, DVector};

use crate::qp::{project_soc, Qp};
use crate::BenchError;

pub const MASS: f64 = 1.0;
pub const TIME_STEP: f64 = 0.1;
pub const GRAVITY: f64 = 9.81;
pub const FRICTION: f64 = 0.5;
/// Weight on position error in the friction problem, so that its
/// multipliers are of order one.
pub const POSITION_WEIGHT: f64 = 100.0;

/// Reference answer for one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub objective: f64,
    /// Present when the minimizer is unique.
    pub x: Option<DVector<f64>>,
}

pub type Oracle = Box<dyn Fn(&[f64]) -> OracleSolution + Send + Sync>;

pub struct BenchmarkProblem {
    pub name: &'static str,
    pub description: &'static str,
    pub model: Box<dyn ProblemModel>,
    pub x0: Vec<f64>,
    pub theta: Vec<f64>,
    pub oracle: Oracle,
    /// Set for problems built by transcription.
    pub index_map: Option<IndexMap>,
}

impl BenchmarkProblem {
    pub fn oracle(&self) -> OracleSolution {
        (self.oracle)(&self.theta)
    }
}

impl std::fmt::Debug for BenchmarkProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BenchmarkProblem")
            .field("name", &self.name)
            .field("dims", &self.model.dims())
            .field("theta", &self.theta)
            .finish_non_exhaustive()
    }
}

pub const REGISTRY: &[(&str, &str)] = &[
    ("particle-impact-free", "1-D particle with impact, goal above the floor"),
    ("particle-impact-contact", "1-D particle with impact, goal below the floor"),
    ("particle-friction", "2-D particle step with contact complementarity and a friction cone"),
    ("soc-projection", "Euclidean projection onto a 3-D second-order cone"),
    ("nonneg-qp", "4-variable QP with nonnegativity bounds"),
    ("state-triggered-toy", "state-triggered constraint via complementarity"),
    ("double-integrator-trajopt", "T=10 double-integrator reach task with control bounds"),
    ("mpc-autotune", "one MPC solve of the tracking policy with weights as parameters"),
];

pub fn problem_names() -> Vec<&'static str> {
    REGISTRY.iter().map(|(n, _)| *n).collect()
}

pub fn build_problem(name: &str) -> Result<BenchmarkProblem, BenchError> {
    match name {
        "particle-impact-free" => Ok(particle_impact("particle-impact-free", 2.0, false)),
        "particle-impact-contact" => Ok(particle_impact("particle-impact-contact", -1.0, true)),
        "particle-friction" => Ok(particle_friction()),
        "soc-projection" => Ok(soc_projection()),
        "nonneg-qp" => Ok(nonneg_qp()),
        "state-triggered-toy" => Ok(state_triggered()),
        "double-integrator-trajopt" => double_integrator_reach(),
        "mpc-autotune" => mpc_single_solve(),
        _ => Err(BenchError::NotFound(name.to_string())),
    }
}

fn description(name: &str) -> &'static str {
    REGISTRY
        .iter()
        .find(|(n, _)| *n == name)
        .map_or("", |(_, d)| d)
}

fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// `minimize (z − z_goal)² + u²` subject to one implicit-Euler step with an
/// impulse `γ`, `z·γ = 0`, `z, γ ≥ 0`. `x = (z, u, γ)`,
/// `θ = (z̄, v̄, z_goal)`.
pub struct ParticleImpact {
    cone: ConeSpec,
}

impl ParticleImpact {
    pub fn new() -> Self {
        Self {
            cone: ConeSpec::orthant(2),
        }
    }
}

impl Default for ParticleImpact {
    fn default() -> Self {
        Self::new()
    }
}

impl ProblemModel for ParticleImpact {
    fn dims(&self) -> Dims {
        Dims::new(3, 2, 2, 3)
    }
    fn cone(&self) -> &ConeSpec {
        &self.cone
    }
    fn objective(&self, x: &[f64], th: &[f64]) -> f64 {
        (x[0] - th[2]).powi(2) + x[1] * x[1]
    }
    fn objective_gradient(&self, x: &[f64], th: &[f64]) -> DVector<f64> {
        vector(&[2.0 * (x[0] - th[2]), 2.0 * x[1], 0.0])
    }
    fn equality(&self, x: &[f64], th: &[f64]) -> DVector<f64> {
        let (z, u, gamma) = (x[0], x[1], x[2]);
        let dyn_ = MASS * ((z - th[0]) / TIME_STEP - th[1] - GRAVITY * TIME_STEP) + gamma + u;
        vector(&[dyn_, z * gamma])
    }
    fn equality_jacobian(&self, x: &[f64], _th: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 3, &[MASS / TIME_STEP, 1.0, 1.0, x[2], 0.0, x[0]])
    }
    fn cone_constraint(&self, x: &[f64], _th: &[f64]) -> DVector<f64> {
        vector(&[x[0], x[2]])
    }
    fn cone_jacobian(&self, _x: &[f64], _th: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0])
    }
    fn lagrangian_hessian(&self, _x: &[f64], _th: &[f64], y: &[f64], _z: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[2.0, 0.0, y[1], 0.0, 2.0, 0.0, y[1], 0.0, 0.0])
    }
    fn parameter_jacobians(&self, _x: &[f64], _th: &[f64], _y: &[f64], _z: &[f64]) -> ParameterJacobians {
        let mut pj = ParameterJacobians::zeros(self.dims());
        pj.l_xtheta[(0, 2)] = -2.0;
        pj.g_theta[(0, 0)] = -MASS / TIME_STEP;
        pj.g_theta[(0, 1)] = -MASS;
        pj
    }
}

/// Minimize over both complementarity branches of the impact problem.
pub fn particle_impact_oracle(th: &[f64]) -> OracleSolution {
    let (zbar, vbar, goal) = (th[0], th[1], th[2]);
    // The dynamics give u = b − k z − γ with k = m/h and b = m(z̄/h + v̄ + g h).
    let k = MASS / TIME_STEP;
    let b = MASS * (zbar / TIME_STEP + vbar + GRAVITY * TIME_STEP);
    let objective = |z: f64, u: f64| (z - goal).powi(2) + u * u;
    let mut candidates = Vec::new();
    // γ = 0: minimize (z − goal)² + (b − k z)² over z ≥ 0.
    let z = ((goal + k * b) / (1.0 + k * k)).max(0.0);
    candidates.push((objective(z, b - k * z), vector(&[z, b - k * z, 0.0])));
    // z = 0: minimize goal² + u² with γ = b − u ≥ 0.
    let u = 0.0_f64.min(b);
    candidates.push((objective(0.0, u), vector(&[0.0, u, b - u])));
    let (objective, x) = candidates
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap();
    OracleSolution { objective, x: Some(x) }
}

/// Zero-control guess that satisfies the dynamics, either in flight
/// (`γ = 0`) or resting on the floor (`z = 0`). The problem is nonconvex and
/// each guess lies in the basin of its own branch.
pub fn particle_impact_guess(th: &[f64], contact: bool) -> Vec<f64> {
    let b = MASS * (th[0] / TIME_STEP + th[1] + GRAVITY * TIME_STEP);
    if contact {
        vec![0.0, 0.0, b]
    } else {
        vec![b * TIME_STEP / MASS, 0.0, 0.0]
    }
}

fn particle_impact(name: &'static str, goal: f64, contact: bool) -> BenchmarkProblem {
    let theta = vec![1.0, 0.0, goal];
    BenchmarkProblem {
        name,
        description: description(name),
        model: Box::new(ParticleImpact::new()),
        x0: particle_impact_guess(&theta, contact),
        theta,
        oracle: Box::new(particle_impact_oracle),
        index_map: None,
    }
}

/// Planar particle, one step. `x = (p_x, p_z, u_x, u_z, γ, b₁, b₂)`,
/// `θ = (v̄_x, goal_x, goal_z)`, starting on the floor at the origin with
/// zero vertical velocity. `b₂ = 0` keeps the friction cone 3-D.
pub struct ParticleFriction {
    cone: ConeSpec,
}

impl ParticleFriction {
    pub fn new() -> Self {
        Self {
            cone: ConeSpec::new(vec![Segment::Orthant(2), Segment::SecondOrder(3)]),
        }
    }
}

impl Default for ParticleFriction {
    fn default() -> Self {
        Self::new()
    }
}

impl ProblemModel for ParticleFriction {
    fn dims(&self) -> Dims {
        Dims::new(7, 4, 5, 3)
    }
    fn cone(&self) -> &ConeSpec {
        &self.cone
    }
    fn objective(&self, x: &[f64], th: &[f64]) -> f64 {
        POSITION_WEIGHT * ((x[0] - th[1]).powi(2) + (x[1] - th[2]).powi(2)) + x[2] * x[2] + x[3] * x[3]
    }
    fn objective_gradient(&self, x: &[f64], th: &[f64]) -> DVector<f64> {
        let w = 2.0 * POSITION_WEIGHT;
        vector(&[w * (x[0] - th[1]), w * (x[1] - th[2]), 2.0 * x[2], 2.0 * x[3], 0.0, 0.0, 0.0])
    }
    fn equality(&self, x: &[f64], th: &[f64]) -> DVector<f64> {
        let k = MASS / TIME_STEP;
        vector(&[
            k * x[0] - MASS * th[0] - x[2] - x[5],
            k * x[1] + MASS * GRAVITY * TIME_STEP - x[3] - x[4],
            x[1] * x[4],
            x[6],
        ])
    }
    fn equality_jacobian(&self, x: &[f64], _th: &[f64]) -> DMatrix<f64> {
        let k = MASS / TIME_STEP;
        #[rustfmt::skip]
        let j = DMatrix::from_row_slice(4, 7, &[
            k, 0.0, -1.0, 0.0, 0.0, -1.0, 0.0,
            0.0, k, 0.0, -1.0, -1.0, 0.0, 0.0,
            0.0, x[4], 0.0, 0.0, x[1], 0.0, 0.0,
            0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0,
        ]);
        j
    }
    fn cone_constraint(&self, x: &[f64], _th: &[f64]) -> DVector<f64> {
        vector(&[x[1], x[4], FRICTION * x[4], x[5], x[6]])
    }
    fn cone_jacobian(&self, _x: &[f64], _th: &[f64]) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(5, 7);
        j[(0, 1)] = 1.0;
        j[(1, 4)] = 1.0;
        j[(2, 4)] = FRICTION;
        j[(3, 5)] = 1.0;
        j[(4, 6)] = 1.0;
        j
    }
    fn lagrangian_hessian(&self, _x: &[f64], _th: &[f64], y: &[f64], _z: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::from_diagonal(&vector(&[
            2.0 * POSITION_WEIGHT,
            2.0 * POSITION_WEIGHT,
            2.0,
            2.0,
            0.0,
            0.0,
            0.0,
        ]));
        h[(1, 4)] = y[2];
        h[(4, 1)] = y[2];
        h
    }
    fn parameter_jacobians(&self, _x: &[f64], _th: &[f64], _y: &[f64], _z: &[f64]) -> ParameterJacobians {
        let mut pj = ParameterJacobians::zeros(self.dims());
        pj.l_xtheta[(0, 1)] = -2.0 * POSITION_WEIGHT;
        pj.l_xtheta[(1, 2)] = -2.0 * POSITION_WEIGHT;
        pj.g_theta[(0, 0)] = -MASS;
        pj
    }
}

/// Contact branch (`p_z = 0`) and flight branch (`γ = 0`, hence `b = 0`),
/// each a QP; the planar friction cone `|b₁| ≤ μγ` is two half-planes.
pub fn particle_friction_oracle(th: &[f64]) -> OracleSolution {
    let k = MASS / TIME_STEP;
    let w = POSITION_WEIGHT;
    let q = DMatrix::from_diagonal(&vector(&[2.0 * w, 2.0 * w, 2.0, 2.0, 0.0, 0.0, 0.0]));
    let lin = vector(&[-2.0 * w * th[1], -2.0 * w * th[2], 0.0, 0.0, 0.0, 0.0, 0.0]);
    let constant = w * (th[1] * th[1] + th[2] * th[2]);
    #[rustfmt::skip]
    let dynamics = DMatrix::from_row_slice(3, 7, &[
        k, 0.0, -1.0, 0.0, 0.0, -1.0, 0.0,
        0.0, k, 0.0, -1.0, -1.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0,
    ]);
    let rhs = vector(&[MASS * th[0], -MASS * GRAVITY * TIME_STEP, 0.0]);
    let with_row = |extra: &[f64]| {
        let mut a = dynamics.clone().insert_row(3, 0.0);
        a.set_row(3, &DMatrix::from_row_slice(1, 7, extra).row(0));
        (a, rhs.clone().insert_row(3, 0.0))
    };
    let mut branches = Vec::new();
    // Contact: p_z = 0, γ ≥ 0, μγ ∓ b₁ ≥ 0.
    let (a, b) = with_row(&[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    #[rustfmt::skip]
    let c = DMatrix::from_row_slice(3, 7, &[
        0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, FRICTION, -1.0, 0.0,
        0.0, 0.0, 0.0, 0.0, FRICTION, 1.0, 0.0,
    ]);
    branches.push(
        Qp::new(q.clone(), lin.clone())
            .with_constant(constant)
            .with_equalities(a, b)
            .with_inequalities(c, DVector::zeros(3)),
    );
    // Flight: γ = 0 forces b₁ = 0; p_z ≥ 0.
    let (a, b) = with_row(&[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    let a = a.insert_row(4, 0.0);
    let mut a = a;
    a[(4, 5)] = 1.0;
    let b = b.insert_row(4, 0.0);
    branches.push(
        Qp::new(q, lin)
            .with_constant(constant)
            .with_equalities(a, b)
            .with_inequalities(DMatrix::from_row_slice(1, 7, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]), DVector::zeros(1)),
    );
    best_of(&branches)
}

fn best_of(branches: &[Qp]) -> OracleSolution {
    let best = branches
        .iter()
        .filter_map(Qp::solve)
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .expect("at least one feasible branch");
    OracleSolution {
        objective: best.objective,
        x: Some(best.x),
    }
}

fn particle_friction() -> BenchmarkProblem {
    BenchmarkProblem {
        name: "particle-friction",
        description: description("particle-friction"),
        model: Box::new(ParticleFriction::new()),
        x0: vec![0.0, 0.5, 0.0, 0.0, 1.0, 0.0, 0.0],
        theta: vec![0.5, 0.12, -0.1],
        oracle: Box::new(particle_friction_oracle),
        index_map: None,
    }
}

/// `minimize ‖x − p‖²` over `x ∈ Q_l`, `θ = p`.
pub struct SocProjection {
    cone: ConeSpec,
    dim: usize,
}

impl SocProjection {
    pub fn new(dim: usize) -> Self {
        Self {
            cone: ConeSpec::second_order(dim),
            dim,
        }
    }
}

impl ProblemModel for SocProjection {
    fn dims(&self) -> Dims {
        Dims::new(self.dim, 0, self.dim, self.dim)
    }
    fn cone(&self) -> &ConeSpec {
        &self.cone
    }
    fn objective(&self, x: &[f64], th: &[f64]) -> f64 {
        x.iter().zip(th).map(|(a, b)| (a - b).powi(2)).sum()
    }
    fn objective_gradient(&self, x: &[f64], th: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.dim, x.iter().zip(th).map(|(a, b)| 2.0 * (a - b)))
    }
    fn equality(&self, _x: &[f64], _th: &[f64]) -> DVector<f64> {
        DVector::zeros(0)
    }
    fn equality_jacobian(&self, _x: &[f64], _th: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(0, self.dim)
    }
    fn cone_constraint(&self, x: &[f64], _th: &[f64]) -> DVector<f64> {
        vector(x)
    }
    fn cone_jacobian(&self, _x: &[f64], _th: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim)
    }
    fn lagrangian_hessian(&self, _x: &[f64], _th: &[f64], _y: &[f64], _z: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim) * 2.0
    }
    fn parameter_jacobians(&self, _x: &[f64], _th: &[f64], _y: &[f64], _z: &[f64]) -> ParameterJacobians {
        let mut pj = ParameterJacobians::zeros(self.dims());
        pj.l_xtheta = DMatrix::identity(self.dim, self.dim) * -2.0;
        pj
    }
}

fn soc_projection() -> BenchmarkProblem {
    BenchmarkProblem {
        name: "soc-projection",
        description: description("soc-projection"),
        model: Box::new(SocProjection::new(3)),
        x0: vec![0.0; 3],
        theta: vec![0.5, 1.5, -1.0],
        oracle: Box::new(|p: &[f64]| {
            let x = project_soc(p);
            let objective = x.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum();
            OracleSolution {
                objective,
                x: Some(vector(&x)),
            }
        }),
        index_map: None,
    }
}

/// `minimize ½ xᵀQx + θᵀx` over `x ≥ 0`.
pub struct NonnegQp {
    q: DMatrix<f64>,
    cone: ConeSpec,
}

impl NonnegQp {
    pub fn new(q: DMatrix<f64>) -> Self {
        let n = q.nrows();
        Self {
            q,
            cone: ConeSpec::orthant(n),
        }
    }

    #[rustfmt::skip]
    pub fn default_hessian() -> DMatrix<f64> {
        DMatrix::from_row_slice(4, 4, &[
            4.0, 1.0, 0.0, 0.5,
            1.0, 3.0, 0.5, 0.0,
            0.0, 0.5, 2.0, 0.2,
            0.5, 0.0, 0.2, 1.0,
        ])
    }
}

impl ProblemModel for NonnegQp {
    fn dims(&self) -> Dims {
        let n = self.q.nrows();
        Dims::new(n, 0, n, n)
    }
    fn cone(&self) -> &ConeSpec {
        &self.cone
    }
    fn objective(&self, x: &[f64], th: &[f64]) -> f64 {
        let xv = vector(x);
        0.5 * xv.dot(&(&self.q * &xv)) + vector(th).dot(&xv)
    }
    fn objective_gradient(&self, x: &[f64], th: &[f64]) -> DVector<f64> {
        &self.q * vector(x) + vector(th)
    }
    fn equality(&self, _x: &[f64], _th: &[f64]) -> DVector<f64> {
        DVector::zeros(0)
    }
    fn equality_jacobian(&self, _x: &[f64], _th: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(0, self.q.nrows())
    }
    fn cone_constraint(&self, x: &[f64], _th: &[f64]) -> DVector<f64> {
        vector(x)
    }
    fn cone_jacobian(&self, _x: &[f64], _th: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.q.nrows(), self.q.nrows())
    }
    fn lagrangian_hessian(&self, _x: &[f64], _th: &[f64], _y: &[f64], _z: &[f64]) -> DMatrix<f64> {
        self.q.clone()
    }
    fn parameter_jacobians(&self, _x: &[f64], _th: &[f64], _y: &[f64], _z: &[f64]) -> ParameterJacobians {
        let mut pj = ParameterJacobians::zeros(self.dims());
        pj.l_xtheta = DMatrix::identity(self.q.nrows(), self.q.nrows());
        pj
    }
}

fn nonneg_qp() -> BenchmarkProblem {
    let q = NonnegQp::default_hessian();
    let n = q.nrows();
    let oracle_q = q.clone();
    BenchmarkProblem {
        name: "nonneg-qp",
        description: description("nonneg-qp"),
        model: Box::new(NonnegQp::new(q)),
        x0: vec![1.0; n],
        theta: vec![-2.0, 1.0, -1.0, 0.5],
        oracle: Box::new(move |c: &[f64]| {
            let qp = Qp::new(oracle_q.clone(), vector(c))
                .with_inequalities(DMatrix::identity(n, n), DVector::zeros(n));
            best_of(&[qp])
        }),
        index_map: None,
    }
}

/// Penalty on the split variables of the trigger reformulation.
pub const TRIGGER_PENALTY: f64 = 0.01;

/// `x = (x₁, x₂, Γ₊, Γ₋, h₊, h₋)` with trigger `Γ = x₁`, constraint
/// `h = x₂ − 1`, `Γ₊·h₋ = 0`, and goal `θ`.
pub struct StateTriggered {
    cone: ConeSpec,
}

impl StateTriggered {
    pub fn new() -> Self {
        Self {
            cone: ConeSpec::orthant(4),
        }
    }
}

impl Default for StateTriggered {
    fn default() -> Self {
        Self::new()
    }
}

impl ProblemModel for StateTriggered {
    fn dims(&self) -> Dims {
        Dims::new(6, 3, 4, 2)
    }
    fn cone(&self) -> &ConeSpec {
        &self.cone
    }
    fn objective(&self, x: &[f64], th: &[f64]) -> f64 {
        (x[0] - th[0]).powi(2) + (x[1] - th[1]).powi(2) + TRIGGER_PENALTY * x[2..].iter().sum::<f64>()
    }
    fn objective_gradient(&self, x: &[f64], th: &[f64]) -> DVector<f64> {
        let p = TRIGGER_PENALTY;
        vector(&[2.0 * (x[0] - th[0]), 2.0 * (x[1] - th[1]), p, p, p, p])
    }
    fn equality(&self, x: &[f64], _th: &[f64]) -> DVector<f64> {
        vector(&[x[2] - x[3] - x[0], x[4] - x[5] - (x[1] - 1.0), x[2] * x[5]])
    }
    fn equality_jacobian(&self, x: &[f64], _th: &[f64]) -> DMatrix<f64> {
        #[rustfmt::skip]
        let j = DMatrix::from_row_slice(3, 6, &[
            -1.0, 0.0, 1.0, -1.0, 0.0, 0.0,
            0.0, -1.0, 0.0, 0.0, 1.0, -1.0,
            0.0, 0.0, x[5], 0.0, 0.0, x[2],
        ]);
        j
    }
    fn cone_constraint(&self, x: &[f64], _th: &[f64]) -> DVector<f64> {
        vector(&x[2..])
    }
    fn cone_jacobian(&self, _x: &[f64], _th: &[f64]) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(4, 6);
        for i in 0..4 {
            j[(i, i + 2)] = 1.0;
        }
        j
    }
    fn lagrangian_hessian(&self, _x: &[f64], _th: &[f64], y: &[f64], _z: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(6, 6);
        h[(0, 0)] = 2.0;
        h[(1, 1)] = 2.0;
        h[(2, 5)] = y[2];
        h[(5, 2)] = y[2];
        h
    }
    fn parameter_jacobians(&self, _x: &[f64], _th: &[f64], _y: &[f64], _z: &[f64]) -> ParameterJacobians {
        let mut pj = ParameterJacobians::zeros(self.dims());
        pj.l_xtheta[(0, 0)] = -2.0;
        pj.l_xtheta[(1, 1)] = -2.0;
        pj
    }
}

/// Branches `h₋ = 0` (constraint enforced) and `Γ₊ = 0` (trigger off).
pub fn state_triggered_oracle(th: &[f64]) -> OracleSolution {
    let mut q = DMatrix::zeros(6, 6);
    q[(0, 0)] = 2.0;
    q[(1, 1)] = 2.0;
    let p = TRIGGER_PENALTY;
    let lin = vector(&[-2.0 * th[0], -2.0 * th[1], p, p, p, p]);
    let constant = th[0] * th[0] + th[1] * th[1];
    let bounds = DMatrix::from_fn(4, 6, |i, j| if j == i + 2 { 1.0 } else { 0.0 });
    let branch = |fixed: usize| {
        #[rustfmt::skip]
        let mut a = DMatrix::from_row_slice(3, 6, &[
            -1.0, 0.0, 1.0, -1.0, 0.0, 0.0,
            0.0, -1.0, 0.0, 0.0, 1.0, -1.0,
            0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        ]);
        a[(2, fixed)] = 1.0;
        Qp::new(q.clone(), lin.clone())
            .with_constant(constant)
            .with_equalities(a, vector(&[0.0, -1.0, 0.0]))
            .with_inequalities(bounds.clone(), DVector::zeros(4))
    };
    best_of(&[branch(5), branch(2)])
}

fn state_triggered() -> BenchmarkProblem {
    BenchmarkProblem {
        name: "state-triggered-toy",
        description: description("state-triggered-toy"),
        model: Box::new(StateTriggered::new()),
        x0: vec![0.0, 0.0, 1.0, 1.0, 1.0, 1.0],
        theta: vec![1.0, 0.5],
        oracle: Box::new(state_triggered_oracle),
        index_map: None,
    }
}

/// Double-integrator plant used by the trajectory problems.
pub fn double_integrator(dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    (
        DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]),
        DMatrix::from_row_slice(2, 1, &[0.5 * dt * dt, dt]),
    )
}

/// Data of a tracking problem `Σ ½ wᵀ(xu − ref)²` over a double integrator
/// with `X₁ = x_init`; the last stage has only a state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingData {
    pub dt: f64,
    /// Per stage `(position, velocity, control)` reference; the control
    /// entry of the last stage is ignored.
    pub reference: Vec<[f64; 3]>,
    pub stage_weights: [f64; 3],
    pub terminal_weights: [f64; 2],
    pub x_init: [f64; 2],
}

impl TrackingData {
    pub fn horizon(&self) -> usize {
        self.reference.len()
    }

    /// Equality-constrained QP in the interleaved ordering, built directly
    /// from the data.
    pub fn qp(&self) -> Qp {
        let horizon = self.horizon();
        let n = 3 * horizon - 1;
        let (a, b) = double_integrator(self.dt);
        let mut q = DMatrix::zeros(n, n);
        let mut lin = DVector::zeros(n);
        let mut constant = 0.0;
        for (t, r) in self.reference.iter().enumerate() {
            let last = t + 1 == horizon;
            let width = if last { 2 } else { 3 };
            for i in 0..width {
                let w = if last { self.terminal_weights[i] } else { self.stage_weights[i] };
                let col = 3 * t + i;
                q[(col, col)] = w;
                lin[col] = -w * r[i];
                constant += 0.5 * w * r[i] * r[i];
            }
        }
        let m = 2 * (horizon - 1) + 2;
        let mut aeq = DMatrix::zeros(m, n);
        let mut beq = DVector::zeros(m);
        for t in 0..horizon - 1 {
            for i in 0..2 {
                let row = 2 * t + i;
                for j in 0..2 {
                    aeq[(row, 3 * t + j)] = a[(i, j)];
                }
                aeq[(row, 3 * t + 2)] = b[(i, 0)];
                aeq[(row, 3 * (t + 1) + i)] = -1.0;
            }
        }
        for i in 0..2 {
            aeq[(m - 2 + i, i)] = 1.0;
            beq[m - 2 + i] = self.x_init[i];
        }
        Qp::new(q, lin).with_constant(constant).with_equalities(aeq, beq)
    }
}

/// Transcribe a tracking problem. With `weights_from_theta` the stage weights
/// are `θ[0..3]` and `X₁ = θ[3..5]`; otherwise `θ = x_init`. Optional control
/// bounds become orthant constraints.
pub fn tracking_problem(data: &TrackingData, weights_from_theta: bool, control_bound: Option<f64>) -> TrajectoryProblem {
    let (a, b) = double_integrator(data.dt);
    let horizon = data.horizon();
    let mut stages = Vec::with_capacity(horizon);
    for (t, r) in data.reference.iter().enumerate() {
        let last = t + 1 == horizon;
        let stage = if last {
            let weights = data.terminal_weights.iter().map(|&w| Weight::Fixed(w)).collect();
            Stage::new(2, 0).with_cost(DiagonalCost::new(vector(&r[..2]), weights))
        } else {
            let weights = if weights_from_theta {
                vec![Weight::Param(0), Weight::Param(1), Weight::Param(2)]
            } else {
                data.stage_weights.iter().map(|&w| Weight::Fixed(w)).collect()
            };
            let mut st = Stage::new(2, 1)
                .with_cost(DiagonalCost::new(vector(r), weights))
                .with_dynamics(LinearMap::dynamics(&a, &b));
            if let Some(limit) = control_bound {
                st = st.with_cone(LinearMap::box_bounds(3, 2..3, &[-limit], &[limit]), ConeSpec::orthant(2));
            }
            st
        };
        stages.push(stage);
    }
    let (initial, param_dim) = if weights_from_theta {
        (InitialState::Parameter { offset: 3 }, 5)
    } else {
        (InitialState::Parameter { offset: 0 }, 2)
    };
    TrajectoryProblem {
        stages,
        initial,
        param_dim,
    }
}

pub const REACH_CONTROL_BOUND: f64 = 50.0;

pub fn reach_data() -> TrackingData {
    let horizon = 10;
    let mut reference = vec![[1.0, 0.0, 0.0]; horizon];
    reference[0] = [0.0, 0.0, 0.0];
    TrackingData {
        dt: 0.1,
        reference,
        stage_weights: [1.0, 0.1, 0.01],
        terminal_weights: [100.0, 10.0],
        x_init: [0.0, 0.0],
    }
}

fn double_integrator_reach() -> Result<BenchmarkProblem, BenchError> {
    let data = reach_data();
    let (model, map) = transcribe(tracking_problem(&data, false, Some(REACH_CONTROL_BOUND)))?;
    let n = map.dims.n;
    let base = data.clone();
    Ok(BenchmarkProblem {
        name: "double-integrator-trajopt",
        description: description("double-integrator-trajopt"),
        model: Box::new(model),
        x0: vec![0.0; n],
        theta: data.x_init.to_vec(),
        oracle: Box::new(move |th: &[f64]| {
            let data = TrackingData {
                x_init: [th[0], th[1]],
                ..base.clone()
            };
            let sol = data.qp().solve().expect("equality QP is solvable");
            let horizon = data.horizon();
            let controls_inside = (0..horizon - 1).all(|t| sol.x[3 * t + 2].abs() < REACH_CONTROL_BOUND);
            assert!(controls_inside, "control bounds are active; the oracle does not apply");
            OracleSolution {
                objective: sol.objective,
                x: Some(sol.x),
            }
        }),
        index_map: Some(map),
    })
}

/// Reference for the tracking demonstration: the plant driven from
/// `(0, 1)` by `u_k = −sin(k·dt)`, so it satisfies the dynamics exactly.
/// Entries are `(position, velocity, control)`.
pub fn tracking_reference(start: usize, len: usize, dt: f64) -> Vec<[f64; 3]> {
    let (a, b) = double_integrator(dt);
    let mut x = DVector::from_vec(vec![0.0, 1.0]);
    let mut out = Vec::with_capacity(len);
    for k in 0..start + len {
        let u = -(k as f64 * dt).sin();
        if k >= start {
            out.push([x[0], x[1], u]);
        }
        x = &a * &x + &b * u;
    }
    out
}

pub const MPC_HORIZON: usize = 5;
pub const MPC_DT: f64 = 0.1;

pub fn mpc_data(step: usize, x_init: [f64; 2], weights: [f64; 3]) -> TrackingData {
    TrackingData {
        dt: MPC_DT,
        reference: tracking_reference(step, MPC_HORIZON, MPC_DT),
        stage_weights: weights,
        terminal_weights: [weights[0], weights[1]],
        x_init,
    }
}

/// Terminal weights follow the stage weights, so all of them are `θ`.
pub fn mpc_problem(data: &TrackingData) -> TrajectoryProblem {
    let mut traj = tracking_problem(data, true, None);
    let last = traj.stages.len() - 1;
    let r = data.reference[last];
    traj.stages[last].cost = Some(Box::new(DiagonalCost::new(
        vector(&r[..2]),
        vec![Weight::Param(0), Weight::Param(1)],
    )));
    traj
}

pub fn mpc_theta(data: &TrackingData) -> Vec<f64> {
    let w = data.stage_weights;
    vec![w[0], w[1], w[2], data.x_init[0], data.x_init[1]]
}

fn mpc_single_solve() -> Result<BenchmarkProblem, BenchError> {
    let data = mpc_data(0, [0.5, 1.0], [1.0, 1.0, 1.0]);
    let (model, map) = transcribe(mpc_problem(&data))?;
    let n = map.dims.n;
    let base = data.clone();
    Ok(BenchmarkProblem {
        name: "mpc-autotune",
        description: description("mpc-autotune"),
        model: Box::new(model),
        x0: vec![0.0; n],
        theta: mpc_theta(&data),
        oracle: Box::new(move |th: &[f64]| {
            let data = TrackingData {
                stage_weights: [th[0], th[1], th[2]],
                terminal_weights: [th[0], th[1]],
                x_init: [th[3], th[4]],
                ..base.clone()
            };
            let sol = data.qp().solve().expect("equality QP is solvable");
            OracleSolution {
                objective: sol.objective,
                x: Some(sol.x),
            }
        }),
        index_map: Some(map),
    })
}

/// `x = 0` and `x = 1` at once. Not part of the registry.
pub fn infeasible_problem() -> BenchmarkProblem {
    use coneal::finite_difference_model;
    BenchmarkProblem {
        name: "infeasible-toy",
        description: "contradictory equalities",
        model: Box::new(finite_difference_model(
            |x: &[f64], _: &[f64]| x[0] * x[0],
            |x: &[f64], _: &[f64]| vector(&[x[0], x[0] - 1.0]),
            |_: &[f64], _: &[f64]| DVector::zeros(0),
            Dims::new(1, 2, 0, 0),
            ConeSpec::empty(),
            coneal::model::DEFAULT_FD_STEP,
        )),
        x0: vec![0.3],
        theta: vec![],
        oracle: Box::new(|_: &[f64]| OracleSolution {
            objective: f64::NAN,
            x: None,
        }),
        index_map: None,
    }
}
