//! Differentiable primal-dual solver for nonlinear cone programs
//!
//! ```text
//! minimize    c(x; θ)
//! subject to  g(x; θ) = 0,  h(x; θ) ∈ K
//! ```
//!
//! where `K` is a product of nonnegative orthants and second-order cones.
//! Equalities are handled by an augmented Lagrangian with slack `r`, cone
//! constraints by a barrier on slack `s` with dual `t`. Solutions can be
//! differentiated with respect to `θ` ([`sensitivity`]), and stage-structured
//! trajectory problems are transcribed into the same form ([`trajopt`]).

pub mod cone;
pub mod error;
mod fd;
pub mod kkt;
pub mod linsolve;
pub mod model;
pub mod par;
pub mod sensitivity;
pub mod solver;
pub mod trajopt;

pub use cone::{ConeSpec, Segment};
pub use error::{Error, Result};
pub use kkt::{OuterState, SolverPoint};
pub use model::{
    finite_difference_model, validate_derivatives, Dims, FiniteDifferenceModel, GaussNewton, ParameterJacobians,
    ProblemModel,
};
pub use par::Execution;
pub use sensitivity::{differentiate, SensitivityResult};
pub use solver::{solve, Solution, SolverOptions, Status, TraceRecord};
