//! Problem description: `minimize c(x; θ) s.t. g(x; θ) = 0, h(x; θ) ∈ K`.
//!
//! A problem is anything implementing [`ProblemModel`]. The solver only ever
//! consumes the full Lagrangian Hessian
//! `L_xx = c_xx + Σ yᵢ ∇²gᵢ + Σ zᵢ ∇²hᵢ`, so models provide it in one callback.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cone::ConeSpec;
use crate::error::{check_len, Error, Result};
use crate::fd;
use crate::par::Execution;

/// Default central-difference step for first derivatives.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Dims {
    /// Decision variables.
    pub n: usize,
    /// Equality constraints.
    pub m: usize,
    /// Cone constraints.
    pub p: usize,
    /// Parameters.
    pub d: usize,
}

impl Dims {
    pub fn new(n: usize, m: usize, p: usize, d: usize) -> Self {
        Self { n, m, p, d }
    }

    /// Length of the primal-dual vector `(x, r, s, y, z, t)`.
    pub fn primal_dual(&self) -> usize {
        self.n + 2 * self.m + 3 * self.p
    }

    /// Order of the reduced symmetric system.
    pub fn reduced(&self) -> usize {
        self.n + self.m + self.p
    }
}

/// Derivatives with respect to the parameters `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterJacobians {
    /// `∂²L/∂x∂θ`, `n × d`.
    pub l_xtheta: DMatrix<f64>,
    /// `∂g/∂θ`, `m × d`.
    pub g_theta: DMatrix<f64>,
    /// `∂h/∂θ`, `p × d`.
    pub h_theta: DMatrix<f64>,
}

impl ParameterJacobians {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            l_xtheta: DMatrix::zeros(dims.n, dims.d),
            g_theta: DMatrix::zeros(dims.m, dims.d),
            h_theta: DMatrix::zeros(dims.p, dims.d),
        }
    }
}

/// User callbacks for one problem instance.
///
/// Implementations must be callable from several threads at once (distinct
/// solves may share a model); a single solve calls them sequentially.
pub trait ProblemModel: Send + Sync {
    fn dims(&self) -> Dims;
    fn cone(&self) -> &ConeSpec;

    fn objective(&self, x: &[f64], theta: &[f64]) -> f64;
    fn objective_gradient(&self, x: &[f64], theta: &[f64]) -> DVector<f64>;

    fn equality(&self, x: &[f64], theta: &[f64]) -> DVector<f64>;
    fn equality_jacobian(&self, x: &[f64], theta: &[f64]) -> DMatrix<f64>;

    fn cone_constraint(&self, x: &[f64], theta: &[f64]) -> DVector<f64>;
    fn cone_jacobian(&self, x: &[f64], theta: &[f64]) -> DMatrix<f64>;

    fn lagrangian_hessian(&self, x: &[f64], theta: &[f64], y: &[f64], z: &[f64]) -> DMatrix<f64>;

    fn parameter_jacobians(
        &self,
        x: &[f64],
        theta: &[f64],
        y: &[f64],
        z: &[f64],
    ) -> ParameterJacobians;

    /// Drop constraint curvature from `L_xx` (evaluate it with `y = z = 0`).
    fn gauss_newton(&self) -> bool {
        false
    }
}

impl<M: ProblemModel + ?Sized> ProblemModel for &M {
    fn dims(&self) -> Dims {
        (**self).dims()
    }
    fn cone(&self) -> &ConeSpec {
        (**self).cone()
    }
    fn objective(&self, x: &[f64], theta: &[f64]) -> f64 {
        (**self).objective(x, theta)
    }
    fn objective_gradient(&self, x: &[f64], theta: &[f64]) -> DVector<f64> {
        (**self).objective_gradient(x, theta)
    }
    fn equality(&self, x: &[f64], theta: &[f64]) -> DVector<f64> {
        (**self).equality(x, theta)
    }
    fn equality_jacobian(&self, x: &[f64], theta: &[f64]) -> DMatrix<f64> {
        (**self).equality_jacobian(x, theta)
    }
    fn cone_constraint(&self, x: &[f64], theta: &[f64]) -> DVector<f64> {
        (**self).cone_constraint(x, theta)
    }
    fn cone_jacobian(&self, x: &[f64], theta: &[f64]) -> DMatrix<f64> {
        (**self).cone_jacobian(x, theta)
    }
    fn lagrangian_hessian(&self, x: &[f64], theta: &[f64], y: &[f64], z: &[f64]) -> DMatrix<f64> {
        (**self).lagrangian_hessian(x, theta, y, z)
    }
    fn parameter_jacobians(
        &self,
        x: &[f64],
        theta: &[f64],
        y: &[f64],
        z: &[f64],
    ) -> ParameterJacobians {
        (**self).parameter_jacobians(x, theta, y, z)
    }
    fn gauss_newton(&self) -> bool {
        (**self).gauss_newton()
    }
}

/// Wraps a model and switches it to Gauss-Newton curvature.
pub struct GaussNewton<M>(pub M);

impl<M: ProblemModel> ProblemModel for GaussNewton<M> {
    fn dims(&self) -> Dims {
        self.0.dims()
    }
    fn cone(&self) -> &ConeSpec {
        self.0.cone()
    }
    fn objective(&self, x: &[f64], theta: &[f64]) -> f64 {
        self.0.objective(x, theta)
    }
    fn objective_gradient(&self, x: &[f64], theta: &[f64]) -> DVector<f64> {
        self.0.objective_gradient(x, theta)
    }
    fn equality(&self, x: &[f64], theta: &[f64]) -> DVector<f64> {
        self.0.equality(x, theta)
    }
    fn equality_jacobian(&self, x: &[f64], theta: &[f64]) -> DMatrix<f64> {
        self.0.equality_jacobian(x, theta)
    }
    fn cone_constraint(&self, x: &[f64], theta: &[f64]) -> DVector<f64> {
        self.0.cone_constraint(x, theta)
    }
    fn cone_jacobian(&self, x: &[f64], theta: &[f64]) -> DMatrix<f64> {
        self.0.cone_jacobian(x, theta)
    }
    fn lagrangian_hessian(&self, x: &[f64], theta: &[f64], y: &[f64], z: &[f64]) -> DMatrix<f64> {
        self.0.lagrangian_hessian(x, theta, y, z)
    }
    fn parameter_jacobians(
        &self,
        x: &[f64],
        theta: &[f64],
        y: &[f64],
        z: &[f64],
    ) -> ParameterJacobians {
        self.0.parameter_jacobians(x, theta, y, z)
    }
    fn gauss_newton(&self) -> bool {
        true
    }
}

/// Everything the KKT assembly needs at one primal point.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationCache {
    pub c: f64,
    pub c_x: DVector<f64>,
    pub g: DVector<f64>,
    pub g_x: DMatrix<f64>,
    pub h: DVector<f64>,
    pub h_x: DMatrix<f64>,
    pub l_xx: DMatrix<f64>,
}

fn finite_vec(name: &'static str, v: &DVector<f64>) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::EvaluationFailure { callback: name })
    }
}

fn finite_mat(name: &'static str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::EvaluationFailure { callback: name })
    }
}

fn check_shape(name: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    check_len(&format!("{name} rows"), rows, m.nrows())?;
    check_len(&format!("{name} columns"), cols, m.ncols())
}

pub(crate) fn check_inputs(model: &dyn ProblemModel, x: &[f64], theta: &[f64]) -> Result<()> {
    let dims = model.dims();
    check_len("x", dims.n, x.len())?;
    check_len("theta", dims.d, theta.len())?;
    check_len("cone spec", dims.p, model.cone().total_dim())
}

/// Evaluate every callback once at `(x, θ, y, z)`.
pub fn evaluate(
    model: &dyn ProblemModel,
    x: &[f64],
    theta: &[f64],
    y: &[f64],
    z: &[f64],
) -> Result<EvaluationCache> {
    check_inputs(model, x, theta)?;
    let Dims { n, m, p, .. } = model.dims();
    check_len("y", m, y.len())?;
    check_len("z", p, z.len())?;

    let c = model.objective(x, theta);
    if !c.is_finite() {
        return Err(Error::EvaluationFailure {
            callback: "objective",
        });
    }
    let c_x = model.objective_gradient(x, theta);
    check_len("objective_gradient", n, c_x.len())?;
    finite_vec("objective_gradient", &c_x)?;

    let g = model.equality(x, theta);
    check_len("equality", m, g.len())?;
    finite_vec("equality", &g)?;
    let g_x = model.equality_jacobian(x, theta);
    check_shape("equality_jacobian", &g_x, m, n)?;
    finite_mat("equality_jacobian", &g_x)?;

    let h = model.cone_constraint(x, theta);
    check_len("cone_constraint", p, h.len())?;
    finite_vec("cone_constraint", &h)?;
    let h_x = model.cone_jacobian(x, theta);
    check_shape("cone_jacobian", &h_x, p, n)?;
    finite_mat("cone_jacobian", &h_x)?;

    let raw = if model.gauss_newton() {
        model.lagrangian_hessian(x, theta, &vec![0.0; m], &vec![0.0; p])
    } else {
        model.lagrangian_hessian(x, theta, y, z)
    };
    check_shape("lagrangian_hessian", &raw, n, n)?;
    finite_mat("lagrangian_hessian", &raw)?;
    let l_xx = (&raw + raw.transpose()) * 0.5;

    Ok(EvaluationCache {
        c,
        c_x,
        g,
        g_x,
        h,
        h_x,
        l_xx,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCheck {
    pub callback: String,
    pub max_rel_error: f64,
    pub passed: bool,
    /// The block is empty (e.g. `m = 0`), so nothing was compared.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub tolerance: f64,
    pub checks: Vec<DerivativeCheck>,
}

impl DerivativeReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, callback: &str) -> Option<&DerivativeCheck> {
        self.checks.iter().find(|c| c.callback == callback)
    }
}

fn rel_error(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>) -> f64 {
    if analytic.shape() != numeric.shape() {
        return f64::INFINITY;
    }
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, b)| {
            let e = (a - b).abs() / b.abs().max(1.0);
            if e.is_nan() {
                f64::INFINITY
            } else {
                e
            }
        })
        .fold(0.0, f64::max)
}

/// Compare each analytic derivative callback against central differences.
pub fn validate_derivatives(
    model: &dyn ProblemModel,
    x: &[f64],
    theta: &[f64],
    y: &[f64],
    z: &[f64],
    tol: f64,
) -> DerivativeReport {
    let Dims { n, m, p, d } = model.dims();
    let h = DEFAULT_FD_STEP;
    let exec = Execution::Parallel;
    let mut checks = Vec::new();
    let mut push = |name: &str, empty: bool, err: f64| {
        checks.push(DerivativeCheck {
            callback: name.to_string(),
            max_rel_error: if empty { 0.0 } else { err },
            passed: empty || err <= tol,
            skipped: empty,
        })
    };

    let as_col = |v: DVector<f64>| {
        let len = v.len();
        DMatrix::from_column_slice(len, 1, v.as_slice())
    };
    let grad_fd = fd::gradient(exec, |v| model.objective(v, theta), x, h);
    push(
        "objective_gradient",
        n == 0,
        rel_error(&as_col(model.objective_gradient(x, theta)), &as_col(grad_fd)),
    );

    let gx_fd = fd::jacobian(exec, |v| model.equality(v, theta), x, m, h);
    push(
        "equality_jacobian",
        m == 0 || n == 0,
        rel_error(&model.equality_jacobian(x, theta), &gx_fd),
    );

    let hx_fd = fd::jacobian(exec, |v| model.cone_constraint(v, theta), x, p, h);
    push(
        "cone_jacobian",
        p == 0 || n == 0,
        rel_error(&model.cone_jacobian(x, theta), &hx_fd),
    );

    let lagrangian_gradient = |xv: &[f64], th: &[f64]| -> DVector<f64> {
        let mut grad = model.objective_gradient(xv, th);
        let (yy, zz) = if model.gauss_newton() {
            (vec![0.0; m], vec![0.0; p])
        } else {
            (y.to_vec(), z.to_vec())
        };
        if m > 0 {
            grad += model.equality_jacobian(xv, th).tr_mul(&DVector::from_column_slice(&yy));
        }
        if p > 0 {
            grad += model.cone_jacobian(xv, th).tr_mul(&DVector::from_column_slice(&zz));
        }
        grad
    };
    let lxx_fd = fd::jacobian(exec, |v| lagrangian_gradient(v, theta), x, n, h);
    let lxx = if model.gauss_newton() {
        model.lagrangian_hessian(x, theta, &vec![0.0; m], &vec![0.0; p])
    } else {
        model.lagrangian_hessian(x, theta, y, z)
    };
    push("lagrangian_hessian", n == 0, rel_error(&lxx, &lxx_fd));

    let pj = model.parameter_jacobians(x, theta, y, z);
    let lxt_fd = fd::jacobian(exec, |th| lagrangian_gradient(x, th), theta, n, h);
    push("parameter_jacobians.l_xtheta", d == 0 || n == 0, rel_error(&pj.l_xtheta, &lxt_fd));
    let gt_fd = fd::jacobian(exec, |th| model.equality(x, th), theta, m, h);
    push("parameter_jacobians.g_theta", d == 0 || m == 0, rel_error(&pj.g_theta, &gt_fd));
    let ht_fd = fd::jacobian(exec, |th| model.cone_constraint(x, th), theta, p, h);
    push("parameter_jacobians.h_theta", d == 0 || p == 0, rel_error(&pj.h_theta, &ht_fd));

    DerivativeReport {
        tolerance: tol,
        checks,
    }
}

type ScalarFn = Box<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
type VectorFn = Box<dyn Fn(&[f64], &[f64]) -> DVector<f64> + Send + Sync>;

/// A [`ProblemModel`] built from value-only callbacks; all derivatives come
/// from central differences. Meant for prototyping.
pub struct FiniteDifferenceModel {
    dims: Dims,
    cone: ConeSpec,
    step: f64,
    objective: ScalarFn,
    equality: VectorFn,
    cone_constraint: VectorFn,
}

impl FiniteDifferenceModel {
    fn curvature_step(&self) -> f64 {
        self.step.powf(2.0 / 3.0)
    }

    fn lagrangian(&self, x: &[f64], theta: &[f64], y: &[f64], z: &[f64]) -> f64 {
        let mut val = (self.objective)(x, theta);
        if self.dims.m > 0 {
            val += (self.equality)(x, theta).dot(&DVector::from_column_slice(y));
        }
        if self.dims.p > 0 {
            val += (self.cone_constraint)(x, theta).dot(&DVector::from_column_slice(z));
        }
        val
    }
}

/// Wrap value-only callbacks into a complete model.
pub fn finite_difference_model<C, G, H>(
    objective: C,
    equality: G,
    cone_constraint: H,
    dims: Dims,
    cone: ConeSpec,
    step: f64,
) -> FiniteDifferenceModel
where
    C: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    G: Fn(&[f64], &[f64]) -> DVector<f64> + Send + Sync + 'static,
    H: Fn(&[f64], &[f64]) -> DVector<f64> + Send + Sync + 'static,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    FiniteDifferenceModel {
        dims,
        cone,
        step,
        objective: Box::new(objective),
        equality: Box::new(equality),
        cone_constraint: Box::new(cone_constraint),
    }
}

impl ProblemModel for FiniteDifferenceModel {
    fn dims(&self) -> Dims {
        self.dims
    }
    fn cone(&self) -> &ConeSpec {
        &self.cone
    }
    fn objective(&self, x: &[f64], theta: &[f64]) -> f64 {
        (self.objective)(x, theta)
    }
    fn objective_gradient(&self, x: &[f64], theta: &[f64]) -> DVector<f64> {
        fd::gradient(Execution::Sequential, |v| (self.objective)(v, theta), x, self.step)
    }
    fn equality(&self, x: &[f64], theta: &[f64]) -> DVector<f64> {
        (self.equality)(x, theta)
    }
    fn equality_jacobian(&self, x: &[f64], theta: &[f64]) -> DMatrix<f64> {
        fd::jacobian(
            Execution::Sequential,
            |v| (self.equality)(v, theta),
            x,
            self.dims.m,
            self.step,
        )
    }
    fn cone_constraint(&self, x: &[f64], theta: &[f64]) -> DVector<f64> {
        (self.cone_constraint)(x, theta)
    }
    fn cone_jacobian(&self, x: &[f64], theta: &[f64]) -> DMatrix<f64> {
        fd::jacobian(
            Execution::Sequential,
            |v| (self.cone_constraint)(v, theta),
            x,
            self.dims.p,
            self.step,
        )
    }
    fn lagrangian_hessian(&self, x: &[f64], theta: &[f64], y: &[f64], z: &[f64]) -> DMatrix<f64> {
        fd::hessian(
            Execution::Sequential,
            |v| self.lagrangian(v, theta, y, z),
            x,
            self.curvature_step(),
        )
    }
    fn parameter_jacobians(
        &self,
        x: &[f64],
        theta: &[f64],
        y: &[f64],
        z: &[f64],
    ) -> ParameterJacobians {
        let exec = Execution::Sequential;
        ParameterJacobians {
            l_xtheta: fd::cross_hessian(
                exec,
                |a, b| self.lagrangian(a, b, y, z),
                x,
                theta,
                self.curvature_step(),
            ),
            g_theta: fd::jacobian(exec, |th| (self.equality)(x, th), theta, self.dims.m, self.step),
            h_theta: fd::jacobian(
                exec,
                |th| (self.cone_constraint)(x, th),
                theta,
                self.dims.p,
                self.step,
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// `c = xᵀx`, `g = x − θ`, `h = x`.
    struct Quadratic {
        cone: ConeSpec,
        grad_scale: f64,
    }

    impl Quadratic {
        fn new() -> Self {
            Self {
                cone: ConeSpec::orthant(2),
                grad_scale: 1.0,
            }
        }
    }

    impl ProblemModel for Quadratic {
        fn dims(&self) -> Dims {
            Dims::new(2, 2, 2, 2)
        }
        fn cone(&self) -> &ConeSpec {
            &self.cone
        }
        fn objective(&self, x: &[f64], _: &[f64]) -> f64 {
            x.iter().map(|v| v * v).sum()
        }
        fn objective_gradient(&self, x: &[f64], _: &[f64]) -> DVector<f64> {
            DVector::from_iterator(2, x.iter().map(|v| 2.0 * v * self.grad_scale))
        }
        fn equality(&self, x: &[f64], th: &[f64]) -> DVector<f64> {
            DVector::from_vec(vec![x[0] - th[0], x[1] - th[1]])
        }
        fn equality_jacobian(&self, _: &[f64], _: &[f64]) -> DMatrix<f64> {
            DMatrix::identity(2, 2)
        }
        fn cone_constraint(&self, x: &[f64], _: &[f64]) -> DVector<f64> {
            DVector::from_column_slice(x)
        }
        fn cone_jacobian(&self, _: &[f64], _: &[f64]) -> DMatrix<f64> {
            DMatrix::identity(2, 2)
        }
        fn lagrangian_hessian(&self, _: &[f64], _: &[f64], _: &[f64], _: &[f64]) -> DMatrix<f64> {
            DMatrix::identity(2, 2) * 2.0
        }
        fn parameter_jacobians(&self, _: &[f64], _: &[f64], _: &[f64], _: &[f64]) -> ParameterJacobians {
            ParameterJacobians {
                l_xtheta: DMatrix::zeros(2, 2),
                g_theta: -DMatrix::identity(2, 2),
                h_theta: DMatrix::zeros(2, 2),
            }
        }
    }

    #[test]
    fn evaluate_examples() {
        let q = Quadratic::new();
        let cache = evaluate(&q, &[1.0, 2.0], &[1.0, 2.0], &[0.0; 2], &[0.0; 2]).unwrap();
        assert_eq!(cache.c, 5.0);
        assert_eq!(cache.c_x.as_slice(), &[2.0, 4.0]);
        assert_eq!(cache.g.as_slice(), &[0.0, 0.0]);
        assert_eq!(cache.g_x, DMatrix::identity(2, 2));
        assert_eq!(cache.h.as_slice(), &[1.0, 2.0]);
        assert_eq!(cache.h_x, DMatrix::identity(2, 2));
    }

    #[test]
    fn evaluate_rejects_bad_input() {
        let q = Quadratic::new();
        assert!(matches!(
            evaluate(&q, &[1.0], &[0.0; 2], &[0.0; 2], &[0.0; 2]),
            Err(Error::InvalidDimension { .. })
        ));
        assert_eq!(
            evaluate(&q, &[f64::NAN, 0.0], &[0.0; 2], &[0.0; 2], &[0.0; 2]),
            Err(Error::EvaluationFailure {
                callback: "objective"
            })
        );
    }

    #[test]
    fn validation_passes_and_catches_faults() {
        let q = Quadratic::new();
        let report = validate_derivatives(&q, &[0.3, -0.7], &[1.0, 2.0], &[0.5, 0.1], &[0.2, 0.4], 1e-5);
        assert!(report.passed(), "{report:?}");

        let bad = Quadratic {
            grad_scale: 2.0,
            ..Quadratic::new()
        };
        let report = validate_derivatives(&bad, &[0.3, -0.7], &[1.0, 2.0], &[0.0; 2], &[0.0; 2], 1e-5);
        assert!(!report.check("objective_gradient").unwrap().passed);
        assert!(report.check("equality_jacobian").unwrap().passed);
    }

    #[test]
    fn validation_skips_empty_blocks() {
        let model = finite_difference_model(
            |x, _| x[0] * x[0],
            |_, _| DVector::zeros(0),
            |_, _| DVector::zeros(0),
            Dims::new(1, 0, 0, 0),
            ConeSpec::empty(),
            DEFAULT_FD_STEP,
        );
        let report = validate_derivatives(&model, &[0.4], &[], &[], &[], 1e-5);
        assert!(report.passed());
        assert!(report.check("equality_jacobian").unwrap().skipped);
    }

    #[test]
    fn finite_difference_model_examples() {
        let model = finite_difference_model(
            |x, _| x[0] * x[0],
            |x, _| DVector::from_element(1, x[0].sin()),
            |_, _| DVector::zeros(0),
            Dims::new(1, 1, 0, 0),
            ConeSpec::empty(),
            1e-6,
        );
        assert_relative_eq!(model.objective_gradient(&[1.0], &[])[0], 2.0, epsilon = 1e-5);
        assert_relative_eq!(model.equality_jacobian(&[0.0], &[])[(0, 0)], 1.0, epsilon = 1e-8);
        let pj = model.parameter_jacobians(&[0.0], &[], &[1.0], &[]);
        assert_eq!(pj.l_xtheta.shape(), (1, 0));
        assert_eq!(pj.g_theta.shape(), (1, 0));
        // L = x² + y sin x; L_xx = 2 − y sin x = 2 at x = 0.
        let h = model.lagrangian_hessian(&[0.0], &[], &[1.0], &[]);
        assert_relative_eq!(h[(0, 0)], 2.0, epsilon = 1e-6);
    }

    #[test]
    fn gauss_newton_drops_constraint_curvature() {
        let model = finite_difference_model(
            |x, _| x[0] * x[0],
            |x, _| DVector::from_element(1, x[0] * x[0] * x[0]),
            |_, _| DVector::zeros(0),
            Dims::new(1, 1, 0, 0),
            ConeSpec::empty(),
            1e-6,
        );
        let full = evaluate(&model, &[1.0], &[], &[1.0], &[]).unwrap();
        assert_relative_eq!(full.l_xx[(0, 0)], 8.0, epsilon = 1e-5);
        let gn = GaussNewton(&model);
        let cache = evaluate(&gn, &[1.0], &[], &[1.0], &[]).unwrap();
        assert_relative_eq!(cache.l_xx[(0, 0)], 2.0, epsilon = 1e-5);
    }
}
