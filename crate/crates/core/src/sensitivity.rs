//! Derivatives of a converged primal-dual point with respect to `θ`, from
//! the implicit-function theorem applied to `R(w; θ) = 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kkt::{jacobian_from_cache, residual_from_cache, OuterState, SolverPoint};
use crate::model::{evaluate, ProblemModel};
use crate::par::{map_indexed, Execution};
use crate::solver::Solution;

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityResult {
    /// `dw/dθ`, rows in the order `(x, r, s, y, z, t)`, one column per
    /// parameter.
    pub dw_dtheta: DMatrix<f64>,
    pub residual_norm_at_solution: f64,
    /// `J` was numerically singular and columns are minimum-norm
    /// least-squares solutions.
    pub used_least_squares: bool,
    /// `σ_min / σ_max` of the row-equilibrated `J`.
    pub rcond: f64,
    x_rows: usize,
}

impl SensitivityResult {
    /// Rows of `dw/dθ` belonging to `x`.
    pub fn dx_dtheta(&self) -> DMatrix<f64> {
        self.dw_dtheta.rows(0, self.x_rows).into_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityOptions {
    pub execution: Execution,
    /// `J` is treated as singular when its reciprocal condition is at or
    /// below this; singular values under `rank_tol·σ_max` are then dropped.
    pub rank_tol: f64,
    /// Lower bound on the penalty `ρ` used in `J`. The final subproblem's
    /// sensitivity differs from the original problem's by `O(1/ρ)`; since
    /// `J` does not depend on `λ`, raising `ρ` is the same as differentiating
    /// the subproblem with `λ` shifted to `y − ρr`. Zero keeps the final `ρ`.
    pub rho_floor: f64,
}

impl Default for SensitivityOptions {
    fn default() -> Self {
        Self {
            execution: Execution::default(),
            rank_tol: 1e-8,
            rho_floor: 1e8,
        }
    }
}

/// `∂R/∂θ = (L_xθ, 0, 0, g_θ, h_θ, 0)`.
pub fn residual_parameter_jacobian(
    model: &dyn ProblemModel,
    point: &SolverPoint,
    theta: &[f64],
) -> Result<DMatrix<f64>> {
    crate::model::check_inputs(model, point.x.as_slice(), theta)?;
    let dims = model.dims();
    let layout = point.layout();
    crate::error::check_len("point", dims.primal_dual(), layout.len())?;
    let pj = model.parameter_jacobians(point.x.as_slice(), theta, point.y.as_slice(), point.z.as_slice());
    let mut out = DMatrix::zeros(layout.len(), dims.d);
    for (range, block, name) in [
        (layout.x(), &pj.l_xtheta, "l_xtheta"),
        (layout.y(), &pj.g_theta, "g_theta"),
        (layout.z(), &pj.h_theta, "h_theta"),
    ] {
        crate::error::check_len(&format!("{name} rows"), range.len(), block.nrows())?;
        crate::error::check_len(&format!("{name} columns"), dims.d, block.ncols())?;
        if !range.is_empty() && dims.d > 0 {
            out.view_mut((range.start, 0), (range.len(), dims.d)).copy_from(block);
        }
    }
    Ok(out)
}

fn inf_norm(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// [`differentiate_with`] using default options.
pub fn differentiate(model: &dyn ProblemModel, solution: &Solution, theta: &[f64]) -> Result<SensitivityResult> {
    differentiate_with(model, solution, theta, &SensitivityOptions::default())
}

/// Solve `J · dw/dθ = −∂R/∂θ` with `J` unregularized at the solution.
pub fn differentiate_with(
    model: &dyn ProblemModel,
    solution: &Solution,
    theta: &[f64],
    opts: &SensitivityOptions,
) -> Result<SensitivityResult> {
    let point = &solution.point;
    let cache = evaluate(model, point.x.as_slice(), theta, point.y.as_slice(), point.z.as_slice())?;
    let cone = model.cone();
    let residual = residual_from_cache(&cache, point, &solution.outer, cone);
    let outer = OuterState {
        rho: solution.outer.rho.max(opts.rho_floor),
        ..solution.outer.clone()
    };
    let jac = jacobian_from_cache(&cache, point, &outer, cone, 0.0, 0.0);
    let rhs = -residual_parameter_jacobian(model, point, theta)?;
    let d = rhs.ncols();
    let x_rows = model.dims().n;

    // Rows are equilibrated so that the `ρ` rows do not set the scale of
    // the rank decision.
    let scale = DVector::from_iterator(
        jac.nrows(),
        jac.row_iter().map(|r| {
            let m = inf_norm(r.iter().copied());
            if m > 0.0 {
                1.0 / m
            } else {
                1.0
            }
        }),
    );
    let scaled = DMatrix::from_diagonal(&scale) * &jac;
    let svd = scaled.svd(true, true);
    let (smin, smax) = if svd.singular_values.is_empty() {
        (1.0, 1.0)
    } else {
        (svd.singular_values.min(), svd.singular_values.max())
    };
    let rcond = if smax > 0.0 { smin / smax } else { 0.0 };
    let used_least_squares = rcond <= opts.rank_tol;
    let cutoff = if used_least_squares { opts.rank_tol * smax } else { 0.0 };
    let cols = map_indexed(opts.execution, d, |j| {
        let b = scale.component_mul(&rhs.column(j));
        svd.solve(&b, cutoff)
    })
    .into_iter()
    .collect::<std::result::Result<Vec<_>, _>>()
    .map_err(|e| Error::NumericalFailure(format!("sensitivity solve: {e}")))?;

    let mut dw = DMatrix::zeros(jac.nrows(), d);
    for (j, col) in cols.iter().enumerate() {
        dw.set_column(j, col);
    }
    if dw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite sensitivity".into()));
    }
    Ok(SensitivityResult {
        dw_dtheta: dw,
        residual_norm_at_solution: inf_norm(residual.iter().copied()),
        used_least_squares,
        rcond,
        x_rows,
    })
}
