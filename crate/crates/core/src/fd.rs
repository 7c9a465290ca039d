//! Central finite differences used by derivative validation and the
//! finite-difference model wrapper.

use nalgebra::{DMatrix, DVector};

use crate::par::{map_indexed, Execution};

/// Jacobian of `f` at `x`, one column per coordinate.
pub(crate) fn jacobian<F>(exec: Execution, f: F, x: &[f64], rows: usize, step: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> DVector<f64> + Sync + Send,
{
    let cols = map_indexed(exec, x.len(), |j| {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += step;
        xm[j] -= step;
        (f(&xp) - f(&xm)) / (2.0 * step)
    });
    let mut out = DMatrix::zeros(rows, x.len());
    for (j, col) in cols.iter().enumerate() {
        out.set_column(j, col);
    }
    out
}

pub(crate) fn gradient<F>(exec: Execution, f: F, x: &[f64], step: f64) -> DVector<f64>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    let g = jacobian(exec, |v| DVector::from_element(1, f(v)), x, 1, step);
    g.row(0).transpose()
}

/// Mixed second derivatives `∂²f/∂a_i∂b_j` of a scalar `f(a, b)`.
pub(crate) fn cross_hessian<F>(exec: Execution, f: F, a: &[f64], b: &[f64], step: f64) -> DMatrix<f64>
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync + Send,
{
    let (na, nb) = (a.len(), b.len());
    let entries = map_indexed(exec, na * nb, |k| {
        let (i, j) = (k / nb, k % nb);
        let eval = |si: f64, sj: f64| {
            let mut ap = a.to_vec();
            let mut bp = b.to_vec();
            ap[i] += si * step;
            bp[j] += sj * step;
            f(&ap, &bp)
        };
        (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * step * step)
    });
    DMatrix::from_row_slice(na, nb, &entries)
}

/// Hessian of a scalar `f(x)` from second differences.
pub(crate) fn hessian<F>(exec: Execution, f: F, x: &[f64], step: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    let n = x.len();
    let f0 = f(x);
    let entries = map_indexed(exec, n * n, |k| {
        let (i, j) = (k / n, k % n);
        if j < i {
            return 0.0;
        }
        let eval = |si: f64, sj: f64| {
            let mut xp = x.to_vec();
            xp[i] += si * step;
            xp[j] += sj * step;
            f(&xp)
        };
        if i == j {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += step;
            xm[i] -= step;
            (f(&xp) - 2.0 * f0 + f(&xm)) / (step * step)
        } else {
            (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                / (4.0 * step * step)
        }
    });
    let upper = DMatrix::from_row_slice(n, n, &entries);
    let mut h = upper.clone();
    for i in 0..n {
        for j in 0..i {
            h[(i, j)] = upper[(j, i)];
        }
    }
    h
}
