//! Dense symmetric indefinite factorization with inertia, iterative
//! refinement, and adaptive inertia correction.
//!
//! The factorization is `P K Pᵀ = L D Lᵀ` with `L` unit lower triangular and
//! `D` block diagonal with 1×1 and 2×2 blocks, pivoted with the
//! Bunch-Kaufman rule. The inertia is read off `D`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bunch-Kaufman growth bound `(1 + √17) / 8`.
const BK_ALPHA: f64 = 0.640_388_203_202_208_4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

impl Inertia {
    pub fn new(positive: usize, negative: usize, zero: usize) -> Self {
        Self {
            positive,
            negative,
            zero,
        }
    }

    pub fn order(&self) -> usize {
        self.positive + self.negative + self.zero
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pivot {
    One(usize),
    Two(usize),
}

#[derive(Debug, Clone)]
pub struct SymmetricFactorization {
    /// Strict lower part holds `L`; diagonal and first subdiagonal of 2×2
    /// pivots hold `D`.
    factors: DMatrix<f64>,
    pivots: Vec<Pivot>,
    /// `perm[i]` is the original row placed at position `i`.
    perm: Vec<usize>,
    inertia: Inertia,
}

impl SymmetricFactorization {
    pub fn inertia(&self) -> Inertia {
        self.inertia
    }

    pub fn order(&self) -> usize {
        self.perm.len()
    }

    /// Solve `K u = rhs` with the stored factors.
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let n = self.order();
        let f = &self.factors;
        let mut w: DVector<f64> = DVector::from_iterator(n, self.perm.iter().map(|&i| rhs[i]));
        // L y = Pb
        for pivot in &self.pivots {
            let (k, width) = match *pivot {
                Pivot::One(k) => (k, 1),
                Pivot::Two(k) => (k, 2),
            };
            for c in k..k + width {
                let wc = w[c];
                if wc != 0.0 {
                    for i in k + width..n {
                        w[i] -= f[(i, c)] * wc;
                    }
                }
            }
        }
        // D v = y
        for pivot in &self.pivots {
            match *pivot {
                Pivot::One(k) => w[k] /= f[(k, k)],
                Pivot::Two(k) => {
                    let (a, b, d) = (f[(k, k)], f[(k + 1, k)], f[(k + 1, k + 1)]);
                    let det = a * d - b * b;
                    let (u0, u1) = (w[k], w[k + 1]);
                    w[k] = (d * u0 - b * u1) / det;
                    w[k + 1] = (a * u1 - b * u0) / det;
                }
            }
        }
        // Lᵀ x = v
        for pivot in self.pivots.iter().rev() {
            let (k, width) = match *pivot {
                Pivot::One(k) => (k, 1),
                Pivot::Two(k) => (k, 2),
            };
            for c in k..k + width {
                let mut acc = w[c];
                for i in k + width..n {
                    acc -= f[(i, c)] * w[i];
                }
                w[c] = acc;
            }
        }
        let mut out = DVector::zeros(n);
        for (pos, &orig) in self.perm.iter().enumerate() {
            out[orig] = w[pos];
        }
        out
    }

    /// Rebuild `K` from the factors (for testing).
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let n = self.order();
        let mut l = DMatrix::identity(n, n);
        let mut d = DMatrix::zeros(n, n);
        for pivot in &self.pivots {
            let (k, width) = match *pivot {
                Pivot::One(k) => (k, 1),
                Pivot::Two(k) => (k, 2),
            };
            for c in k..k + width {
                for i in k + width..n {
                    l[(i, c)] = self.factors[(i, c)];
                }
            }
            d[(k, k)] = self.factors[(k, k)];
            if width == 2 {
                d[(k + 1, k)] = self.factors[(k + 1, k)];
                d[(k, k + 1)] = self.factors[(k + 1, k)];
                d[(k + 1, k + 1)] = self.factors[(k + 1, k + 1)];
            }
        }
        let permuted = &l * d * l.transpose();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out[(self.perm[i], self.perm[j])] = permuted[(i, j)];
            }
        }
        out
    }
}

fn swap_symmetric(a: &mut DMatrix<f64>, p: usize, q: usize) {
    if p != q {
        a.swap_rows(p, q);
        a.swap_columns(p, q);
    }
}

/// Factor a symmetric matrix. Only the lower triangle of `k` is read.
pub fn factorize(k: &DMatrix<f64>) -> SymmetricFactorization {
    assert!(k.is_square(), "factorize expects a square matrix");
    let n = k.nrows();
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            a[(i, j)] = k[(i, j)];
            a[(j, i)] = k[(i, j)];
        }
    }
    let scale = a.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let zero_tol = f64::EPSILON * (n.max(1) as f64) * scale.max(f64::MIN_POSITIVE);

    let mut perm: Vec<usize> = (0..n).collect();
    let mut pivots = Vec::new();
    let mut inertia = Inertia::default();
    let mut col = 0;
    while col < n {
        let absakk = a[(col, col)].abs();
        let (imax, colmax) = ((col + 1)..n)
            .map(|i| (i, a[(i, col)].abs()))
            .fold((col, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });

        let (kp, width) = if absakk.max(colmax) == 0.0 {
            (col, 1)
        } else if absakk >= BK_ALPHA * colmax {
            (col, 1)
        } else {
            let rowmax = (col..n)
                .filter(|&j| j != imax)
                .map(|j| a[(imax, j)].abs())
                .fold(0.0, f64::max);
            if absakk * rowmax >= BK_ALPHA * colmax * colmax {
                (col, 1)
            } else if a[(imax, imax)].abs() >= BK_ALPHA * rowmax {
                (imax, 1)
            } else {
                (imax, 2)
            }
        };

        let target = col + width - 1;
        if kp != target {
            swap_symmetric(&mut a, kp, target);
            perm.swap(kp, target);
        }

        if width == 1 {
            let d = a[(col, col)];
            if d.abs() <= zero_tol {
                inertia.zero += 1;
            } else if d > 0.0 {
                inertia.positive += 1;
            } else {
                inertia.negative += 1;
            }
            if d != 0.0 {
                for i in col + 1..n {
                    a[(i, col)] /= d;
                }
                for j in col + 1..n {
                    let ljd = a[(j, col)] * d;
                    if ljd == 0.0 {
                        continue;
                    }
                    for i in j..n {
                        let v = a[(i, col)] * ljd;
                        a[(i, j)] -= v;
                    }
                }
                for j in col + 1..n {
                    for i in j + 1..n {
                        a[(j, i)] = a[(i, j)];
                    }
                }
            }
            pivots.push(Pivot::One(col));
        } else {
            let (d11, d21, d22) = (a[(col, col)], a[(col + 1, col)], a[(col + 1, col + 1)]);
            let det = d11 * d22 - d21 * d21;
            let tr = d11 + d22;
            let disc = ((d11 - d22) * (d11 - d22) + 4.0 * d21 * d21).sqrt();
            for eig in [0.5 * (tr + disc), 0.5 * (tr - disc)] {
                if eig.abs() <= zero_tol {
                    inertia.zero += 1;
                } else if eig > 0.0 {
                    inertia.positive += 1;
                } else {
                    inertia.negative += 1;
                }
            }
            for i in col + 2..n {
                let (b1, b2) = (a[(i, col)], a[(i, col + 1)]);
                a[(i, col)] = (d22 * b1 - d21 * b2) / det;
                a[(i, col + 1)] = (d11 * b2 - d21 * b1) / det;
            }
            for j in col + 2..n {
                for i in j..n {
                    let v = a[(i, col)] * (d11 * a[(j, col)] + d21 * a[(j, col + 1)])
                        + a[(i, col + 1)] * (d21 * a[(j, col)] + d22 * a[(j, col + 1)]);
                    a[(i, j)] -= v;
                }
            }
            for j in col + 2..n {
                for i in j + 1..n {
                    a[(j, i)] = a[(i, j)];
                }
            }
            pivots.push(Pivot::Two(col));
        }
        col += width;
    }

    SymmetricFactorization {
        factors: a,
        pivots,
        perm,
        inertia,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinedSolve {
    pub solution: DVector<f64>,
    /// `‖op·u − rhs‖∞` of the returned iterate.
    pub residual: f64,
    pub passes: usize,
    pub converged: bool,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Solve `op·u = rhs` using `fact` (a factorization of `op` or of a nearby
/// matrix) followed by iterative refinement measured against `op`.
pub fn solve_refined(
    fact: &SymmetricFactorization,
    op: &DMatrix<f64>,
    rhs: &DVector<f64>,
    max_refine: usize,
    refine_tol: f64,
) -> Result<RefinedSolve> {
    let target = refine_tol * (1.0 + inf_norm(rhs));
    let mut u = fact.solve(rhs);
    let mut best = u.clone();
    let mut best_res = f64::INFINITY;
    let mut passes = 0;
    loop {
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("non-finite refinement iterate".into()));
        }
        let r = rhs - op * &u;
        let res = inf_norm(&r);
        let improved = res < best_res;
        if improved {
            best_res = res;
            best = u.clone();
        }
        if res <= target || passes >= max_refine || !improved {
            break;
        }
        u += fact.solve(&r);
        passes += 1;
    }
    Ok(RefinedSolve {
        solution: best,
        residual: best_res,
        passes,
        converged: best_res <= target,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InertiaOptions {
    pub eps_p_initial: f64,
    pub kappa_plus: f64,
    /// Growth factor used while no correction has ever succeeded.
    pub kappa_plus_first: f64,
    pub kappa_minus: f64,
    pub eps_p_min: f64,
    pub eps_p_max: f64,
    pub delta_d: f64,
}

impl Default for InertiaOptions {
    fn default() -> Self {
        Self {
            eps_p_initial: 1e-4,
            kappa_plus: 8.0,
            kappa_plus_first: 100.0,
            kappa_minus: 1.0 / 3.0,
            eps_p_min: 1e-20,
            eps_p_max: 1e40,
            delta_d: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RegularizationState {
    pub eps_p: f64,
    pub eps_d: f64,
    /// Last nonzero primal regularization that produced correct inertia.
    pub last_eps_p: f64,
}

/// Find regularization `(ε_p, ε_d)` for which `assemble(ε_p, ε_d)` has the
/// `target` inertia, following the Ipopt schedule. An `Err` from `assemble`
/// counts as a failed trial.
pub fn correct_inertia<F>(
    mut assemble: F,
    target: Inertia,
    reg: &RegularizationState,
    opts: &InertiaOptions,
) -> Result<(SymmetricFactorization, RegularizationState)>
where
    F: FnMut(f64, f64) -> Result<DMatrix<f64>>,
{
    let mut state = RegularizationState {
        eps_p: 0.0,
        eps_d: 0.0,
        last_eps_p: reg.last_eps_p,
    };
    let mut trial = |eps_p: f64, eps_d: f64| -> Option<SymmetricFactorization> {
        let k = assemble(eps_p, eps_d).ok()?;
        if k.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(factorize(&k))
    };

    let first = trial(0.0, 0.0);
    if let Some(f) = &first {
        if f.inertia() == target {
            return Ok((first.unwrap(), state));
        }
    }
    if first.as_ref().is_none_or(|f| f.inertia().zero > 0) {
        state.eps_d = opts.delta_d;
    }
    state.eps_p = if state.last_eps_p == 0.0 {
        opts.eps_p_initial
    } else {
        opts.eps_p_min.max(opts.kappa_minus * state.last_eps_p)
    };
    loop {
        if state.eps_p > opts.eps_p_max {
            return Err(Error::InertiaCorrectionFailure { eps_p: state.eps_p });
        }
        let attempt = trial(state.eps_p, state.eps_d);
        match attempt {
            Some(f) if f.inertia() == target => {
                state.last_eps_p = state.eps_p;
                return Ok((f, state));
            }
            Some(f) if f.inertia().zero > 0 && state.eps_d == 0.0 => {
                state.eps_d = opts.delta_d;
            }
            _ => {}
        }
        state.eps_p *= if state.last_eps_p == 0.0 {
            opts.kappa_plus_first
        } else {
            opts.kappa_plus
        };
    }
}
