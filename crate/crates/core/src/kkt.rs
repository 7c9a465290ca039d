//! Primal-dual KKT system of the relaxed subproblem.
//!
//! The iterate is `w = (x, r, s, y, z, t)` and the residual rows are, in
//! this order,
//!
//! ```text
//! L_x = c_x + g_xᵀ y + h_xᵀ z
//! L_r = λ + ρ r − y
//! L_s = −z − t
//! L_y = g − r
//! L_z = h − s
//! L_t = s ∘ t − κ e
//! ```
//!
//! Newton directions come from the 3×3 block system in `(Δx, Δy, Δz)`
//! obtained by eliminating `Δr`, `Δs` and `Δt`, followed by
//! back-substitution. Every direction is checked against the full 6×6
//! system and refined on it when needed.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cone::{cone_product, cone_target, ConeOperator, ConeSpec};
use crate::error::{check_len, Error, Result};
use crate::linsolve::{
    correct_inertia, solve_refined, Inertia, InertiaOptions, RegularizationState,
    SymmetricFactorization,
};
use crate::model::{evaluate, Dims, EvaluationCache, ProblemModel};

/// Row/column ranges of each block in the canonical `(x, r, s, y, z, t)`
/// ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    pub m: usize,
    pub p: usize,
}

impl Layout {
    pub fn new(dims: Dims) -> Self {
        Self {
            n: dims.n,
            m: dims.m,
            p: dims.p,
        }
    }
    pub fn len(&self) -> usize {
        self.n + 2 * self.m + 3 * self.p
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn x(&self) -> Range<usize> {
        0..self.n
    }
    pub fn r(&self) -> Range<usize> {
        let o = self.n;
        o..o + self.m
    }
    pub fn s(&self) -> Range<usize> {
        let o = self.n + self.m;
        o..o + self.p
    }
    pub fn y(&self) -> Range<usize> {
        let o = self.n + self.m + self.p;
        o..o + self.m
    }
    pub fn z(&self) -> Range<usize> {
        let o = self.n + 2 * self.m + self.p;
        o..o + self.p
    }
    pub fn t(&self) -> Range<usize> {
        let o = self.n + 2 * self.m + 2 * self.p;
        o..o + self.p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverPoint {
    pub x: DVector<f64>,
    /// Equality slack.
    pub r: DVector<f64>,
    /// Cone slack.
    pub s: DVector<f64>,
    /// Equality dual.
    pub y: DVector<f64>,
    /// Cone-constraint dual.
    pub z: DVector<f64>,
    /// Cone-slack dual.
    pub t: DVector<f64>,
}

impl SolverPoint {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            x: DVector::zeros(dims.n),
            r: DVector::zeros(dims.m),
            s: DVector::zeros(dims.p),
            y: DVector::zeros(dims.m),
            z: DVector::zeros(dims.p),
            t: DVector::zeros(dims.p),
        }
    }

    pub fn layout(&self) -> Layout {
        Layout {
            n: self.x.len(),
            m: self.r.len(),
            p: self.s.len(),
        }
    }

    /// Stack into the canonical `(x, r, s, y, z, t)` vector.
    pub fn to_vector(&self) -> DVector<f64> {
        let parts = [&self.x, &self.r, &self.s, &self.y, &self.z, &self.t];
        DVector::from_iterator(
            self.layout().len(),
            parts.into_iter().flat_map(|v| v.iter().copied()),
        )
    }

    pub fn from_vector(layout: Layout, v: &DVector<f64>) -> Result<Self> {
        check_len("primal-dual vector", layout.len(), v.len())?;
        let take = |r: Range<usize>| v.rows(r.start, r.len()).into_owned();
        Ok(Self {
            x: take(layout.x()),
            r: take(layout.r()),
            s: take(layout.s()),
            y: take(layout.y()),
            z: take(layout.z()),
            t: take(layout.t()),
        })
    }

    fn check(&self, dims: Dims) -> Result<()> {
        check_len("x", dims.n, self.x.len())?;
        check_len("r", dims.m, self.r.len())?;
        check_len("y", dims.m, self.y.len())?;
        check_len("s", dims.p, self.s.len())?;
        check_len("z", dims.p, self.z.len())?;
        check_len("t", dims.p, self.t.len())
    }
}

/// Outer-loop parameters `(λ, ρ, κ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterState {
    /// Augmented-Lagrangian multiplier estimate.
    pub lambda: DVector<f64>,
    /// Penalty.
    pub rho: f64,
    /// Central-path parameter.
    pub kappa: f64,
}

impl OuterState {
    pub fn initial(m: usize) -> Self {
        Self {
            lambda: DVector::zeros(m),
            rho: 1.0,
            kappa: 1.0,
        }
    }
}

/// Residual rows from a cached evaluation.
pub fn residual_from_cache(
    cache: &EvaluationCache,
    point: &SolverPoint,
    outer: &OuterState,
    cone: &ConeSpec,
) -> DVector<f64> {
    let layout = point.layout();
    let mut res = DVector::zeros(layout.len());
    let mut lx = cache.c_x.clone();
    if layout.m > 0 {
        lx += cache.g_x.tr_mul(&point.y);
    }
    if layout.p > 0 {
        lx += cache.h_x.tr_mul(&point.z);
    }
    let lr = &outer.lambda + &point.r * outer.rho - &point.y;
    let ls = -&point.z - &point.t;
    let ly = &cache.g - &point.r;
    let lz = &cache.h - &point.s;
    let lt = cone_product(point.s.as_slice(), point.t.as_slice(), cone)
        .expect("cone dimensions checked by caller")
        - cone_target(cone) * outer.kappa;
    for (range, block) in [
        (layout.x(), lx),
        (layout.r(), lr),
        (layout.s(), ls),
        (layout.y(), ly),
        (layout.z(), lz),
        (layout.t(), lt),
    ] {
        res.rows_mut(range.start, range.len()).copy_from(&block);
    }
    res
}

/// `R(w; θ, λ, ρ, κ)` in canonical row order.
pub fn residual(
    model: &dyn ProblemModel,
    point: &SolverPoint,
    theta: &[f64],
    outer: &OuterState,
) -> Result<DVector<f64>> {
    point.check(model.dims())?;
    let cache = evaluate(
        model,
        point.x.as_slice(),
        theta,
        point.y.as_slice(),
        point.z.as_slice(),
    )?;
    Ok(residual_from_cache(&cache, point, outer, model.cone()))
}

fn put(m: &mut DMatrix<f64>, rows: Range<usize>, cols: Range<usize>, block: &DMatrix<f64>) {
    if !rows.is_empty() && !cols.is_empty() {
        m.view_mut((rows.start, cols.start), (rows.len(), cols.len()))
            .copy_from(block);
    }
}

fn put_diag(m: &mut DMatrix<f64>, rows: Range<usize>, cols: Range<usize>, value: f64) {
    for (i, j) in rows.zip(cols) {
        m[(i, j)] += value;
    }
}

/// Regularized Jacobian `J` of the residual (exact at `ε_p = ε_d = 0`).
pub fn jacobian_from_cache(
    cache: &EvaluationCache,
    point: &SolverPoint,
    outer: &OuterState,
    cone: &ConeSpec,
    eps_p: f64,
    eps_d: f64,
) -> DMatrix<f64> {
    let l = point.layout();
    let mut j = DMatrix::zeros(l.len(), l.len());
    let mut hess = cache.l_xx.clone();
    put_diag(&mut hess, 0..l.n, 0..l.n, eps_p);
    put(&mut j, l.x(), l.x(), &hess);
    put(&mut j, l.x(), l.y(), &cache.g_x.transpose());
    put(&mut j, l.x(), l.z(), &cache.h_x.transpose());

    put_diag(&mut j, l.r(), l.r(), outer.rho + eps_p);
    put_diag(&mut j, l.r(), l.y(), -1.0);

    put_diag(&mut j, l.s(), l.s(), eps_p);
    put_diag(&mut j, l.s(), l.z(), -1.0);
    put_diag(&mut j, l.s(), l.t(), -1.0);

    put(&mut j, l.y(), l.x(), &cache.g_x);
    put_diag(&mut j, l.y(), l.r(), -1.0);
    put_diag(&mut j, l.y(), l.y(), -eps_d);

    put(&mut j, l.z(), l.x(), &cache.h_x);
    put_diag(&mut j, l.z(), l.s(), -1.0);
    put_diag(&mut j, l.z(), l.z(), -eps_d);

    let p_s = ConeOperator::product(point.t.as_slice(), cone).to_dense();
    let p_t = ConeOperator::product(point.s.as_slice(), cone).to_dense();
    put(&mut j, l.t(), l.s(), &p_s);
    put(&mut j, l.t(), l.t(), &p_t);
    put_diag(&mut j, l.t(), l.t(), -eps_d);
    j
}

/// The 6×6 block Jacobian of the residual, with regularization.
pub fn full_jacobian(
    model: &dyn ProblemModel,
    point: &SolverPoint,
    theta: &[f64],
    outer: &OuterState,
    reg: &RegularizationState,
) -> Result<DMatrix<f64>> {
    point.check(model.dims())?;
    let cache = evaluate(
        model,
        point.x.as_slice(),
        theta,
        point.y.as_slice(),
        point.z.as_slice(),
    )?;
    Ok(jacobian_from_cache(
        &cache,
        point,
        outer,
        model.cone(),
        reg.eps_p,
        reg.eps_d,
    ))
}

/// Reduced `(Δx, Δy, Δz)` system together with what is needed to recover
/// `(Δr, Δs, Δt)`.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    /// Symmetric matrix handed to the factorization.
    pub k: DMatrix<f64>,
    /// Exact reduced operator. Equals `k` unless a second-order segment makes
    /// `(P_s + ε_p P̄_t)⁻¹ P̄_t` nonsymmetric, in which case `k` carries its
    /// symmetric part and refinement runs against this matrix.
    pub operator: DMatrix<f64>,
    /// `−(L_x, L̄_y, L̄_z)` for the residual used at assembly.
    pub rhs: DVector<f64>,
    layout: Layout,
    rho_eps: f64,
    eps_p: f64,
    /// `P_s + ε_p P̄_t`.
    schur: ConeOperator,
    /// `P̄_t = P_t − ε_d I`.
    pbar_t: ConeOperator,
}

impl ReducedSystem {
    fn assemble(
        cache: &EvaluationCache,
        point: &SolverPoint,
        outer: &OuterState,
        cone: &ConeSpec,
        eps_p: f64,
        eps_d: f64,
        rows: &DVector<f64>,
    ) -> Result<Self> {
        let layout = point.layout();
        let Layout { n, m, p } = layout;
        let order = n + m + p;
        let rho_eps = outer.rho + eps_p;

        let p_s = ConeOperator::product(point.t.as_slice(), cone);
        let p_t = ConeOperator::product(point.s.as_slice(), cone);
        let pbar_t = p_t.shifted(-eps_d);
        let schur = p_s.combine(eps_p, &pbar_t, 0.0);
        let coupling = schur
            .solve_op(&pbar_t)
            .ok_or_else(|| Error::NumericalFailure("singular cone Schur block".into()))?
            .shifted(eps_d)
            .to_dense();

        let mut operator = DMatrix::zeros(order, order);
        let mut hess = cache.l_xx.clone();
        put_diag(&mut hess, 0..n, 0..n, eps_p);
        put(&mut operator, 0..n, 0..n, &hess);
        put(&mut operator, n..n + m, 0..n, &cache.g_x);
        put(&mut operator, 0..n, n..n + m, &cache.g_x.transpose());
        put_diag(&mut operator, n..n + m, n..n + m, -(1.0 / rho_eps + eps_d));
        put(&mut operator, n + m..order, 0..n, &cache.h_x);
        put(&mut operator, 0..n, n + m..order, &cache.h_x.transpose());
        put(&mut operator, n + m..order, n + m..order, &(-&coupling));

        let mut k = operator.clone();
        if p > 0 {
            let sym = (&coupling + coupling.transpose()) * -0.5;
            put(&mut k, n + m..order, n + m..order, &sym);
        }
        for j in 0..order {
            for i in j + 1..order {
                k[(j, i)] = k[(i, j)];
            }
        }

        let mut sys = Self {
            k,
            operator,
            rhs: DVector::zeros(order),
            layout,
            rho_eps,
            eps_p,
            schur,
            pbar_t,
        };
        sys.rhs = sys.reduced_rhs(rows)?;
        Ok(sys)
    }

    fn block(&self, rows: &DVector<f64>, r: Range<usize>) -> DVector<f64> {
        rows.rows(r.start, r.len()).into_owned()
    }

    /// `−(L_x, L̄_y, L̄_z)` for arbitrary residual rows.
    pub fn reduced_rhs(&self, rows: &DVector<f64>) -> Result<DVector<f64>> {
        let l = self.layout;
        let lx = self.block(rows, l.x());
        let lr = self.block(rows, l.r());
        let ls = self.block(rows, l.s());
        let ly = self.block(rows, l.y());
        let lz = self.block(rows, l.z());
        let lt = self.block(rows, l.t());
        let lbar_y = ly + lr / self.rho_eps;
        let inner = self.pbar_t.mul_vec(&ls) + lt;
        let lbar_z = lz
            + self
                .schur
                .solve_vec(&inner)
                .ok_or_else(|| Error::NumericalFailure("singular cone Schur block".into()))?;
        let mut rhs = DVector::zeros(l.n + l.m + l.p);
        rhs.rows_mut(0, l.n).copy_from(&(-lx));
        rhs.rows_mut(l.n, l.m).copy_from(&(-lbar_y));
        rhs.rows_mut(l.n + l.m, l.p).copy_from(&(-lbar_z));
        Ok(rhs)
    }

    /// Back-substitute `(Δr, Δs, Δt)` from `(Δx, Δy, Δz)`.
    pub fn recover(&self, dxyz: &DVector<f64>, rows: &DVector<f64>) -> Result<SolverPoint> {
        let l = self.layout;
        check_len("reduced direction", l.n + l.m + l.p, dxyz.len())?;
        let dx = dxyz.rows(0, l.n).into_owned();
        let dy = dxyz.rows(l.n, l.m).into_owned();
        let dz = dxyz.rows(l.n + l.m, l.p).into_owned();
        let lr = self.block(rows, l.r());
        let ls = self.block(rows, l.s());
        let lt = self.block(rows, l.t());

        let dr = (&dy - lr) / self.rho_eps;
        let inner = self.pbar_t.mul_vec(&(&dz - &ls)) - lt;
        let ds = self
            .schur
            .solve_vec(&inner)
            .ok_or_else(|| Error::NumericalFailure("singular cone Schur block".into()))?;
        let dt = &ds * self.eps_p - &dz + ls;
        Ok(SolverPoint {
            x: dx,
            r: dr,
            s: ds,
            y: dy,
            z: dz,
            t: dt,
        })
    }
}

/// Symmetric reduced system `K [Δx; Δy; Δz] = rhs` at the given
/// regularization.
pub fn assemble_symmetric(
    model: &dyn ProblemModel,
    point: &SolverPoint,
    theta: &[f64],
    outer: &OuterState,
    reg: &RegularizationState,
) -> Result<ReducedSystem> {
    point.check(model.dims())?;
    let cache = evaluate(
        model,
        point.x.as_slice(),
        theta,
        point.y.as_slice(),
        point.z.as_slice(),
    )?;
    let rows = residual_from_cache(&cache, point, outer, model.cone());
    ReducedSystem::assemble(
        &cache,
        point,
        outer,
        model.cone(),
        reg.eps_p,
        reg.eps_d,
        &rows,
    )
}

/// Recover the full increment from a reduced solution; `rows` are the
/// residual rows the system was assembled for.
pub fn recover_directions(
    dxyz: &DVector<f64>,
    system: &ReducedSystem,
    rows: &DVector<f64>,
) -> Result<SolverPoint> {
    system.recover(dxyz, rows)
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSolverOptions {
    pub max_refine: usize,
    pub refine_tol: f64,
    /// Acceptance threshold for `‖J Δw + R‖∞ / (1 + ‖R‖∞)`.
    pub direction_tol: f64,
    pub inertia: InertiaOptions,
}

impl Default for LinearSolverOptions {
    fn default() -> Self {
        Self {
            max_refine: 10,
            refine_tol: 1e-12,
            direction_tol: 1e-8,
            inertia: InertiaOptions::default(),
        }
    }
}

/// Diagnostics of one direction computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionInfo {
    pub reg: RegularizationState,
    pub reduced_refine_passes: usize,
    pub full_refine_passes: usize,
    /// `‖J Δw + R‖∞` of the returned direction.
    pub full_residual: f64,
    /// The reduced path failed and the full system was solved directly.
    pub used_full_fallback: bool,
}

/// Everything a direction is computed from at one iterate.
pub(crate) struct KktPoint<'a> {
    pub cache: &'a EvaluationCache,
    pub point: &'a SolverPoint,
    pub outer: &'a OuterState,
    pub cone: &'a ConeSpec,
}

pub(crate) fn direction_from_cache(
    kp: &KktPoint<'_>,
    rows: &DVector<f64>,
    reg: &RegularizationState,
    opts: &LinearSolverOptions,
) -> Result<(SolverPoint, DirectionInfo)> {
    let layout = kp.point.layout();
    let target = Inertia::new(layout.n, layout.m + layout.p, 0);
    let assemble = |ep: f64, ed: f64| {
        ReducedSystem::assemble(kp.cache, kp.point, kp.outer, kp.cone, ep, ed, rows)
    };
    let (fact, reg) = correct_inertia(
        |ep, ed| assemble(ep, ed).map(|s| s.k),
        target,
        reg,
        &opts.inertia,
    )?;
    let system = assemble(reg.eps_p, reg.eps_d)?;
    let jac = jacobian_from_cache(kp.cache, kp.point, kp.outer, kp.cone, reg.eps_p, reg.eps_d);
    solve_with_system(&system, &fact, &jac, rows, reg, opts)
}

fn reduced_solve(
    system: &ReducedSystem,
    fact: &SymmetricFactorization,
    rows: &DVector<f64>,
    opts: &LinearSolverOptions,
) -> Result<(SolverPoint, usize)> {
    let rhs = system.reduced_rhs(rows)?;
    let solved = solve_refined(fact, &system.operator, &rhs, opts.max_refine, opts.refine_tol)?;
    Ok((system.recover(&solved.solution, rows)?, solved.passes))
}

fn solve_with_system(
    system: &ReducedSystem,
    fact: &SymmetricFactorization,
    jac: &DMatrix<f64>,
    rows: &DVector<f64>,
    reg: RegularizationState,
    opts: &LinearSolverOptions,
) -> Result<(SolverPoint, DirectionInfo)> {
    let layout = system.layout;
    let tol = opts.direction_tol * (1.0 + inf_norm(rows));
    let (first, reduced_passes) = reduced_solve(system, fact, rows, opts)?;
    let mut dw = first.to_vector();
    let full_error = |dw: &DVector<f64>| -> DVector<f64> { -rows - jac * dw };

    let mut err = full_error(&dw);
    let mut res = inf_norm(&err);
    let mut full_passes = 0;
    while res > opts.refine_tol * (1.0 + inf_norm(rows)) && full_passes < opts.max_refine {
        let (corr, _) = reduced_solve(system, fact, &(-&err), opts)?;
        let candidate = &dw + corr.to_vector();
        let cand_err = full_error(&candidate);
        let cand_res = inf_norm(&cand_err);
        full_passes += 1;
        if !(cand_res < res) {
            break;
        }
        dw = candidate;
        err = cand_err;
        res = cand_res;
    }

    let mut used_full_fallback = false;
    if !(res <= tol) {
        // Fall back to a dense LU of the full system.
        if let Some(sol) = jac.clone().lu().solve(&(-rows)) {
            let fb_res = inf_norm(&full_error(&sol));
            if fb_res < res {
                dw = sol;
                res = fb_res;
                used_full_fallback = true;
            }
        }
    }
    if !(res <= tol) || dw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure(format!(
            "search direction violates the full KKT system: residual {res:e} > {tol:e}"
        )));
    }
    Ok((
        SolverPoint::from_vector(layout, &dw)?,
        DirectionInfo {
            reg,
            reduced_refine_passes: reduced_passes,
            full_refine_passes: full_passes,
            full_residual: res,
            used_full_fallback,
        },
    ))
}

/// Newton direction at `point`: symmetric reduction, inertia correction,
/// refined solve and recovery.
pub fn search_direction(
    model: &dyn ProblemModel,
    point: &SolverPoint,
    theta: &[f64],
    outer: &OuterState,
    reg: &RegularizationState,
    opts: &LinearSolverOptions,
) -> Result<(SolverPoint, DirectionInfo)> {
    point.check(model.dims())?;
    let cache = evaluate(
        model,
        point.x.as_slice(),
        theta,
        point.y.as_slice(),
        point.z.as_slice(),
    )?;
    let rows = residual_from_cache(&cache, point, outer, model.cone());
    let kp = KktPoint {
        cache: &cache,
        point,
        outer,
        cone: model.cone(),
    };
    direction_from_cache(&kp, &rows, reg, opts)
}
