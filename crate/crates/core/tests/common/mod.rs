//! Random instances shared by the property tests and the acceptance suite.
#![allow(dead_code)]

use coneal::{ConeSpec, Dims, OuterState, ParameterJacobians, ProblemModel, Segment, SolverPoint};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn vector(rng: &mut impl Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| uniform(rng, -scale, scale))
}

pub fn matrix(rng: &mut impl Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| uniform(rng, -scale, scale))
}

pub fn symmetric(rng: &mut impl Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let a = matrix(rng, n, n, scale);
    (&a + a.transpose()) * 0.5
}

/// The three families the cone properties are checked on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeFamily {
    Orthant,
    SecondOrder,
    Product,
}

pub const CONE_FAMILIES: [ConeFamily; 3] = [ConeFamily::Orthant, ConeFamily::SecondOrder, ConeFamily::Product];

pub fn random_cone(rng: &mut impl Rng, family: ConeFamily) -> ConeSpec {
    match family {
        ConeFamily::Orthant => ConeSpec::orthant(rng.random_range(1..=5)),
        ConeFamily::SecondOrder => ConeSpec::second_order(rng.random_range(1..=5)),
        ConeFamily::Product => {
            let k = rng.random_range(2..=3);
            let segments = (0..k)
                .map(|_| {
                    if rng.random_bool(0.5) {
                        Segment::Orthant(rng.random_range(1..=3))
                    } else {
                        Segment::SecondOrder(rng.random_range(2..=4))
                    }
                })
                .collect();
            ConeSpec::new(segments)
        }
    }
}

/// Mixed cone of total dimension `p`, using orthant, `Q₂` and `Q₃` segments.
pub fn random_cone_of_dim(rng: &mut impl Rng, p: usize) -> ConeSpec {
    let mut segments = Vec::new();
    let mut left = p;
    while left > 0 {
        let pick = rng.random_range(0..3);
        let seg = match pick {
            1 if left >= 2 => Segment::SecondOrder(2),
            2 if left >= 3 => Segment::SecondOrder(3),
            _ => Segment::Orthant(1),
        };
        left -= seg.dim();
        segments.push(seg);
    }
    ConeSpec::new(segments)
}

/// A point strictly inside `cone`, kept away from the boundary by a margin
/// proportional to its scale.
pub fn interior_point(rng: &mut impl Rng, cone: &ConeSpec) -> DVector<f64> {
    let mut a = DVector::zeros(cone.total_dim());
    let mut k = 0;
    for seg in cone.segments() {
        match *seg {
            Segment::Orthant(q) => {
                for _ in 0..q {
                    a[k] = uniform(rng, 0.1, 2.0);
                    k += 1;
                }
            }
            Segment::SecondOrder(l) => {
                let tail = vector(rng, l - 1, 1.0);
                a[k] = tail.norm() + uniform(rng, 0.1, 2.0);
                a.rows_mut(k + 1, l - 1).copy_from(&tail);
                k += l;
            }
        }
    }
    a
}

/// Quadratic test problem with analytic derivatives:
///
/// `c = ½xᵀQx + qᵀx + θ₀·1ᵀx`,
/// `gᵢ = aᵢᵀx + ½xᵀGᵢx − bᵢ − θ₀`,
/// `hⱼ = cⱼᵀx + ½xᵀHⱼx + h₀ⱼ`.
pub struct QuadraticModel {
    pub dims: Dims,
    pub cone: ConeSpec,
    pub q: DMatrix<f64>,
    pub q_lin: DVector<f64>,
    pub a: DMatrix<f64>,
    pub g_curv: Vec<DMatrix<f64>>,
    pub b: DVector<f64>,
    pub c: DMatrix<f64>,
    pub h_curv: Vec<DMatrix<f64>>,
    pub h0: DVector<f64>,
}

impl QuadraticModel {
    pub fn random(rng: &mut impl Rng, n: usize, m: usize, p: usize) -> Self {
        Self {
            dims: Dims::new(n, m, p, 1),
            cone: random_cone_of_dim(rng, p),
            q: symmetric(rng, n, 1.0),
            q_lin: vector(rng, n, 1.0),
            a: matrix(rng, m, n, 1.0),
            g_curv: (0..m).map(|_| symmetric(rng, n, 0.5)).collect(),
            b: vector(rng, m, 1.0),
            c: matrix(rng, p, n, 1.0),
            h_curv: (0..p).map(|_| symmetric(rng, n, 0.5)).collect(),
            h0: vector(rng, p, 1.0),
        }
    }

    /// Copy equality row `from` over row `to`, making `∂g/∂x` rank deficient.
    pub fn duplicate_equality(&mut self, from: usize, to: usize) {
        let row = self.a.row(from).into_owned();
        self.a.set_row(to, &row);
        self.g_curv[to] = self.g_curv[from].clone();
        self.b[to] = self.b[from];
    }

    fn quad(mat: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(mat * x))
    }
}

impl ProblemModel for QuadraticModel {
    fn dims(&self) -> Dims {
        self.dims
    }
    fn cone(&self) -> &ConeSpec {
        &self.cone
    }
    fn objective(&self, x: &[f64], th: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        Self::quad(&self.q, &x) + self.q_lin.dot(&x) + th[0] * x.sum()
    }
    fn objective_gradient(&self, x: &[f64], th: &[f64]) -> DVector<f64> {
        let x = DVector::from_column_slice(x);
        &self.q * &x + &self.q_lin + DVector::from_element(x.len(), th[0])
    }
    fn equality(&self, x: &[f64], th: &[f64]) -> DVector<f64> {
        let x = DVector::from_column_slice(x);
        DVector::from_fn(self.dims.m, |i, _| {
            self.a.row(i).dot(&x.transpose()) + Self::quad(&self.g_curv[i], &x) - self.b[i] - th[0]
        })
    }
    fn equality_jacobian(&self, x: &[f64], _th: &[f64]) -> DMatrix<f64> {
        let x = DVector::from_column_slice(x);
        let mut j = self.a.clone();
        for i in 0..self.dims.m {
            j.set_row(i, &(j.row(i) + (&self.g_curv[i] * &x).transpose()));
        }
        j
    }
    fn cone_constraint(&self, x: &[f64], _th: &[f64]) -> DVector<f64> {
        let x = DVector::from_column_slice(x);
        DVector::from_fn(self.dims.p, |j, _| {
            self.c.row(j).dot(&x.transpose()) + Self::quad(&self.h_curv[j], &x) + self.h0[j]
        })
    }
    fn cone_jacobian(&self, x: &[f64], _th: &[f64]) -> DMatrix<f64> {
        let x = DVector::from_column_slice(x);
        let mut j = self.c.clone();
        for i in 0..self.dims.p {
            j.set_row(i, &(j.row(i) + (&self.h_curv[i] * &x).transpose()));
        }
        j
    }
    fn lagrangian_hessian(&self, _x: &[f64], _th: &[f64], y: &[f64], z: &[f64]) -> DMatrix<f64> {
        let mut h = self.q.clone();
        for (yi, gi) in y.iter().zip(&self.g_curv) {
            h += gi * *yi;
        }
        for (zj, hj) in z.iter().zip(&self.h_curv) {
            h += hj * *zj;
        }
        h
    }
    fn parameter_jacobians(&self, _x: &[f64], _th: &[f64], _y: &[f64], _z: &[f64]) -> ParameterJacobians {
        let mut pj = ParameterJacobians::zeros(self.dims);
        pj.l_xtheta.fill(1.0);
        pj.g_theta.fill(-1.0);
        pj
    }
}

/// A random primal-dual point with `s` and `t` strictly inside the cone,
/// plus a matching outer state.
pub fn random_point(rng: &mut impl Rng, model: &QuadraticModel) -> (SolverPoint, OuterState) {
    let Dims { n, m, .. } = model.dims;
    let point = SolverPoint {
        x: vector(rng, n, 1.0),
        r: vector(rng, m, 0.5),
        s: interior_point(rng, &model.cone),
        y: vector(rng, m, 1.0),
        z: vector(rng, model.dims.p, 1.0),
        t: interior_point(rng, &model.cone),
    };
    let outer = OuterState {
        lambda: vector(rng, m, 1.0),
        rho: uniform(rng, 0.5, 10.0),
        kappa: uniform(rng, 1e-3, 1.0),
    };
    (point, outer)
}

/// Sizes within `n ≤ 6, m ≤ 4, p ≤ 5`, with `m < n`.
pub fn random_dims(rng: &mut impl Rng) -> (usize, usize, usize) {
    let n = rng.random_range(2..=6);
    let m = rng.random_range(0..=4.min(n - 1));
    let p = rng.random_range(0..=5);
    (n, m, p)
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Largest `|a − f| / max(1, |f|)` over entries.
pub fn max_rel_error<'a>(a: impl IntoIterator<Item = &'a f64>, f: impl IntoIterator<Item = &'a f64>) -> f64 {
    a.into_iter()
        .zip(f)
        .map(|(a, f)| (a - f).abs() / f.abs().max(1.0))
        .fold(0.0, f64::max)
}

use coneal::cone::{cone_product, cone_product_jacobians, cone_target, in_cone, max_step_to_boundary};
use coneal::kkt::{assemble_symmetric, full_jacobian, recover_directions, residual, search_direction, LinearSolverOptions};
use coneal::linsolve::{correct_inertia, Inertia, InertiaOptions, RegularizationState};

/// Smallest orthant entry or `a₁ − ‖a₂:ₗ‖` over the segments.
pub fn cone_margin(a: &DVector<f64>, cone: &ConeSpec) -> f64 {
    let mut k = 0;
    let mut margin = f64::INFINITY;
    for seg in cone.segments() {
        match *seg {
            Segment::Orthant(q) => {
                for i in k..k + q {
                    margin = margin.min(a[i]);
                }
                k += q;
            }
            Segment::SecondOrder(l) => {
                margin = margin.min(a[k] - a.rows(k + 1, l - 1).norm());
                k += l;
            }
        }
    }
    margin
}

/// Identity, commutativity, product Jacobians against central differences
/// and the fraction-to-the-boundary step, on one random instance.
pub fn check_cone_instance(rng: &mut impl Rng, family: ConeFamily) -> Result<(), String> {
    let cone = random_cone(rng, family);
    let p = cone.total_dim();
    let a = vector(rng, p, 2.0);
    let b = vector(rng, p, 2.0);
    let prod = |u: &DVector<f64>, v: &DVector<f64>| cone_product(u.as_slice(), v.as_slice(), &cone).unwrap();

    let e = cone_target(&cone);
    let ea = prod(&e, &a);
    if inf_norm(&(&ea - &a)) > 1e-14 * (1.0 + inf_norm(&a)) {
        return Err(format!("e∘a ≠ a on {cone:?}: {ea} vs {a}"));
    }
    let ab = prod(&a, &b);
    let ba = prod(&b, &a);
    if inf_norm(&(&ab - &ba)) > 1e-14 * (1.0 + inf_norm(&ab)) {
        return Err(format!("a∘b ≠ b∘a on {cone:?}"));
    }

    let (d_ds, d_dt) = cone_product_jacobians(a.as_slice(), b.as_slice(), &cone).unwrap();
    let h = 1e-6;
    let mut fd_s = DMatrix::zeros(p, p);
    let mut fd_t = DMatrix::zeros(p, p);
    for k in 0..p {
        let mut step = DVector::zeros(p);
        step[k] = h;
        fd_s.set_column(k, &((prod(&(&a + &step), &b) - prod(&(&a - &step), &b)) / (2.0 * h)));
        fd_t.set_column(k, &((prod(&a, &(&b + &step)) - prod(&a, &(&b - &step))) / (2.0 * h)));
    }
    let err = max_rel_error(d_ds.iter(), fd_s.iter()).max(max_rel_error(d_dt.iter(), fd_t.iter()));
    if err > 1e-6 {
        return Err(format!("product Jacobian differs from finite differences by {err:e} on {cone:?}"));
    }

    let s = interior_point(rng, &cone);
    let ds = vector(rng, p, 10.0);
    let tau = uniform(rng, 0.9, 1.0);
    let alpha = max_step_to_boundary(s.as_slice(), ds.as_slice(), tau, &cone).unwrap();
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(format!("step {alpha} outside (0, 1]"));
    }
    let landed = &s + &ds * alpha;
    if !in_cone(landed.as_slice(), &cone, true).unwrap() {
        return Err(format!("step {alpha} leaves the interior of {cone:?}"));
    }
    if alpha < 1.0 {
        let edge = &s + &ds * (alpha / tau);
        let scale = inf_norm(&s) + inf_norm(&ds);
        let m = cone_margin(&edge, &cone);
        if m.abs() > 1e-9 * scale {
            return Err(format!("unshrunk step misses the boundary by {m:e} on {cone:?}"));
        }
    }
    Ok(())
}

/// Worst errors seen on one random KKT instance.
#[derive(Debug, Clone, Copy, Default)]
pub struct KktCheck {
    pub jacobian_error: f64,
    pub reduction_error: f64,
    /// `‖JΔw + R‖∞ / (1 + ‖R‖∞)` of the solver's direction.
    pub direction_residual: f64,
}

pub fn check_kkt_instance(rng: &mut impl Rng) -> Result<KktCheck, String> {
    let (n, m, p) = random_dims(rng);
    let model = QuadraticModel::random(rng, n, m, p);
    let (point, outer) = random_point(rng, &model);
    let theta = [uniform(rng, -1.0, 1.0)];
    let zero = RegularizationState::default();

    let res = |pt: &SolverPoint| residual(&model, pt, &theta, &outer).map_err(|e| e.to_string());
    let rows = res(&point)?;
    let jac = full_jacobian(&model, &point, &theta, &outer, &zero).map_err(|e| e.to_string())?;
    let layout = point.layout();
    let w = point.to_vector();
    let h = 1e-6;
    let mut fd = DMatrix::zeros(w.len(), w.len());
    for k in 0..w.len() {
        let mut plus = w.clone();
        let mut minus = w.clone();
        plus[k] += h;
        minus[k] -= h;
        let rp = res(&SolverPoint::from_vector(layout, &plus).unwrap())?;
        let rm = res(&SolverPoint::from_vector(layout, &minus).unwrap())?;
        fd.set_column(k, &((rp - rm) / (2.0 * h)));
    }
    let jacobian_error = max_rel_error(jac.iter(), fd.iter());

    let system = assemble_symmetric(&model, &point, &theta, &outer, &zero).map_err(|e| e.to_string())?;
    let dxyz = system
        .operator
        .clone()
        .lu()
        .solve(&system.rhs)
        .ok_or("singular reduced operator")?;
    let reduced = recover_directions(&dxyz, &system, &rows).map_err(|e| e.to_string())?.to_vector();
    let full = jac.clone().lu().solve(&(-&rows)).ok_or("singular full Jacobian")?;
    let reduction_error = inf_norm(&(&reduced - &full)) / inf_norm(&full).max(1.0);

    let (dir, info) = search_direction(&model, &point, &theta, &outer, &zero, &LinearSolverOptions::default())
        .map_err(|e| e.to_string())?;
    let jac_reg = full_jacobian(&model, &point, &theta, &outer, &info.reg).map_err(|e| e.to_string())?;
    let direction_residual = inf_norm(&(&jac_reg * dir.to_vector() + &rows)) / (1.0 + inf_norm(&rows));

    Ok(KktCheck {
        jacobian_error,
        reduction_error,
        direction_residual,
    })
}

/// Inertia counted from eigenvalues, with a relative zero threshold.
pub fn eigen_inertia(k: &DMatrix<f64>) -> Inertia {
    let eig = k.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    let mut counts = (0, 0, 0);
    for v in eig.eigenvalues.iter() {
        if v.abs() <= 1e-12 * scale {
            counts.2 += 1;
        } else if *v > 0.0 {
            counts.0 += 1;
        } else {
            counts.1 += 1;
        }
    }
    Inertia::new(counts.0, counts.1, counts.2)
}

type Assembler = Box<dyn Fn(f64, f64) -> DMatrix<f64>>;

fn indefinite(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let mut h = symmetric(rng, n, 1.0);
    h[(0, 0)] = -3.0;
    h
}

/// Inertia correction on either the solver's reduced system or a bare
/// `[[H + ε_p I, Aᵀ], [A, −ε_d I]]`, with an indefinite `H` and a duplicated
/// constraint row. Returns the regularization that was needed.
pub fn check_inertia_instance(rng: &mut impl Rng, reduced: bool) -> Result<RegularizationState, String> {
    let n = rng.random_range(2..=6);
    let m = rng.random_range(2..=4.min(n));
    let opts = InertiaOptions::default();
    let (assembled, target): (Assembler, Inertia) = if reduced {
        let p = rng.random_range(0..=5);
        let mut model = QuadraticModel::random(rng, n, m, p);
        model.q = indefinite(rng, n);
        model.duplicate_equality(0, 1);
        let (point, outer) = random_point(rng, &model);
        let theta = [0.3];
        let target = Inertia::new(n, m + p, 0);
        (
            Box::new(move |ep, ed| {
                let reg = RegularizationState {
                    eps_p: ep,
                    eps_d: ed,
                    last_eps_p: 0.0,
                };
                assemble_symmetric(&model, &point, &theta, &outer, &reg).unwrap().k
            }),
            target,
        )
    } else {
        let h = indefinite(rng, n);
        let mut a = matrix(rng, m, n, 1.0);
        let row = a.row(0).into_owned();
        a.set_row(1, &row);
        let target = Inertia::new(n, m, 0);
        (
            Box::new(move |ep, ed| {
                let mut k = DMatrix::zeros(n + m, n + m);
                k.view_mut((0, 0), (n, n)).copy_from(&(&h + DMatrix::identity(n, n) * ep));
                k.view_mut((n, 0), (m, n)).copy_from(&a);
                k.view_mut((0, n), (n, m)).copy_from(&a.transpose());
                k.view_mut((n, n), (m, m)).copy_from(&(DMatrix::identity(m, m) * -ed));
                k
            }),
            target,
        )
    };
    let (fact, reg) = correct_inertia(|ep, ed| Ok(assembled(ep, ed)), target, &RegularizationState::default(), &opts)
        .map_err(|e| e.to_string())?;
    if fact.inertia() != target {
        return Err(format!("factorization reports {:?}, wanted {target:?}", fact.inertia()));
    }
    let seen = eigen_inertia(&assembled(reg.eps_p, reg.eps_d));
    if seen != target {
        return Err(format!("eigenvalues give {seen:?} at {reg:?}, wanted {target:?}"));
    }
    Ok(reg)
}
