//! Algebra of the product cone `R₊^q × Q_{l₁} × … × Q_{l_j}`.
//!
//! Vectors are stored flat; a [`ConeSpec`] describes how the flat vector is
//! split into segments. On orthant segments every operation is element-wise.
//! On a second-order segment `a = (a₀, ā)` with `‖ā‖₂ ≤ a₀` the product is the
//! Jordan product `a ∘ b = (aᵀb, a₀ b̄ + b₀ ā)` with identity `(1, 0, …, 0)`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Above this norm a cone initial guess is discarded in favor of the target.
const WILDLY_INFEASIBLE: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Segment {
    Orthant(usize),
    SecondOrder(usize),
}

impl Segment {
    pub fn dim(&self) -> usize {
        match *self {
            Segment::Orthant(q) => q,
            Segment::SecondOrder(l) => l,
        }
    }
}

/// Kind of a segment as seen by the algebra; a one-dimensional second-order
/// cone is the half line and is handled as an orthant entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BlockKind {
    Orthant,
    SecondOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    segments: Vec<Segment>,
    total_dim: usize,
}

impl Default for ConeSpec {
    fn default() -> Self {
        Self::empty()
    }
}

impl ConeSpec {
    /// Build a spec from ordered segments.
    ///
    /// Panics if a second-order segment has dimension zero.
    pub fn new(segments: Vec<Segment>) -> Self {
        for seg in &segments {
            if let Segment::SecondOrder(l) = seg {
                assert!(*l >= 1, "second-order cone segments need dimension >= 1");
            }
        }
        let total_dim = segments.iter().map(Segment::dim).sum();
        Self {
            segments,
            total_dim,
        }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new())
    }

    pub fn orthant(q: usize) -> Self {
        Self::new(vec![Segment::Orthant(q)])
    }

    pub fn second_order(l: usize) -> Self {
        Self::new(vec![Segment::SecondOrder(l)])
    }

    /// Concatenate specs in order.
    pub fn concat<'a>(specs: impl IntoIterator<Item = &'a ConeSpec>) -> Self {
        Self::new(
            specs
                .into_iter()
                .flat_map(|s| s.segments.iter().copied())
                .collect(),
        )
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn is_empty(&self) -> bool {
        self.total_dim == 0
    }

    /// Contiguous blocks of the flat vector. Orthant segments are one block
    /// each; empty segments are skipped.
    pub(crate) fn blocks(&self) -> impl Iterator<Item = (BlockKind, Range<usize>)> + '_ {
        let mut offset = 0;
        self.segments.iter().filter_map(move |seg| {
            let dim = seg.dim();
            let range = offset..offset + dim;
            offset += dim;
            if dim == 0 {
                return None;
            }
            let kind = match seg {
                Segment::SecondOrder(l) if *l > 1 => BlockKind::SecondOrder,
                _ => BlockKind::Orthant,
            };
            Some((kind, range))
        })
    }

    fn check(&self, what: &str, len: usize) -> Result<()> {
        check_len(what, self.total_dim, len)
    }
}

fn tail_norm(a: &[f64]) -> f64 {
    a[1..].iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Membership test; `strict` asks for the interior.
pub fn in_cone(a: &[f64], spec: &ConeSpec, strict: bool) -> Result<bool> {
    spec.check("cone vector", a.len())?;
    if a.iter().any(|v| !v.is_finite()) {
        return Ok(false);
    }
    Ok(spec.blocks().all(|(kind, range)| {
        let seg = &a[range];
        match kind {
            BlockKind::Orthant => seg.iter().all(|&v| if strict { v > 0.0 } else { v >= 0.0 }),
            BlockKind::SecondOrder => {
                let norm = tail_norm(seg);
                if strict {
                    norm < seg[0]
                } else {
                    norm <= seg[0]
                }
            }
        }
    }))
}

/// The product identity `e`.
pub fn cone_target(spec: &ConeSpec) -> DVector<f64> {
    let mut e = DVector::zeros(spec.total_dim());
    for (kind, range) in spec.blocks() {
        match kind {
            BlockKind::Orthant => e.rows_mut(range.start, range.len()).fill(1.0),
            BlockKind::SecondOrder => e[range.start] = 1.0,
        }
    }
    e
}

pub fn cone_product(a: &[f64], b: &[f64], spec: &ConeSpec) -> Result<DVector<f64>> {
    spec.check("left product operand", a.len())?;
    spec.check("right product operand", b.len())?;
    let mut out = DVector::zeros(spec.total_dim());
    for (kind, range) in spec.blocks() {
        let (sa, sb) = (&a[range.clone()], &b[range.clone()]);
        match kind {
            BlockKind::Orthant => {
                for (i, k) in range.enumerate() {
                    out[k] = sa[i] * sb[i];
                }
            }
            BlockKind::SecondOrder => {
                out[range.start] = sa.iter().zip(sb).map(|(x, y)| x * y).sum();
                for i in 1..sa.len() {
                    out[range.start + i] = sa[0] * sb[i] + sb[0] * sa[i];
                }
            }
        }
    }
    Ok(out)
}

/// Jacobians of `s ∘ t`: the first returned matrix multiplies `Δs` (it is the
/// product operator of `t`), the second multiplies `Δt` (operator of `s`).
pub fn cone_product_jacobians(
    s: &[f64],
    t: &[f64],
    spec: &ConeSpec,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    spec.check("cone slack", s.len())?;
    spec.check("cone dual", t.len())?;
    Ok((
        ConeOperator::product(t, spec).to_dense(),
        ConeOperator::product(s, spec).to_dense(),
    ))
}

/// Sum of the per-segment log barriers; `-κ` times this enters the merit.
pub fn barrier_value(s: &[f64], spec: &ConeSpec) -> Result<f64> {
    if !in_cone(s, spec, true)? {
        return Err(Error::NotInterior);
    }
    Ok(spec
        .blocks()
        .map(|(kind, range)| {
            let seg = &s[range];
            match kind {
                BlockKind::Orthant => seg.iter().map(|v| v.ln()).sum::<f64>(),
                BlockKind::SecondOrder => {
                    let norm = tail_norm(seg);
                    0.5 * ((seg[0] - norm) * (seg[0] + norm)).ln()
                }
            }
        })
        .sum())
}

/// Smallest positive root of `A α² + 2B α + C` with `C > 0`, if any.
fn first_boundary_crossing(qa: f64, qb: f64, qc: f64) -> Option<f64> {
    let scale = qa.abs().max(qb.abs()).max(qc.abs());
    if qa.abs() <= 1e-15 * scale {
        return (qb < 0.0).then(|| -qc / (2.0 * qb));
    }
    let disc = qb * qb - qa * qc;
    if disc < 0.0 {
        return None;
    }
    // Roots are q/A and C/q; this pairing avoids cancellation.
    let q = -(qb + qb.signum() * disc.sqrt());
    let roots = [q / qa, if q != 0.0 { qc / q } else { f64::INFINITY }];
    roots
        .into_iter()
        .filter(|r| r.is_finite() && *r > 0.0)
        .reduce(f64::min)
}

/// Fraction-to-the-boundary step: the largest `α ≤ 1` such that `a + α·da`
/// stays inside the cone, shrunk toward `a` by `tau`.
pub fn max_step_to_boundary(a: &[f64], da: &[f64], tau: f64, spec: &ConeSpec) -> Result<f64> {
    spec.check("step direction", da.len())?;
    if !in_cone(a, spec, true)? {
        return Err(Error::NotInterior);
    }
    let mut alpha = 1.0_f64;
    for (kind, range) in spec.blocks() {
        let (sa, sd) = (&a[range.clone()], &da[range]);
        match kind {
            BlockKind::Orthant => {
                for (ai, di) in sa.iter().zip(sd) {
                    if *di < 0.0 {
                        alpha = alpha.min(-tau * ai / di);
                    }
                }
            }
            BlockKind::SecondOrder => {
                let dot = |x: &[f64], y: &[f64]| -> f64 {
                    x[1..].iter().zip(&y[1..]).map(|(u, v)| u * v).sum()
                };
                let qa = sd[0] * sd[0] - dot(sd, sd);
                let qb = sa[0] * sd[0] - dot(sa, sd);
                let qc = sa[0] * sa[0] - dot(sa, sa);
                if let Some(root) = first_boundary_crossing(qa, qb, qc) {
                    alpha = alpha.min(tau * root);
                }
            }
        }
    }
    Ok(alpha)
}

/// Move `h0` into the cone interior with at least `margin` of slack.
pub fn interior_initialization(h0: &[f64], spec: &ConeSpec, margin: f64) -> DVector<f64> {
    assert!(margin > 0.0, "interior margin must be positive");
    let norm = h0.iter().map(|v| v * v).sum::<f64>().sqrt();
    if h0.len() != spec.total_dim() || !norm.is_finite() || norm > WILDLY_INFEASIBLE {
        return cone_target(spec) * margin.max(1.0);
    }
    let mut s = DVector::from_column_slice(h0);
    for (kind, range) in spec.blocks() {
        match kind {
            BlockKind::Orthant => {
                for k in range {
                    s[k] = s[k].max(margin);
                }
            }
            BlockKind::SecondOrder => {
                let lead = tail_norm(&h0[range.clone()]) + margin;
                s[range.start] = s[range.start].max(lead);
            }
        }
    }
    s
}

/// Block-diagonal operator aligned with the blocks of a [`ConeSpec`].
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum OperatorBlock {
    Diagonal(DVector<f64>),
    Dense(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConeOperator {
    blocks: Vec<(Range<usize>, OperatorBlock)>,
    dim: usize,
}

impl ConeOperator {
    /// Linear map `b ↦ v ∘ b`.
    pub(crate) fn product(v: &[f64], spec: &ConeSpec) -> Self {
        let blocks = spec
            .blocks()
            .map(|(kind, range)| {
                let seg = &v[range.clone()];
                let block = match kind {
                    BlockKind::Orthant => OperatorBlock::Diagonal(DVector::from_column_slice(seg)),
                    BlockKind::SecondOrder => {
                        let l = seg.len();
                        let mut arrow = DMatrix::from_diagonal_element(l, l, seg[0]);
                        for i in 1..l {
                            arrow[(0, i)] = seg[i];
                            arrow[(i, 0)] = seg[i];
                        }
                        OperatorBlock::Dense(arrow)
                    }
                };
                (range, block)
            })
            .collect();
        Self {
            blocks,
            dim: spec.total_dim(),
        }
    }

    /// `self + alpha·other + shift·I`, block by block.
    pub(crate) fn combine(&self, alpha: f64, other: &Self, shift: f64) -> Self {
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|((range, a), (_, b))| {
                let block = match (a, b) {
                    (OperatorBlock::Diagonal(a), OperatorBlock::Diagonal(b)) => {
                        OperatorBlock::Diagonal(a + b * alpha).map_diag(|v| v + shift)
                    }
                    _ => {
                        let mut m = a.dense() + b.dense() * alpha;
                        for i in 0..m.nrows() {
                            m[(i, i)] += shift;
                        }
                        OperatorBlock::Dense(m)
                    }
                };
                (range.clone(), block)
            })
            .collect();
        Self {
            blocks,
            dim: self.dim,
        }
    }

    pub(crate) fn shifted(&self, shift: f64) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|(range, b)| {
                let block = match b {
                    OperatorBlock::Diagonal(d) => {
                        OperatorBlock::Diagonal(d.map(|v| v + shift))
                    }
                    OperatorBlock::Dense(m) => {
                        let mut m = m.clone();
                        for i in 0..m.nrows() {
                            m[(i, i)] += shift;
                        }
                        OperatorBlock::Dense(m)
                    }
                };
                (range.clone(), block)
            })
            .collect();
        Self {
            blocks,
            dim: self.dim,
        }
    }

    pub(crate) fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for (range, block) in &self.blocks {
            let seg = v.rows(range.start, range.len());
            let res = match block {
                OperatorBlock::Diagonal(d) => d.component_mul(&seg),
                OperatorBlock::Dense(m) => m * seg,
            };
            out.rows_mut(range.start, range.len()).copy_from(&res);
        }
        out
    }

    /// `self⁻¹ v`, or `None` when a block is singular.
    pub(crate) fn solve_vec(&self, v: &DVector<f64>) -> Option<DVector<f64>> {
        let mut out = DVector::zeros(self.dim);
        for (range, block) in &self.blocks {
            let seg = v.rows(range.start, range.len()).into_owned();
            let res = match block {
                OperatorBlock::Diagonal(d) => {
                    if d.iter().any(|x| *x == 0.0) {
                        return None;
                    }
                    seg.component_div(d)
                }
                OperatorBlock::Dense(m) => m.clone().lu().solve(&seg)?,
            };
            out.rows_mut(range.start, range.len()).copy_from(&res);
        }
        out.iter().all(|x| x.is_finite()).then_some(out)
    }

    /// `self⁻¹ other`, or `None` when a block of `self` is singular.
    pub(crate) fn solve_op(&self, other: &Self) -> Option<Self> {
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for ((range, a), (_, b)) in self.blocks.iter().zip(&other.blocks) {
            let block = match (a, b) {
                (OperatorBlock::Diagonal(a), OperatorBlock::Diagonal(b)) => {
                    if a.iter().any(|x| *x == 0.0) {
                        return None;
                    }
                    OperatorBlock::Diagonal(b.component_div(a))
                }
                _ => OperatorBlock::Dense(a.dense().lu().solve(&b.dense())?),
            };
            blocks.push((range.clone(), block));
        }
        Some(Self {
            blocks,
            dim: self.dim,
        })
    }

    pub(crate) fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for (range, block) in &self.blocks {
            out.view_mut((range.start, range.start), (range.len(), range.len()))
                .copy_from(&block.dense());
        }
        out
    }
}

impl OperatorBlock {
    fn dense(&self) -> DMatrix<f64> {
        match self {
            OperatorBlock::Diagonal(d) => DMatrix::from_diagonal(d),
            OperatorBlock::Dense(m) => m.clone(),
        }
    }

    fn map_diag(self, f: impl Fn(f64) -> f64) -> Self {
        match self {
            OperatorBlock::Diagonal(d) => OperatorBlock::Diagonal(d.map(f)),
            other => other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn q(l: usize) -> ConeSpec {
        ConeSpec::second_order(l)
    }

    #[test]
    fn membership_examples() {
        assert!(in_cone(&[1.0, 0.5, 0.5], &q(3), true).unwrap());
        assert!(!in_cone(&[0.0, 0.0], &q(2), true).unwrap());
        assert!(in_cone(&[0.0, 0.0], &q(2), false).unwrap());
        assert!(!in_cone(&[1.0, 1.0, 1.0], &q(3), false).unwrap());
        assert!(matches!(
            in_cone(&[1.0], &q(3), true),
            Err(Error::InvalidDimension { .. })
        ));
    }

    #[test]
    fn total_dim_sums_segments() {
        let spec = ConeSpec::new(vec![
            Segment::Orthant(2),
            Segment::SecondOrder(3),
            Segment::SecondOrder(1),
        ]);
        assert_eq!(spec.total_dim(), 6);
        assert_eq!(spec.blocks().count(), 3);
    }

    #[test]
    fn target_examples() {
        assert_eq!(cone_target(&ConeSpec::orthant(2)).as_slice(), &[1.0, 1.0]);
        assert_eq!(cone_target(&q(3)).as_slice(), &[1.0, 0.0, 0.0]);
        let mixed = ConeSpec::new(vec![Segment::Orthant(1), Segment::SecondOrder(2)]);
        assert_eq!(cone_target(&mixed).as_slice(), &[1.0, 1.0, 0.0]);
    }

    #[test]
    fn product_examples() {
        let p = cone_product(&[1.0, 2.0], &[3.0, 4.0], &ConeSpec::orthant(2)).unwrap();
        assert_eq!(p.as_slice(), &[3.0, 8.0]);
        let p = cone_product(&[2.0, 1.0], &[3.0, 2.0], &q(2)).unwrap();
        assert_eq!(p.as_slice(), &[8.0, 7.0]);
        let a = [0.3, -1.2, 4.0];
        let p = cone_product(cone_target(&q(3)).as_slice(), &a, &q(3)).unwrap();
        assert_eq!(p.as_slice(), &a);
    }

    #[test]
    fn jacobian_examples() {
        let (ps, pt) =
            cone_product_jacobians(&[1.0, 2.0], &[3.0, 4.0], &ConeSpec::orthant(2)).unwrap();
        assert_eq!(ps, DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 4.0])));
        assert_eq!(pt, DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])));

        let (_, pt) = cone_product_jacobians(&[2.0, 1.0], &[1.0, 0.0], &q(2)).unwrap();
        assert_eq!(pt, DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));

        let spec = ConeSpec::new(vec![Segment::Orthant(2), Segment::SecondOrder(3)]);
        let e = cone_target(&spec);
        let (ps, _) = cone_product_jacobians(&[1.0; 5], e.as_slice(), &spec).unwrap();
        assert_eq!(ps, DMatrix::identity(5, 5));
    }

    #[test]
    fn barrier_examples() {
        assert_eq!(barrier_value(&[1.0, 1.0], &ConeSpec::orthant(2)).unwrap(), 0.0);
        assert_eq!(barrier_value(&[1.0, 0.0], &q(2)).unwrap(), 0.0);
        assert_relative_eq!(
            barrier_value(&[std::f64::consts::E], &ConeSpec::orthant(1)).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_eq!(barrier_value(&[1.0, 1.0], &q(2)), Err(Error::NotInterior));
    }

    #[test]
    fn boundary_step_examples() {
        let spec = ConeSpec::orthant(2);
        let a = max_step_to_boundary(&[1.0, 1.0], &[-2.0, 1.0], 1.0, &spec).unwrap();
        assert_relative_eq!(a, 0.5);
        let a = max_step_to_boundary(&[1.0, 1.0], &[-2.0, 1.0], 0.995, &spec).unwrap();
        assert_relative_eq!(a, 0.4975);
        let a = max_step_to_boundary(&[1.0, 1.0], &[-0.5, 1.0], 0.995, &spec).unwrap();
        assert_eq!(a, 1.0);
        assert_eq!(
            max_step_to_boundary(&[0.0, 1.0], &[1.0, 1.0], 1.0, &spec),
            Err(Error::NotInterior)
        );
    }

    #[test]
    fn soc_boundary_step_hits_boundary() {
        // (2, 0) + α(-1, 1): boundary at 2 - α = α -> α = 1, capped by tau.
        let a = max_step_to_boundary(&[2.0, 0.0], &[-1.0, 1.0], 0.5, &q(2)).unwrap();
        assert_relative_eq!(a, 0.5, epsilon = 1e-15);
        // Moving along the axis never leaves the cone.
        let a = max_step_to_boundary(&[1.0, 0.0, 0.0], &[5.0, 0.0, 0.0], 1.0, &q(3)).unwrap();
        assert_eq!(a, 1.0);
        // Heading straight out through the apex.
        let a = max_step_to_boundary(&[1.0, 0.0], &[-4.0, 0.0], 1.0, &q(2)).unwrap();
        assert_relative_eq!(a, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn interior_initialization_examples() {
        let s = interior_initialization(&[-1.0, 2.0], &ConeSpec::orthant(2), 0.1);
        assert_eq!(s.as_slice(), &[0.1, 2.0]);
        let s = interior_initialization(&[0.0, 1.0], &q(2), 0.1);
        assert_relative_eq!(s[0], 1.1);
        assert_eq!(s[1], 1.0);
        let s = interior_initialization(&[3.0, 1.0], &q(2), 0.1);
        assert_eq!(s.as_slice(), &[3.0, 1.0]);
        let s = interior_initialization(&[1e9, 0.0], &q(2), 0.1);
        assert_eq!(s.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn degenerate_soc_matches_orthant() {
        let a = [0.7];
        let b = [-2.0];
        let soc = ConeSpec::second_order(1);
        let orth = ConeSpec::orthant(1);
        assert_eq!(cone_product(&a, &b, &soc), cone_product(&a, &b, &orth));
        assert_eq!(barrier_value(&a, &soc), barrier_value(&a, &orth));
        assert_eq!(
            max_step_to_boundary(&a, &b, 0.9, &soc),
            max_step_to_boundary(&a, &b, 0.9, &orth)
        );
    }

    #[test]
    fn operator_solve_roundtrip() {
        let spec = ConeSpec::new(vec![Segment::Orthant(2), Segment::SecondOrder(3)]);
        let v = [1.0, 2.0, 3.0, 0.5, -1.0];
        let op = ConeOperator::product(&v, &spec);
        let x = DVector::from_vec(vec![0.1, -0.2, 0.3, 0.4, 0.5]);
        let y = op.mul_vec(&x);
        let back = op.solve_vec(&y).unwrap();
        assert_relative_eq!(back, x, epsilon = 1e-14);
        let dense = op.to_dense();
        assert_relative_eq!(dense * &x, y, epsilon = 1e-14);
    }
}
