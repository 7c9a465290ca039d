//! Reference solutions for small convex QPs by active-set enumeration.
//!
//! `minimize ½ xᵀQx + qᵀx + c₀  s.t.  A x = b,  C x ≥ d`
//!
//! Every subset of inequalities is tried as the active set; the equality
//! constrained KKT system is solved in the least-squares sense and kept when
//! it is an exact KKT point of the full problem. For convex `Q` any KKT point
//! is optimal, so the smallest objective among them is returned.

use nalgebra::{DMatrix, DVector};

const KKT_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Qp {
    pub q_mat: DMatrix<f64>,
    pub q_vec: DVector<f64>,
    pub constant: f64,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub c_in: DMatrix<f64>,
    pub d_in: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    /// Indices of inequalities held at equality.
    pub active: Vec<usize>,
}

impl Qp {
    pub fn new(q_mat: DMatrix<f64>, q_vec: DVector<f64>) -> Self {
        let n = q_vec.len();
        Self {
            q_mat,
            q_vec,
            constant: 0.0,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            c_in: DMatrix::zeros(0, n),
            d_in: DVector::zeros(0),
        }
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        self.constant = c;
        self
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_inequalities(mut self, c: DMatrix<f64>, d: DVector<f64>) -> Self {
        self.c_in = c;
        self.d_in = d;
        self
    }

    pub fn dim(&self) -> usize {
        self.q_vec.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q_mat * x)) + self.q_vec.dot(x) + self.constant
    }

    fn solve_active(&self, active: &[usize]) -> Option<QpSolution> {
        let n = self.dim();
        let me = self.a_eq.nrows();
        let k = me + active.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&self.q_mat);
        rhs.rows_mut(0, n).copy_from(&(-&self.q_vec));
        let mut rows = DMatrix::zeros(k, n);
        let mut vals = DVector::zeros(k);
        if me > 0 {
            rows.view_mut((0, 0), (me, n)).copy_from(&self.a_eq);
            vals.rows_mut(0, me).copy_from(&self.b_eq);
        }
        for (i, &a) in active.iter().enumerate() {
            rows.set_row(me + i, &self.c_in.row(a));
            vals[me + i] = self.d_in[a];
        }
        kkt.view_mut((n, 0), (k, n)).copy_from(&rows);
        kkt.view_mut((0, n), (n, k)).copy_from(&rows.transpose());
        rhs.rows_mut(n, k).copy_from(&vals);

        let svd = kkt.clone().svd(true, true);
        let cutoff = 1e-12 * svd.singular_values.max().max(1.0);
        let sol = svd.solve(&rhs, cutoff).ok()?;
        let scale = 1.0 + rhs.amax();
        if (&kkt * &sol - &rhs).amax() > KKT_TOL * scale {
            return None;
        }
        let x = sol.rows(0, n).into_owned();
        // KKT rows read Qx + q + Aᵀν = 0, so the inequality multipliers are −ν.
        if active.iter().enumerate().any(|(i, _)| sol[n + me + i] > KKT_TOL * scale) {
            return None;
        }
        if self.c_in.nrows() > 0 && (&self.c_in * &x - &self.d_in).min() < -KKT_TOL * scale {
            return None;
        }
        Some(QpSolution {
            objective: self.objective(&x),
            x,
            active: active.to_vec(),
        })
    }

    /// Global minimizer, or `None` when no KKT point exists (infeasible or
    /// unbounded).
    pub fn solve(&self) -> Option<QpSolution> {
        let ni = self.c_in.nrows();
        assert!(ni < 20, "too many inequalities to enumerate");
        let mut best: Option<QpSolution> = None;
        for mask in 0u32..(1 << ni) {
            let active: Vec<usize> = (0..ni).filter(|i| mask & (1 << i) != 0).collect();
            if active.len() + self.a_eq.nrows() > self.dim() + ni {
                continue;
            }
            if let Some(sol) = self.solve_active(&active) {
                if best.as_ref().is_none_or(|b| sol.objective < b.objective) {
                    best = Some(sol);
                }
            }
        }
        best
    }
}

/// Euclidean projection of `p` onto the second-order cone `{(x₀, x̄) : ‖x̄‖ ≤ x₀}`.
pub fn project_soc(p: &[f64]) -> Vec<f64> {
    let p0 = p[0];
    let bar = &p[1..];
    let nb = bar.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nb <= p0 {
        p.to_vec()
    } else if nb <= -p0 {
        vec![0.0; p.len()]
    } else {
        let a = 0.5 * (1.0 + p0 / nb);
        std::iter::once(a * nb).chain(bar.iter().map(|v| a * v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bound_constrained_scalar() {
        // min (x − 2)² s.t. x ≥ 3
        let qp = Qp::new(DMatrix::from_element(1, 1, 2.0), DVector::from_element(1, -4.0))
            .with_constant(4.0)
            .with_inequalities(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 3.0));
        let sol = qp.solve().unwrap();
        assert_relative_eq!(sol.x[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(sol.objective, 1.0, epsilon = 1e-12);
        assert_eq!(sol.active, vec![0]);
    }

    #[test]
    fn infeasible_has_no_solution() {
        let qp = Qp::new(DMatrix::identity(1, 1), DVector::zeros(1)).with_equalities(
            DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
            DVector::from_vec(vec![0.0, 1.0]),
        );
        assert!(qp.solve().is_none());
    }

    #[test]
    fn linear_objective_with_free_split() {
        // min a + b s.t. a − b = 1, a, b ≥ 0 → (1, 0)
        let qp = Qp::new(DMatrix::zeros(2, 2), DVector::from_vec(vec![1.0, 1.0]))
            .with_equalities(DMatrix::from_row_slice(1, 2, &[1.0, -1.0]), DVector::from_element(1, 1.0))
            .with_inequalities(DMatrix::identity(2, 2), DVector::zeros(2));
        let sol = qp.solve().unwrap();
        assert_relative_eq!(sol.objective, 1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.x[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn soc_projection_examples() {
        assert_eq!(project_soc(&[0.0, 2.0]), vec![1.0, 1.0]);
        assert_eq!(project_soc(&[3.0, 1.0, 2.0]), vec![3.0, 1.0, 2.0]);
        assert_eq!(project_soc(&[-3.0, 1.0]), vec![0.0, 0.0]);
    }
}
