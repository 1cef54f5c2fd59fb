//! Thin builder over the interior-point conic solver.
//!
//! The trust-region relaxations assemble programs of the form
//!
//! `minimize (1/2) x^T P x + q^T x  s.t.  b - A x in K`
//!
//! with `K` a product of zero, nonnegative, second-order, and PSD-triangle
//! cones. This module hides the svec packing and CSC assembly.

use crate::error::{Error, Result};
use crate::Mat;
use clarabel::algebra::{CscMatrix, FloatT};
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

/// Affine expression `constant + sum coef_i x_i`.
#[derive(Debug, Clone, Default)]
pub struct LinExpr<T> {
    pub terms: Vec<(usize, T)>,
    pub constant: T,
}

impl<T: FloatT> LinExpr<T> {
    pub fn var(v: usize) -> Self {
        Self { terms: vec![(v, T::one())], constant: T::zero() }
    }

    pub fn constant(c: T) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn scaled_var(v: usize, coef: T) -> Self {
        Self { terms: vec![(v, coef)], constant: T::zero() }
    }

    pub fn plus_var(mut self, v: usize, coef: T) -> Self {
        self.terms.push((v, coef));
        self
    }

    pub fn plus(mut self, c: T) -> Self {
        self.constant = self.constant + c;
        self
    }
}

/// Linear matrix expression `constant + sum x_i * coeff_i` over symmetric
/// matrices, destined for a `<= 0` semidefinite constraint.
pub struct MatExpr<T: FloatT> {
    pub dim: usize,
    pub constant: Mat<T>,
    pub terms: Vec<(usize, Mat<T>)>,
}

impl<T: FloatT + crate::Real> MatExpr<T> {
    pub fn new(constant: Mat<T>) -> Self {
        let dim = constant.nrows();
        assert_eq!(dim, constant.ncols());
        Self { dim, constant, terms: Vec::new() }
    }

    /// Adds `x_var * coeff`; the coefficient is symmetrized.
    pub fn add_term(&mut self, var: usize, coeff: Mat<T>) {
        debug_assert_eq!(coeff.nrows(), self.dim);
        let sym = (&coeff + coeff.transpose()) * T::from_f64(0.5).unwrap();
        self.terms.push((var, sym));
    }
}

enum ConeRows {
    Zero(usize),
    Nonneg(usize),
    Soc(usize),
    PsdTriangle(usize),
}

/// Incrementally assembled conic program.
pub struct ConicBuilder<T: FloatT> {
    n_vars: usize,
    q: Vec<T>,
    p_triplets: Vec<(usize, usize, T)>,
    rows: Vec<(Vec<(usize, T)>, T)>,
    cones: Vec<ConeRows>,
}

/// Result of one conic solve.
pub struct ConicSolution<T> {
    pub x: Vec<T>,
    /// `true` for fully converged, `false` for the reduced-accuracy status.
    pub exact: bool,
    pub objective: T,
}

impl<T: FloatT + crate::Real> ConicBuilder<T> {
    pub fn new() -> Self {
        Self { n_vars: 0, q: Vec::new(), p_triplets: Vec::new(), rows: Vec::new(), cones: Vec::new() }
    }

    pub fn add_var(&mut self) -> usize {
        self.q.push(T::zero());
        self.n_vars += 1;
        self.n_vars - 1
    }

    pub fn add_vars(&mut self, k: usize) -> std::ops::Range<usize> {
        let start = self.n_vars;
        for _ in 0..k {
            self.add_var();
        }
        start..self.n_vars
    }

    pub fn obj_linear(&mut self, var: usize, coef: T) {
        self.q[var] = self.q[var] + coef;
    }

    /// Adds `(coef/2) x_i x_j + (coef/2) x_j x_i` to the quadratic cost
    /// (i.e. `coef * x_i * x_j` overall; pass `i == j` for squares).
    pub fn obj_quad(&mut self, i: usize, j: usize, coef: T) {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        self.p_triplets.push((lo, hi, coef));
    }

    fn push_row(&mut self, e: &LinExpr<T>) {
        // s_row = b - a^T x must equal the expression value
        let mut coeffs = Vec::with_capacity(e.terms.len());
        for &(v, c) in &e.terms {
            coeffs.push((v, -c));
        }
        self.rows.push((coeffs, e.constant));
    }

    /// `expr == 0`.
    pub fn eq_zero(&mut self, e: &LinExpr<T>) {
        self.push_row(e);
        self.cones.push(ConeRows::Zero(1));
    }

    /// `expr >= 0`.
    pub fn nonneg(&mut self, e: &LinExpr<T>) {
        self.push_row(e);
        self.cones.push(ConeRows::Nonneg(1));
    }

    /// `lo <= expr <= hi`.
    pub fn bounds(&mut self, e: &LinExpr<T>, lo: T, hi: T) {
        let upper = LinExpr {
            terms: e.terms.iter().map(|&(v, c)| (v, -c)).collect(),
            constant: hi - e.constant,
        };
        self.nonneg(&upper); // hi - expr >= 0
        let lower = LinExpr { terms: e.terms.clone(), constant: e.constant - lo };
        self.nonneg(&lower); // expr - lo >= 0
    }

    /// `|| vector || <= bound`.
    pub fn soc(&mut self, bound: &LinExpr<T>, vector: &[LinExpr<T>]) {
        self.push_row(bound);
        for e in vector {
            self.push_row(e);
        }
        self.cones.push(ConeRows::Soc(vector.len() + 1));
    }

    /// Epigraph of a squared Euclidean norm: `t >= || vector ||^2`, encoded
    /// as the rotated constraint `||(t - 1)/2, vector|| <= (t + 1)/2`.
    pub fn quad_epigraph(&mut self, t: usize, vector: &[LinExpr<T>]) {
        let half = T::from_f64(0.5).unwrap();
        let bound = LinExpr::scaled_var(t, half).plus(half);
        let mut rows = Vec::with_capacity(vector.len() + 1);
        rows.push(LinExpr::scaled_var(t, half).plus(-half));
        rows.extend_from_slice(vector);
        self.soc(&bound, &rows);
    }

    /// Semidefinite constraint `expr <= 0` (i.e. `-expr` PSD).
    pub fn psd_leq_zero(&mut self, expr: &MatExpr<T>) {
        let d = expr.dim;
        let sqrt2 = T::from_f64(std::f64::consts::SQRT_2).unwrap();
        // svec in clarabel order: column-major upper triangle
        for j in 0..d {
            for i in 0..=j {
                let scale = if i == j { T::one() } else { sqrt2 };
                let mut terms = Vec::new();
                for (var, coeff) in &expr.terms {
                    let v = coeff[(i, j)];
                    if v != T::zero() {
                        terms.push((*var, scale * v)); // aij of (-expr) negated below
                    }
                }
                let e = LinExpr { terms, constant: scale * expr.constant[(i, j)] };
                // s = -expr_ij = -constant - sum terms
                let neg = LinExpr {
                    terms: e.terms.iter().map(|&(v, c)| (v, -c)).collect(),
                    constant: -e.constant,
                };
                self.push_row(&neg);
            }
        }
        self.cones.push(ConeRows::PsdTriangle(d));
    }

    /// Solves the accumulated program.
    pub fn solve(&self, tol: f64, max_iter: u32) -> Result<ConicSolution<T>> {
        let n = self.n_vars;
        let m = self.rows.len();

        // CSC assembly for A (rows already grouped in cone order)
        let mut col_entries: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        for (ridx, (coeffs, _)) in self.rows.iter().enumerate() {
            for &(v, c) in coeffs {
                if c != T::zero() {
                    col_entries[v].push((ridx, c));
                }
            }
        }
        let mut colptr = Vec::with_capacity(n + 1);
        let mut rowval = Vec::new();
        let mut nzval = Vec::new();
        colptr.push(0);
        for entries in col_entries.iter_mut() {
            entries.sort_by_key(|&(r_, _)| r_);
            // merge duplicates
            let mut merged: Vec<(usize, T)> = Vec::with_capacity(entries.len());
            for &(r_, c) in entries.iter() {
                if let Some(last) = merged.last_mut() {
                    if last.0 == r_ {
                        last.1 = last.1 + c;
                        continue;
                    }
                }
                merged.push((r_, c));
            }
            for (r_, c) in merged {
                rowval.push(r_);
                nzval.push(c);
            }
            colptr.push(rowval.len());
        }
        let a = CscMatrix::new(m, n, colptr, rowval, nzval);

        // P upper triangle
        let mut p_cols: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        for &(i, j, c) in &self.p_triplets {
            p_cols[j].push((i, c));
        }
        let mut pptr = Vec::with_capacity(n + 1);
        let mut prow = Vec::new();
        let mut pval = Vec::new();
        pptr.push(0);
        for entries in p_cols.iter_mut() {
            entries.sort_by_key(|&(r_, _)| r_);
            let mut merged: Vec<(usize, T)> = Vec::with_capacity(entries.len());
            for &(r_, c) in entries.iter() {
                if let Some(last) = merged.last_mut() {
                    if last.0 == r_ {
                        last.1 = last.1 + c;
                        continue;
                    }
                }
                merged.push((r_, c));
            }
            for (r_, c) in merged {
                prow.push(r_);
                pval.push(c);
            }
            pptr.push(prow.len());
        }
        let p = CscMatrix::new(n, n, pptr, prow, pval);

        let b: Vec<T> = self.rows.iter().map(|(_, c)| *c).collect();
        let mut cones: Vec<SupportedConeT<T>> = Vec::new();
        for cone in &self.cones {
            match *cone {
                ConeRows::Zero(k) => cones.push(SupportedConeT::ZeroConeT(k)),
                ConeRows::Nonneg(k) => cones.push(SupportedConeT::NonnegativeConeT(k)),
                ConeRows::Soc(k) => cones.push(SupportedConeT::SecondOrderConeT(k)),
                ConeRows::PsdTriangle(d) => cones.push(SupportedConeT::PSDTriangleConeT(d)),
            }
        }

        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(max_iter)
            .tol_gap_abs(T::from_f64(tol).unwrap())
            .tol_gap_rel(T::from_f64(tol).unwrap())
            .tol_feas(T::from_f64(tol).unwrap())
            .build()
            .map_err(|e| Error::SolverFailure(format!("settings: {e}")))?;
        let mut solver = DefaultSolver::new(&p, &self.q, &a, &b, &cones, settings)
            .map_err(|e| Error::SolverFailure(format!("solver setup: {e:?}")))?;
        solver.solve();
        let status = solver.solution.status;
        match status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => Ok(ConicSolution {
                x: solver.solution.x.clone(),
                exact: status == SolverStatus::Solved,
                objective: solver.solution.obj_val,
            }),
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                Err(Error::Infeasible("primal infeasible".into()))
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                Err(Error::Infeasible("dual infeasible (unbounded)".into()))
            }
            other => Err(Error::SolverFailure(format!("solver stopped with {other:?}"))),
        }
    }
}

/// Evaluates an affine expression at a solution vector.
pub fn eval_expr<T: FloatT>(e: &LinExpr<T>, x: &[T]) -> T {
    let mut v = e.constant;
    for &(idx, c) in &e.terms {
        v = v + c * x[idx];
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn lp_with_bounds() {
        // minimize x + y s.t. x >= 1, y in [2, 5]
        let mut b = ConicBuilder::<f64>::new();
        let x = b.add_var();
        let y = b.add_var();
        b.obj_linear(x, 1.0);
        b.obj_linear(y, 1.0);
        b.nonneg(&LinExpr::var(x).plus(-1.0));
        b.bounds(&LinExpr::var(y), 2.0, 5.0);
        let sol = b.solve(1e-9, 100).unwrap();
        assert_relative_eq!(sol.x[x], 1.0, epsilon = 1e-6);
        assert_relative_eq!(sol.x[y], 2.0, epsilon = 1e-6);
    }

    #[test]
    fn soc_projection() {
        // minimize t s.t. ||(x - 3, y - 4)|| <= t  -> t = 0 at (3, 4)
        let mut b = ConicBuilder::<f64>::new();
        let x = b.add_var();
        let y = b.add_var();
        let t = b.add_var();
        b.obj_linear(t, 1.0);
        b.soc(
            &LinExpr::var(t),
            &[LinExpr::var(x).plus(-3.0), LinExpr::var(y).plus(-4.0)],
        );
        let sol = b.solve(1e-9, 200).unwrap();
        assert_relative_eq!(sol.x[x], 3.0, epsilon = 1e-5);
        assert_relative_eq!(sol.x[y], 4.0, epsilon = 1e-5);
    }

    #[test]
    fn quad_epigraph_squares_norm() {
        // minimize t s.t. t >= (x-2)^2, x free with x <= 1 -> x = 1, t = 1
        let mut b = ConicBuilder::<f64>::new();
        let x = b.add_var();
        let t = b.add_var();
        b.obj_linear(t, 1.0);
        b.nonneg(&LinExpr::scaled_var(x, -1.0).plus(1.0));
        b.quad_epigraph(t, &[LinExpr::var(x).plus(-2.0)]);
        let sol = b.solve(1e-9, 200).unwrap();
        assert_relative_eq!(sol.x[t], 1.0, epsilon = 1e-5);
    }

    #[test]
    fn psd_eigenvalue_bound() {
        // minimize t s.t. C - t I <= 0, C = diag(1, 3) -> t = lambda_max = 3
        let mut b = ConicBuilder::<f64>::new();
        let t = b.add_var();
        b.obj_linear(t, 1.0);
        let c = dmatrix![1.0, 0.0; 0.0, 3.0];
        let mut lmi = MatExpr::new(c);
        lmi.add_term(t, -Mat::<f64>::identity(2, 2));
        b.psd_leq_zero(&lmi);
        let sol = b.solve(1e-9, 200).unwrap();
        assert_relative_eq!(sol.x[t], 3.0, epsilon = 1e-6);
    }

    #[test]
    fn quadratic_objective() {
        // minimize (x - 1)^2 = x^2 - 2x + 1 -> x = 1
        let mut b = ConicBuilder::<f64>::new();
        let x = b.add_var();
        b.obj_quad(x, x, 2.0); // (1/2) * 2 * x^2
        b.obj_linear(x, -2.0);
        b.nonneg(&LinExpr::var(x).plus(10.0)); // keep the problem bounded rows nonempty
        let sol = b.solve(1e-9, 100).unwrap();
        assert_relative_eq!(sol.x[x], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn infeasible_is_reported() {
        let mut b = ConicBuilder::<f64>::new();
        let x = b.add_var();
        b.nonneg(&LinExpr::var(x).plus(-1.0)); // x >= 1
        b.nonneg(&LinExpr::scaled_var(x, -1.0)); // x <= 0
        match b.solve(1e-9, 100) {
            Err(Error::Infeasible(_)) => {}
            other => panic!("expected infeasible, got {:?}", other.map(|s| s.x)),
        }
    }
}
