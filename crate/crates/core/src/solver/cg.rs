//! Conjugate gradient for symmetric positive (semi-)definite systems, with
//! an optional Jacobi preconditioner.

use nalgebra::{DMatrix, DVector};

use crate::error::{JdiError, Result};

/// Anything that can multiply a vector by a symmetric matrix.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &DVector<f64>, out: &mut DVector<f64>);
    /// Diagonal entries, used by the Jacobi preconditioner.
    fn diagonal(&self) -> DVector<f64>;
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.gemv(1.0, self, x, 0.0);
    }

    fn diagonal(&self) -> DVector<f64> {
        DMatrix::diagonal(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub jacobi: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolverStats {
    pub iterations: usize,
    /// `‖Cx − b‖ / ‖b‖` at the returned iterate.
    pub relative_residual: f64,
}

fn true_residual<A: LinearOperator + ?Sized>(
    op: &A,
    x: &DVector<f64>,
    b: &DVector<f64>,
    scratch: &mut DVector<f64>,
) -> DVector<f64> {
    op.apply(x, scratch);
    b - &*scratch
}

/// Solves `C x = b` from `x = 0`. Fails with the best iterate seen when the
/// relative residual does not drop below `tol` within `max_iter` steps, or
/// when a non-positive curvature direction shows `C` is not definite.
pub fn cg_solve<A: LinearOperator + ?Sized>(
    op: &A,
    b: &DVector<f64>,
    opts: &CgOptions,
) -> Result<(DVector<f64>, SolverStats)> {
    let n = op.dim();
    assert_eq!(b.len(), n, "right-hand side length");
    let b_norm = b.norm();
    let mut x = DVector::zeros(n);
    if b_norm == 0.0 {
        return Ok((x, SolverStats::default()));
    }
    let inv_diag = if opts.jacobi { Some(op.diagonal().map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })) } else { None };
    let precondition = |r: &DVector<f64>| match &inv_diag {
        Some(m) => r.component_mul(m),
        None => r.clone(),
    };

    let mut r = b.clone();
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let mut ap = DVector::zeros(n);
    let mut best = (x.clone(), 1.0);
    let mut iterations = 0;

    while iterations < opts.max_iter {
        op.apply(&p, &mut ap);
        let curvature = p.dot(&ap);
        if !(curvature > 0.0) {
            break;
        }
        let alpha = rz / curvature;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        iterations += 1;

        let mut rel = r.norm() / b_norm;
        if rel <= opts.tol {
            // the recurrence drifts; confirm against the true residual
            r = true_residual(op, &x, b, &mut ap);
            rel = r.norm() / b_norm;
            if rel <= opts.tol {
                return Ok((x, SolverStats { iterations, relative_residual: rel }));
            }
        }
        if rel < best.1 {
            best = (x.clone(), rel);
        }
        z = precondition(&r);
        let rz_next = r.dot(&z);
        p = &z + &p * (rz_next / rz);
        rz = rz_next;
    }

    let rel = true_residual(op, &best.0, b, &mut ap).norm() / b_norm;
    Err(JdiError::SolverFailure { iterations, residual: rel, best: Box::new(best.0) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(max_iter: usize) -> CgOptions {
        CgOptions { tol: 1e-10, max_iter, jacobi: false }
    }

    #[test]
    fn identity_in_one_step() {
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let (x, stats) = cg_solve(&DMatrix::<f64>::identity(3, 3), &b, &opts(10)).unwrap();
        assert_eq!(stats.iterations, 1);
        assert!((x - b).amax() < 1e-15);
    }

    #[test]
    fn diagonal_terminates_within_n() {
        let c = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]));
        let b = DVector::from_element(5, 1.0);
        let (x, stats) = cg_solve(&c, &b, &opts(5)).unwrap();
        assert!(stats.iterations <= 5);
        for i in 0..5 {
            assert!((x[i] - 1.0 / (i as f64 + 1.0)).abs() < 1e-10);
        }
        let (_, pre) = cg_solve(&c, &b, &CgOptions { jacobi: true, ..opts(5) }).unwrap();
        assert_eq!(pre.iterations, 1);
    }

    #[test]
    fn zero_rhs() {
        let (x, stats) = cg_solve(&DMatrix::<f64>::identity(2, 2), &DVector::zeros(2), &opts(3)).unwrap();
        assert_eq!(x, DVector::zeros(2));
        assert_eq!(stats.iterations, 0);
    }

    #[test]
    fn iteration_cap_reports_best_iterate() {
        let c = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]));
        let b = DVector::from_element(4, 1.0);
        match cg_solve(&c, &b, &opts(1)) {
            Err(JdiError::SolverFailure { iterations, residual, best }) => {
                assert_eq!(iterations, 1);
                assert!(residual > 1e-10 && residual < 1.0);
                assert_eq!(best.len(), 4);
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }
}
