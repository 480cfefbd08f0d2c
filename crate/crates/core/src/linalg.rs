//! Small dense helpers shared by the graph, denoiser and solver modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{JdiError, Result};

/// Pivot magnitude below which a factorization is treated as singular,
/// relative to the matrix scale.
pub const PIVOT_TOL: f64 = 1e-12;

/// Relative symmetry tolerance used for graph and denoiser checks.
pub const SYM_TOL: f64 = 1e-10;

/// `‖M − Mᵀ‖_F / ‖M‖_F`, zero for the zero matrix.
pub fn symmetry_defect(m: &DMatrix<f64>) -> f64 {
    let norm = m.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).norm() / norm
}

/// Cheap upper bound on the spectral norm: `sqrt(‖M‖₁ ‖M‖∞)`.
pub fn spectral_norm_bound(m: &DMatrix<f64>) -> f64 {
    let one = m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let inf = m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    (one * inf).sqrt()
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().cloned().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Dense LU factorization with an explicit relative pivot threshold.
pub struct PivotedLu {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl PivotedLu {
    pub fn new(m: &DMatrix<f64>, what: &str) -> Result<Self> {
        if !m.is_square() {
            return Err(JdiError::SingularBlock(format!("{what} is {}x{}, not square", m.nrows(), m.ncols())));
        }
        let scale = spectral_norm_bound(m);
        let lu = m.clone().lu();
        let min_pivot = lu.u().diagonal().iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        if scale == 0.0 || !(min_pivot > PIVOT_TOL * scale) {
            return Err(JdiError::SingularBlock(format!("{what}: smallest pivot {min_pivot:e} vs scale {scale:e}")));
        }
        Ok(Self { lu })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.lu.solve(b).expect("pivots checked at construction")
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.lu.solve(b).expect("pivots checked at construction")
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.lu.try_inverse().expect("pivots checked at construction")
    }
}

/// Inverse through [`PivotedLu`].
pub fn inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Ok(PivotedLu::new(m, what)?.inverse())
}

/// Symmetric positive-definite solve; falls back to pivoted LU when the
/// Cholesky factorization breaks down on a numerically semi-definite input.
pub fn spd_solve(m: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    match m.clone().cholesky() {
        Some(ch) => Ok(ch.solve(b)),
        None => Ok(PivotedLu::new(m, what)?.solve(b)),
    }
}

/// Inverse of a symmetric positive-definite matrix, symmetrized on exit.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let inv = match m.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => inverse(m, what)?,
    };
    Ok((&inv + inv.transpose()) * 0.5)
}

pub(crate) fn relative_error(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = b.norm().max(f64::MIN_POSITIVE);
    (a - b).norm() / scale
}
