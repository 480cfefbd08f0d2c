//! Graph types, smoothness priors, and the maps between linear filters and
//! graph-regularized MAP problems.
//!
//! A symmetric, positive-definite, non-expansive denoiser `Ψ` is the solution
//! filter of `min ‖y − x‖² + μ xᵀLx` when `L = μ⁻¹(Ψ⁻¹ − I)`; an invertible
//! square interpolator `Θ` is the solution filter of the directed-graph
//! problem whose only nonzero adjacency block is `A_{M,N} = Θ⁻¹`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::denoise::{DenoiserKind, DenoiserOperator};
use crate::error::{invalid, JdiError, Result};
use crate::linalg::{self, SYM_TOL};

/// Eigenvalue floor for positive definiteness.
pub const PD_TOL: f64 = 1e-10;
/// Slack on the unit spectral-radius bound.
pub const NONEXPANSIVE_TOL: f64 = 1e-10;
/// Doubly-stochastic row/column sum tolerance.
pub const DS_TOL: f64 = 1e-8;
/// Relative singular-value floor for interpolators.
pub const INVERTIBLE_TOL: f64 = 1e-10;

/// Undirected weighted graph on `N` nodes, possibly with self-loops and
/// negative edges.
#[derive(Debug, Clone)]
pub struct UndirectedGraph {
    adjacency: DMatrix<f64>,
    degree: DVector<f64>,
    laplacian: DMatrix<f64>,
    generalized_laplacian: DMatrix<f64>,
    self_loops: bool,
}

impl UndirectedGraph {
    /// Builds the graph from a symmetric adjacency matrix.
    pub fn from_adjacency(adjacency: DMatrix<f64>) -> Result<Self> {
        if !adjacency.is_square() || adjacency.nrows() == 0 {
            return Err(invalid("adjacency must be square and non-empty"));
        }
        let defect = linalg::symmetry_defect(&adjacency);
        if defect > SYM_TOL {
            return Err(invalid(format!("adjacency is not symmetric (defect {defect:e})")));
        }
        let n = adjacency.nrows();
        let degree = DVector::from_iterator(n, adjacency.row_iter().map(|r| r.sum()));
        let mut laplacian = -adjacency.clone();
        for i in 0..n {
            laplacian[(i, i)] += degree[i];
        }
        let mut generalized_laplacian = laplacian.clone();
        let mut self_loops = false;
        for i in 0..n {
            let w = adjacency[(i, i)];
            generalized_laplacian[(i, i)] += w;
            self_loops |= w != 0.0;
        }
        Ok(Self { adjacency, degree, laplacian, generalized_laplacian, self_loops })
    }

    /// Recovers the edge set from a generalized Laplacian `L_g = D − A + diag(A)`.
    ///
    /// Off-diagonal weights are `−L_g[i,j]`; the self-loop weight on node `i`
    /// is the `i`-th row sum of `L_g`.
    pub fn from_generalized_laplacian(lg: &DMatrix<f64>) -> Result<Self> {
        if !lg.is_square() || lg.nrows() == 0 {
            return Err(invalid("laplacian must be square and non-empty"));
        }
        let n = lg.nrows();
        let mut adjacency = -lg.clone();
        for i in 0..n {
            adjacency[(i, i)] = lg.row(i).sum();
        }
        let mut g = Self::from_adjacency(adjacency)?;
        // keep the caller's matrix bit-for-bit rather than the reassembled one
        g.generalized_laplacian = lg.clone();
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn degree(&self) -> &DVector<f64> {
        &self.degree
    }

    /// Combinatorial Laplacian `D − A`.
    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    /// Generalized Laplacian `D − A + diag(A)`.
    pub fn generalized_laplacian(&self) -> &DMatrix<f64> {
        &self.generalized_laplacian
    }

    pub fn has_self_loops(&self) -> bool {
        self.self_loops
    }

    pub fn has_nonnegative_weights(&self) -> bool {
        self.adjacency.iter().all(|&w| w >= 0.0)
    }

    /// Smallest eigenvalue of the generalized Laplacian is at least
    /// `−1e-8·‖L_g‖₂`.
    pub fn is_psd(&self) -> bool {
        let ev = linalg::sym_eigenvalues(&self.generalized_laplacian);
        let scale = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        ev.first().is_none_or(|&min| min >= -1e-8 * scale)
    }

    /// Edge list `i j w` (0-based, `i < j`) followed by self-loop lines `i i w`.
    pub fn edge_list(&self) -> String {
        let n = self.node_count();
        let scale = self.adjacency.amax();
        let cutoff = 1e-12 * scale;
        let mut out = String::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let w = self.adjacency[(i, j)];
                if w.abs() > cutoff {
                    let _ = writeln!(out, "{i} {j} {w}");
                }
            }
        }
        for i in 0..n {
            let w = self.adjacency[(i, i)];
            if w.abs() > cutoff {
                let _ = writeln!(out, "{i} {i} {w}");
            }
        }
        out
    }
}

/// Row-stochastic view `A_r = D⁻¹A`, `L_r = D⁻¹L` of a (possibly directed) graph.
#[derive(Debug, Clone)]
pub struct RandomWalkView {
    row_stochastic: DMatrix<f64>,
    laplacian: DMatrix<f64>,
}

impl RandomWalkView {
    /// Degrees are row sums; any zero-degree node is rejected.
    pub fn from_adjacency(adjacency: &DMatrix<f64>) -> Result<Self> {
        if !adjacency.is_square() {
            return Err(invalid("adjacency must be square"));
        }
        let n = adjacency.nrows();
        let mut row_stochastic = adjacency.clone();
        let mut laplacian = -adjacency.clone();
        for i in 0..n {
            let d = adjacency.row(i).sum();
            if d.abs() <= f64::EPSILON * adjacency.row(i).amax().max(1.0) {
                return Err(JdiError::DegenerateGraph(format!("node {i} has zero degree")));
            }
            laplacian[(i, i)] += d;
            row_stochastic.row_mut(i).scale_mut(1.0 / d);
            laplacian.row_mut(i).scale_mut(1.0 / d);
        }
        Ok(Self { row_stochastic, laplacian })
    }

    pub fn from_graph(graph: &UndirectedGraph) -> Result<Self> {
        Self::from_adjacency(graph.adjacency())
    }

    pub fn row_stochastic(&self) -> &DMatrix<f64> {
        &self.row_stochastic
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    pub fn node_count(&self) -> usize {
        self.row_stochastic.nrows()
    }
}

/// Directed graph from `M` original pixels to `N` new pixels; only the
/// upper-right block `A_{M,N}` of the `(M+N)×(M+N)` adjacency is nonzero.
#[derive(Debug, Clone)]
pub struct DirectedInterpGraph {
    a_mn: DMatrix<f64>,
}

impl DirectedInterpGraph {
    pub fn new(a_mn: DMatrix<f64>) -> Result<Self> {
        if a_mn.nrows() == 0 || a_mn.ncols() == 0 {
            return Err(invalid("A_{M,N} must be non-empty"));
        }
        Ok(Self { a_mn })
    }

    pub fn original_count(&self) -> usize {
        self.a_mn.nrows()
    }

    pub fn new_count(&self) -> usize {
        self.a_mn.ncols()
    }

    pub fn a_mn(&self) -> &DMatrix<f64> {
        &self.a_mn
    }

    /// Lower-left block as it appears in the normal equations, `A_{M,N}ᵀ`.
    pub fn a_nm(&self) -> DMatrix<f64> {
        self.a_mn.transpose()
    }

    /// `A²_{N,N} = A_{N,M} A_{M,N}`.
    pub fn a_nn_squared(&self) -> DMatrix<f64> {
        self.a_mn.tr_mul(&self.a_mn)
    }

    /// Full block adjacency.
    pub fn adjacency(&self) -> DMatrix<f64> {
        let (m, n) = (self.original_count(), self.new_count());
        let mut a = DMatrix::zeros(m + n, m + n);
        a.view_mut((0, m), (m, n)).copy_from(&self.a_mn);
        a
    }

    /// `H = [I_M 0]`.
    pub fn sampler_h(&self) -> DMatrix<f64> {
        let (m, n) = (self.original_count(), self.new_count());
        let mut h = DMatrix::zeros(m, m + n);
        h.view_mut((0, 0), (m, m)).fill_with_identity();
        h
    }

    /// `G = [0 I_N]`.
    pub fn sampler_g(&self) -> DMatrix<f64> {
        let (m, n) = (self.original_count(), self.new_count());
        let mut g = DMatrix::zeros(n, m + n);
        g.view_mut((0, m), (n, n)).fill_with_identity();
        g
    }
}

/// Graph Laplacian regularizer `xᵀLx = Σ w_ij (x_i − x_j)²` over the
/// combinatorial Laplacian.
pub fn glr(graph: &UndirectedGraph, x: &DVector<f64>) -> Result<f64> {
    check_len(graph.node_count(), x)?;
    Ok(x.dot(&(graph.laplacian() * x)))
}

/// Same quadratic form on the generalized Laplacian (self-loops add `w_ii x_i²`).
pub fn glr_generalized(graph: &UndirectedGraph, x: &DVector<f64>) -> Result<f64> {
    check_len(graph.node_count(), x)?;
    Ok(x.dot(&(graph.generalized_laplacian() * x)))
}

/// Graph shift variation `‖x − A_r x‖²`.
pub fn gsv(view: &RandomWalkView, x: &DVector<f64>) -> Result<f64> {
    check_len(view.node_count(), x)?;
    Ok((x - view.row_stochastic() * x).norm_squared())
}

/// `‖L_r x‖²`, the second form of the shift variation.
pub fn gsv_laplacian_form(view: &RandomWalkView, x: &DVector<f64>) -> Result<f64> {
    check_len(view.node_count(), x)?;
    Ok((view.laplacian() * x).norm_squared())
}

fn check_len(n: usize, x: &DVector<f64>) -> Result<()> {
    if x.len() != n {
        return Err(invalid(format!("signal has length {}, graph has {n} nodes", x.len())));
    }
    Ok(())
}

/// Checks symmetry, positive definiteness and non-expansiveness and records
/// the outcome. Never fails; downstream consumers reject uncertified operators.
pub fn certify_denoiser(matrix: DMatrix<f64>) -> DenoiserOperator {
    certify_as(matrix, DenoiserKind::Custom)
}

pub(crate) fn certify_as(matrix: DMatrix<f64>, kind: DenoiserKind) -> DenoiserOperator {
    let square = matrix.is_square() && matrix.nrows() > 0;
    let symmetric = square && linalg::symmetry_defect(&matrix) <= SYM_TOL;
    let (spectrum, pd, nonexpansive) = if symmetric {
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let ev = linalg::sym_eigenvalues(&sym);
        let pd = ev.first().is_some_and(|&v| v > PD_TOL);
        let radius = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (Some(ev), pd, radius <= 1.0 + NONEXPANSIVE_TOL)
    } else {
        (None, false, false)
    };
    let doubly_stochastic = square && is_doubly_stochastic(&matrix, DS_TOL);
    DenoiserOperator::from_parts(matrix, kind, symmetric, pd, nonexpansive, doubly_stochastic, spectrum)
}

pub(crate) fn is_doubly_stochastic(m: &DMatrix<f64>, tol: f64) -> bool {
    m.iter().all(|&v| v >= 0.0)
        && m.row_iter().all(|r| (r.sum() - 1.0).abs() <= tol)
        && m.column_iter().all(|c| (c.sum() - 1.0).abs() <= tol)
}

/// Graph whose generalized Laplacian is `μ⁻¹(Ψ⁻¹ − I)`.
pub fn denoiser_to_laplacian(psi: &DenoiserOperator, mu: f64) -> Result<UndirectedGraph> {
    if !(mu > 0.0) {
        return Err(JdiError::PreconditionViolation(format!("mu must be positive, got {mu}")));
    }
    if !psi.is_certified() {
        return Err(JdiError::PreconditionViolation(format!(
            "denoiser not certified (symmetric={}, pd={}, nonexpansive={})",
            psi.certified_symmetric(),
            psi.certified_pd(),
            psi.certified_nonexpansive()
        )));
    }
    let m = psi.matrix();
    let spectrum = psi.spectrum().expect("certified operators carry their spectrum");
    let (lo, hi) = (spectrum[0], spectrum[spectrum.len() - 1]);
    if lo <= linalg::PIVOT_TOL * hi {
        return Err(JdiError::PreconditionViolation(format!(
            "denoiser numerically singular (eigenvalues {lo:e}..{hi:e})"
        )));
    }
    let inv = linalg::spd_inverse(m, "denoiser").map_err(|e| JdiError::PreconditionViolation(e.to_string()))?;
    let n = m.nrows();
    let lg = (inv - DMatrix::<f64>::identity(n, n)) / mu;
    UndirectedGraph::from_generalized_laplacian(&lg)
}

/// Directed graph with `A_{M,N} = Θ⁻¹` for a square invertible `Θ`.
pub fn interpolator_to_adjacency(theta: &DMatrix<f64>) -> Result<DirectedInterpGraph> {
    if !theta.is_square() || theta.nrows() == 0 {
        return Err(JdiError::SingularInterpolator(format!("theta is {}x{}", theta.nrows(), theta.ncols())));
    }
    let sv = theta.singular_values();
    let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if !(lo > INVERTIBLE_TOL * hi) {
        return Err(JdiError::SingularInterpolator(format!("singular values span {lo:e}..{hi:e}")));
    }
    let inv = linalg::inverse(theta, "theta").map_err(|e| JdiError::SingularInterpolator(e.to_string()))?;
    DirectedInterpGraph::new(inv)
}
