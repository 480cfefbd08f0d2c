//! MAP solvers for denoising, interpolation and the two joint formulations.
//!
//! All four problems are convex quadratics whose normal equations share the
//! block structure
//!
//! ```text
//! [ (1+γ)I + μL    −γ A_{M,N}          ] x = [ y ]
//! [ −γ A_{N,M}      γ A²_{N,N} + κ L̄   ]     [ 0 ]
//! ```
//!
//! with `A_{N,M} = A_{M,N}ᵀ` and `A²_{N,N} = A_{N,M} A_{M,N}`.

pub mod block;
pub mod cg;
pub mod objective;

use nalgebra::{DMatrix, DVector};

pub use block::{block_inverse, BlockSystem};
pub use cg::{cg_solve, CgOptions, LinearOperator, SolverStats};

use crate::error::{invalid, JdiError, Result};
use crate::graph::{DirectedInterpGraph, UndirectedGraph};
use crate::linalg::{self, PivotedLu};

/// Residual above which a direct solve is reported as failed.
const DIRECT_RESIDUAL_TOL: f64 = 1e-8;

/// Weights of the GLR (`mu`), shift-variation (`gamma`) and
/// new-pixel GLR (`kappa`) terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverWeights {
    pub mu: f64,
    pub gamma: f64,
    pub kappa: f64,
}

impl SolverWeights {
    /// `mu` and `kappa` may be zero (the degenerate cases); `gamma` may not.
    pub fn new(mu: f64, gamma: f64, kappa: f64) -> Result<Self> {
        let w = Self { mu, gamma, kappa };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(invalid(format!("mu must be nonnegative, got {}", self.mu)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(invalid(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(invalid(format!("kappa must be nonnegative, got {}", self.kappa)));
        }
        Ok(())
    }

    /// Defaults for the Gaussian and bilateral experiments.
    pub fn reference() -> Self {
        Self { mu: 0.3, gamma: 0.5, kappa: 0.3 }
    }

    /// Defaults for the NLM experiments.
    pub fn reference_nlm() -> Self {
        Self { mu: 0.3, gamma: 0.6, kappa: 0.2 }
    }
}

impl Default for SolverWeights {
    fn default() -> Self {
        Self::reference()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolvePath {
    /// Conjugate gradient on the assembled system.
    Cg,
    /// Dense factorization of the assembled system.
    Direct,
    /// Closed-form operators (`[Ψy; ΘΨy]` or `[Ψ*y; Θ*Ψ*y]`).
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub path: SolvePath,
    pub cg_tol: f64,
    /// Defaults to `10·(M+N)` when unset.
    pub max_iter: Option<usize>,
    pub jacobi: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { path: SolvePath::Cg, cg_tol: 1e-8, max_iter: None, jacobi: false }
    }
}

impl SolverOptions {
    pub fn with_path(path: SolvePath) -> Self {
        Self { path, ..Self::default() }
    }

    fn cg(&self, dim: usize) -> CgOptions {
        CgOptions { tol: self.cg_tol, max_iter: self.max_iter.unwrap_or(10 * dim), jacobi: self.jacobi }
    }
}

/// Solution of a joint problem, `x* = [original block; new block]`.
#[derive(Debug, Clone)]
pub struct JointSolution {
    pub x: DVector<f64>,
    pub original_count: usize,
    pub psi_star: Option<DMatrix<f64>>,
    pub theta_star: Option<DMatrix<f64>>,
    pub stats: SolverStats,
}

impl JointSolution {
    pub fn denoised_block(&self) -> DVector<f64> {
        self.x.rows(0, self.original_count).into_owned()
    }

    pub fn interpolated_block(&self) -> DVector<f64> {
        self.x.rows(self.original_count, self.x.len() - self.original_count).into_owned()
    }
}

/// Derived denoiser `Ψ*` (M×M) and interpolator `Θ*` (N×M).
#[derive(Debug, Clone)]
pub struct DerivedOperators {
    pub psi_star: DMatrix<f64>,
    pub theta_star: DMatrix<f64>,
}

fn check_square_prior(l: &DMatrix<f64>, n: usize, what: &str) -> Result<()> {
    if l.shape() != (n, n) {
        return Err(invalid(format!("{what} is {:?}, expected {n}x{n}", l.shape())));
    }
    Ok(())
}

/// Blocks of the normal equations with optional priors on either pixel set.
pub fn mixed_system(
    graph: &DirectedInterpGraph,
    gamma: f64,
    original_prior: Option<(f64, &DMatrix<f64>)>,
    new_prior: Option<(f64, &DMatrix<f64>)>,
) -> Result<BlockSystem> {
    let (m, n) = (graph.original_count(), graph.new_count());
    let mut a = DMatrix::identity(m, m) * (1.0 + gamma);
    if let Some((mu, l)) = original_prior {
        check_square_prior(l, m, "original-pixel Laplacian")?;
        a += l * mu;
    }
    let b = graph.a_mn() * (-gamma);
    let c = b.transpose();
    let mut d = graph.a_nn_squared() * gamma;
    if let Some((kappa, lbar)) = new_prior {
        check_square_prior(lbar, n, "new-pixel Laplacian")?;
        d += lbar * kappa;
    }
    BlockSystem::new(a, b, c, d)
}

/// `Hᵀy = [y; 0]`.
pub fn lifted_rhs(y: &DVector<f64>, n: usize) -> DVector<f64> {
    let mut b = DVector::zeros(y.len() + n);
    b.rows_mut(0, y.len()).copy_from(y);
    b
}

fn check_y(y: &DVector<f64>, graph: &DirectedInterpGraph) -> Result<()> {
    if y.len() != graph.original_count() {
        return Err(invalid(format!("y has length {}, graph has {} original pixels", y.len(), graph.original_count())));
    }
    Ok(())
}

fn direct_solve(c: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, SolverStats)> {
    let x = linalg::spd_solve(c, b, "system").map_err(|e| JdiError::DegenerateSystem(e.to_string()))?;
    let rel = linalg::relative_error(&(c * &x), b);
    if !(rel <= DIRECT_RESIDUAL_TOL) {
        return Err(JdiError::SolverFailure { iterations: 1, residual: rel, best: Box::new(x) });
    }
    Ok((x, SolverStats { iterations: 1, relative_residual: rel }))
}

fn system_solve(sys: &BlockSystem, b: &DVector<f64>, opts: &SolverOptions) -> Result<(DVector<f64>, SolverStats)> {
    let c = sys.assembled();
    match opts.path {
        SolvePath::Cg => cg_solve(&c, b, &opts.cg(c.nrows())),
        SolvePath::Direct | SolvePath::ClosedForm => direct_solve(&c, b),
    }
}

/// `(I + μL)⁻¹ y` for the generalized Laplacian of `graph`.
pub fn map_denoise(y: &DVector<f64>, graph: &UndirectedGraph, mu: f64) -> Result<DVector<f64>> {
    if y.len() != graph.node_count() {
        return Err(invalid(format!("y has length {}, graph has {} nodes", y.len(), graph.node_count())));
    }
    if !(mu >= 0.0) {
        return Err(JdiError::PreconditionViolation(format!("mu must be nonnegative, got {mu}")));
    }
    if !graph.is_psd() {
        return Err(JdiError::PreconditionViolation("Laplacian is not positive semi-definite".into()));
    }
    denoise_with_laplacian(y, graph.generalized_laplacian(), mu)
}

fn denoise_with_laplacian(y: &DVector<f64>, l: &DMatrix<f64>, mu: f64) -> Result<DVector<f64>> {
    let n = y.len();
    let c = DMatrix::identity(n, n) + l * mu;
    linalg::spd_solve(&c, y, "I + mu L").map_err(|e| JdiError::PreconditionViolation(e.to_string()))
}

/// Minimizer of `‖y − Hx‖² + γ‖H(x − Ax)‖²`; equals `[y; Θy]` when
/// `A_{M,N} = Θ⁻¹`.
pub fn map_interpolate(y: &DVector<f64>, graph: &DirectedInterpGraph, gamma: f64) -> Result<DVector<f64>> {
    check_y(y, graph)?;
    if !(gamma > 0.0) {
        return Err(invalid(format!("gamma must be positive, got {gamma}")));
    }
    let sys = mixed_system(graph, gamma, None, None)?;
    let b = lifted_rhs(y, graph.new_count());
    Ok(direct_solve(&sys.assembled(), &b)?.0)
}

/// Minimizer of the interpolation objective plus `μ(Hx)ᵀL(Hx)`.
///
/// The closed form is `[Ψy; ΘΨy]` with `Ψ = (I + μL)⁻¹`, `Θ = A_{M,N}⁻¹`;
/// the other paths solve the assembled system.
pub fn joint_separable(
    y: &DVector<f64>,
    laplacian: &UndirectedGraph,
    graph: &DirectedInterpGraph,
    weights: &SolverWeights,
    opts: &SolverOptions,
) -> Result<JointSolution> {
    weights.validate()?;
    check_y(y, graph)?;
    let l = laplacian.generalized_laplacian();
    let m = graph.original_count();
    let (x, stats) = match opts.path {
        SolvePath::ClosedForm => {
            if !graph.a_mn().is_square() {
                return Err(JdiError::SingularInterpolator("closed form needs M = N".into()));
            }
            check_square_prior(l, m, "original-pixel Laplacian")?;
            let psi_y = denoise_with_laplacian(y, l, weights.mu)?;
            let theta_psi_y = PivotedLu::new(graph.a_mn(), "A_{M,N}")
                .map_err(|e| JdiError::SingularInterpolator(e.to_string()))?
                .solve(&psi_y);
            let mut x = DVector::zeros(2 * m);
            x.rows_mut(0, m).copy_from(&psi_y);
            x.rows_mut(m, m).copy_from(&theta_psi_y);
            (x, SolverStats::default())
        }
        _ => {
            let sys = mixed_system(graph, weights.gamma, Some((weights.mu, l)), None)?;
            system_solve(&sys, &lifted_rhs(y, graph.new_count()), opts)?
        }
    };
    Ok(JointSolution { x, original_count: m, psi_star: None, theta_star: None, stats })
}

/// Minimizer of the interpolation objective plus `κ(Gx)ᵀL̄(Gx)`.
///
/// The default path runs conjugate gradient on the assembled system; the
/// closed-form path evaluates `[Ψ*y; Θ*Ψ*y]` from [`derive_operators`].
pub fn joint_nonseparable(
    y: &DVector<f64>,
    graph: &DirectedInterpGraph,
    lbar: &UndirectedGraph,
    weights: &SolverWeights,
    opts: &SolverOptions,
) -> Result<JointSolution> {
    weights.validate()?;
    check_y(y, graph)?;
    let lb = lbar.generalized_laplacian();
    let m = graph.original_count();
    match opts.path {
        SolvePath::ClosedForm => {
            let ops = derive_operators(graph, lbar, weights)?;
            let psi_y = &ops.psi_star * y;
            let theta_psi_y = &ops.theta_star * &psi_y;
            let mut x = DVector::zeros(m + theta_psi_y.len());
            x.rows_mut(0, m).copy_from(&psi_y);
            x.rows_mut(m, theta_psi_y.len()).copy_from(&theta_psi_y);
            Ok(JointSolution {
                x,
                original_count: m,
                psi_star: Some(ops.psi_star),
                theta_star: Some(ops.theta_star),
                stats: SolverStats::default(),
            })
        }
        _ => {
            let sys = mixed_system(graph, weights.gamma, None, Some((weights.kappa, lb)))?;
            let (x, stats) = system_solve(&sys, &lifted_rhs(y, graph.new_count()), opts)?;
            Ok(JointSolution { x, original_count: m, psi_star: None, theta_star: None, stats })
        }
    }
}

/// Both priors at once. Not covered by a closed form; solved numerically.
pub fn joint_combined(
    y: &DVector<f64>,
    laplacian: &UndirectedGraph,
    graph: &DirectedInterpGraph,
    lbar: &UndirectedGraph,
    weights: &SolverWeights,
    opts: &SolverOptions,
) -> Result<JointSolution> {
    weights.validate()?;
    check_y(y, graph)?;
    let sys = mixed_system(
        graph,
        weights.gamma,
        Some((weights.mu, laplacian.generalized_laplacian())),
        Some((weights.kappa, lbar.generalized_laplacian())),
    )?;
    let (x, stats) = system_solve(&sys, &lifted_rhs(y, graph.new_count()), opts)?;
    Ok(JointSolution { x, original_count: graph.original_count(), psi_star: None, theta_star: None, stats })
}

/// `Ψ* = ((γ+1)I − γ² A_{M,N} K⁻¹ A_{N,M})⁻¹` and `Θ* = γ K⁻¹ A_{N,M}` with
/// `K = γA²_{N,N} + κL̄`.
pub fn derive_operators(
    graph: &DirectedInterpGraph,
    lbar: &UndirectedGraph,
    weights: &SolverWeights,
) -> Result<DerivedOperators> {
    weights.validate()?;
    let (m, n) = (graph.original_count(), graph.new_count());
    let lb = lbar.generalized_laplacian();
    check_square_prior(lb, n, "new-pixel Laplacian")?;
    let gamma = weights.gamma;
    let k = graph.a_nn_squared() * gamma + lb * weights.kappa;
    let k_lu = PivotedLu::new(&k, "gamma A^2 + kappa Lbar").map_err(|e| JdiError::DegenerateSystem(e.to_string()))?;
    let theta_star = k_lu.solve_mat(&graph.a_nm()) * gamma;
    let schur = DMatrix::identity(m, m) * (gamma + 1.0) - graph.a_mn() * &theta_star * gamma;
    let psi_star =
        PivotedLu::new(&schur, "derived denoiser").map_err(|e| JdiError::DegenerateSystem(e.to_string()))?.inverse();
    Ok(DerivedOperators { psi_star, theta_star })
}
