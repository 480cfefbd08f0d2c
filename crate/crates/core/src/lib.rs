//! Joint image denoising and interpolation as mixed-graph MAP filtering.
//!
//! Linear denoisers map to undirected graphs (through their Laplacian) and
//! linear interpolators map to directed graphs (through their adjacency).
//! Combining the two priors in one quadratic objective gives either a
//! separable solution (denoise, then interpolate) or a non-separable one
//! whose derived operators are computed in [`solver::derive_operators`].
//!
//! - [`graph`]: graph types, GLR/GSV priors, filter ↔ graph maps.
//! - [`denoise`]: Gaussian, bilateral and NLM matrices and Sinkhorn balancing.
//! - [`interp`]: rotation and homography interpolators over output patches.
//! - [`solver`]: the MAP solvers, block inversion and conjugate gradient.
//! - [`pipeline`]: image I/O, noise, patch orchestration and PSNR sweeps.

// `!(x > t)` checks reject NaN along with small values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod denoise;
pub mod error;
pub mod graph;
pub mod interp;
pub mod linalg;
pub mod pipeline;
pub mod solver;

pub use denoise::{DenoiserKind, DenoiserOperator, KernelParams, NlmWindow};
pub use error::{JdiError, Result};
pub use graph::{DirectedInterpGraph, RandomWalkView, UndirectedGraph};
pub use interp::{InterpolatorOperator, PatchJob, Transform};
pub use pipeline::{ExperimentConfig, ImageBuffer, Mode, PsnrCurve};
pub use solver::{JointSolution, SolvePath, SolverOptions, SolverWeights};

pub use nalgebra::{DMatrix, DVector};
