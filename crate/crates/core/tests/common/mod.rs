#![allow(dead_code)]

use jdi_core::denoise::build_denoiser;
use jdi_core::graph::{denoiser_to_laplacian, interpolator_to_adjacency};
use jdi_core::{DMatrix, DVector, DenoiserKind, DenoiserOperator, DirectedInterpGraph, KernelParams, UndirectedGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// Lattice points jittered by at most 0.3, so no two are closer than 0.4.
pub fn jittered_grid(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 2]> {
    let side = (n as f64).sqrt().ceil() as usize;
    (0..n)
        .map(|k| {
            let (r, c) = ((k / side) as f64, (k % side) as f64);
            [r + rng.random_range(-0.3..0.3), c + rng.random_range(-0.3..0.3)]
        })
        .collect()
}

/// A balanced Gaussian or bilateral kernel on random points.
pub fn random_denoiser(rng: &mut ChaCha8Rng, n: usize) -> DenoiserOperator {
    let coords = jittered_grid(rng, n);
    let intensities: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let kind = if rng.random_bool(0.5) { DenoiserKind::Gaussian } else { DenoiserKind::Bilateral };
    let params = KernelParams {
        spatial_var: rng.random_range(0.2..1.0),
        range_var: rng.random_range(0.05..0.5),
        ..KernelParams::default()
    };
    build_denoiser(kind, &coords, &intensities, &params).expect("kernel balances")
}

/// Random square matrix pushed away from singularity by a diagonal shift.
pub fn random_invertible(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    for i in 0..n {
        m[(i, i)] += (n as f64).sqrt() + 1.0;
    }
    m
}

/// Combinatorial Laplacian of a random weighted graph with at least one edge.
pub fn random_laplacian(rng: &mut ChaCha8Rng, n: usize) -> UndirectedGraph {
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.6) || j == i + 1 {
                let v = rng.random_range(0.05..1.0);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    UndirectedGraph::from_adjacency(w).expect("symmetric adjacency")
}

pub fn random_interp_graph(rng: &mut ChaCha8Rng, n: usize) -> (DMatrix<f64>, DirectedInterpGraph) {
    let theta = random_invertible(rng, n);
    let g = interpolator_to_adjacency(&theta).expect("invertible");
    (theta, g)
}

/// A denoiser over new pixels and its graph Laplacian at weight `mu`.
pub fn random_new_pixel_prior(rng: &mut ChaCha8Rng, n: usize, mu: f64) -> (DenoiserOperator, UndirectedGraph) {
    let psi = random_denoiser(rng, n);
    let lbar = denoiser_to_laplacian(&psi, mu).expect("certified");
    (psi, lbar)
}

pub fn stack(top: &DVector<f64>, bottom: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(top.len() + bottom.len(), top.iter().chain(bottom.iter()).copied())
}

pub fn relative_error(got: &DVector<f64>, want: &DVector<f64>) -> f64 {
    (got - want).norm() / want.norm().max(f64::MIN_POSITIVE)
}
