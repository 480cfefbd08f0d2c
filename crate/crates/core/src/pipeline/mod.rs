//! Experiment harness: noise injection, per-patch joint and sequential
//! processing, stitching, PSNR and CSV output.
//!
//! Every output tile is processed independently. The tile's interpolator
//! `Θ` is padded to `M×M`; the denoiser `Ψ̄` over the interpolated pixels is
//! built from the plain interpolation `Θy` of the noisy footprint (unit rows
//! for the padding pixels). The sequential result is `Ψ̄Θy`; the joint
//! result is the interpolated block of the non-separable MAP solution with
//! `L̄ = μ⁻¹(Ψ̄⁻¹ − I)`.

mod config;
mod image;
mod metrics;
mod noise;

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;

pub use config::{parse_variances, variance_range, ExperimentConfig, Mode};
pub use image::{decode_pgm, encode_pgm, load_image, save_image, synthetic_peppers, synthetic_portrait, ImageBuffer};
pub use metrics::{psnr, PSNR_CAP_DB};
pub use noise::{add_gaussian_noise, stream_seed};

use crate::denoise::{build_denoiser, DenoiserKind, KernelParams};
use crate::error::{invalid, JdiError, Result};
use crate::graph::{denoiser_to_laplacian, DirectedInterpGraph, UndirectedGraph};
use crate::interp::{tile_image, ImageSize, PatchJob, Transform};
use crate::solver::{joint_nonseparable, map_denoise, SolverStats};

pub const CSV_HEADER: &str = "image,transform,denoiser,mode,variance,psnr_db,patches_failed";

/// A tile's interpolator together with its directed graph.
#[derive(Debug, Clone)]
pub struct PreparedJob {
    pub job: PatchJob,
    pub graph: DirectedInterpGraph,
}

/// All tiles of an output image for one transform.
#[derive(Debug, Clone)]
pub struct PreparedImage {
    pub size: ImageSize,
    pub jobs: Vec<PreparedJob>,
    /// Tiles whose operator or graph could not be built.
    pub failed_tiles: usize,
}

/// Tiles the output image and builds every tile's operator and graph.
pub fn prepare(transform: &Transform, size: ImageSize, patch_size: usize) -> PreparedImage {
    let plan = tile_image(size, transform, patch_size);
    let built: Vec<Result<PreparedJob>> = plan
        .jobs
        .into_par_iter()
        .map(|job| {
            let graph = job.operator.to_graph()?;
            Ok(PreparedJob { job, graph })
        })
        .collect();
    let mut failed_tiles = plan.failed.len();
    let mut jobs = Vec::with_capacity(built.len());
    for b in built {
        match b {
            Ok(j) => jobs.push(j),
            Err(_) => failed_tiles += 1,
        }
    }
    PreparedImage { size, jobs, failed_tiles }
}

/// Real output pixels of one tile for each requested mode.
#[derive(Debug)]
pub struct PatchOutput {
    pub joint: Option<Result<Vec<f64>>>,
    pub sequential: Option<Result<Vec<f64>>>,
    pub joint_stats: Option<SolverStats>,
}

/// Runs one tile on a noisy image.
pub fn run_patch(prepared: &PreparedJob, noisy: &ImageBuffer, config: &ExperimentConfig) -> PatchOutput {
    let op = &prepared.job.operator;
    let y = op.gather(noisy.pixels()).values;
    let z = op.interpolate_real(&y);
    let denoiser = build_denoiser(config.denoiser, &op.target_coords(), z.as_slice(), &config.kernel);

    let sequential = config.mode.runs_sequential().then(|| {
        let psi = denoiser.as_ref().map_err(clone_err)?;
        Ok(psi.apply(&z)?.as_slice().to_vec())
    });

    let mut joint_stats = None;
    let joint = config.mode.runs_joint().then(|| {
        let psi = denoiser.as_ref().map_err(clone_err)?;
        let lbar = new_pixel_laplacian(psi, config.weights.mu, op.source_count())?;
        let sol = joint_nonseparable(&y, &prepared.graph, &lbar, &config.weights, &config.solver)?;
        joint_stats = Some(sol.stats);
        Ok(sol.x.as_slice()[op.source_count()..op.source_count() + op.real_output_count()].to_vec())
    });
    PatchOutput { joint, sequential, joint_stats }
}

/// `μ⁻¹(Ψ̄⁻¹ − I)` over the real outputs, zero-padded to `n` nodes (the
/// padding pixels carry an identity denoiser).
pub fn new_pixel_laplacian(psi: &crate::denoise::DenoiserOperator, mu: f64, n: usize) -> Result<UndirectedGraph> {
    let real = psi.size();
    let mut full = DMatrix::zeros(n, n);
    if psi.kind() != DenoiserKind::Identity {
        let lg = denoiser_to_laplacian(psi, mu)?;
        full.view_mut((0, 0), (real, real)).copy_from(lg.generalized_laplacian());
    }
    UndirectedGraph::from_generalized_laplacian(&full)
}

fn clone_err(e: &JdiError) -> JdiError {
    match e {
        JdiError::BalanceFailure { iterations, residual } => {
            JdiError::BalanceFailure { iterations: *iterations, residual: *residual }
        }
        JdiError::InvalidArgument(m) => JdiError::InvalidArgument(m.clone()),
        other => JdiError::PreconditionViolation(other.to_string()),
    }
}

/// A stitched output image plus the number of tiles that failed.
#[derive(Debug, Clone)]
pub struct StitchedImage {
    pub image: ImageBuffer,
    pub patches_failed: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub joint: Option<StitchedImage>,
    pub sequential: Option<StitchedImage>,
    pub cg_iterations: usize,
}

fn blank(size: ImageSize) -> (Vec<f64>, Vec<bool>) {
    (vec![0.0; size.len()], vec![false; size.len()])
}

fn finish(size: ImageSize, (pixels, valid): (Vec<f64>, Vec<bool>), patches_failed: usize) -> StitchedImage {
    let mut image = ImageBuffer::new(size.width, size.height, pixels).expect("stitched pixels are finite");
    image.set_valid_mask(valid).expect("mask sized to image");
    StitchedImage { image, patches_failed }
}

/// Processes every tile of `noisy` and stitches the real outputs. Tiles are
/// written in plan order, so the result does not depend on scheduling.
pub fn run_image(prepared: &PreparedImage, noisy: &ImageBuffer, config: &ExperimentConfig) -> Result<RunOutput> {
    if noisy.size() != prepared.size {
        return Err(invalid("noisy image does not match the prepared geometry"));
    }
    let outputs: Vec<PatchOutput> = prepared.jobs.par_iter().map(|j| run_patch(j, noisy, config)).collect();

    let mut joint = config.mode.runs_joint().then(|| (blank(prepared.size), prepared.failed_tiles));
    let mut sequential = config.mode.runs_sequential().then(|| (blank(prepared.size), prepared.failed_tiles));
    let mut cg_iterations = 0;
    for (job, out) in prepared.jobs.iter().zip(outputs) {
        let targets = job.job.operator.target_pixels();
        for (slot, result) in [(&mut joint, out.joint), (&mut sequential, out.sequential)] {
            let (Some(((pixels, valid), failed)), Some(result)) = (slot.as_mut(), result) else {
                continue;
            };
            match result {
                Ok(values) => {
                    for (&t, v) in targets.iter().zip(values) {
                        pixels[t] = v;
                        valid[t] = true;
                    }
                }
                Err(_) => *failed += 1,
            }
        }
        cg_iterations += out.joint_stats.map_or(0, |s| s.iterations);
    }
    Ok(RunOutput {
        joint: joint.map(|(buf, failed)| finish(prepared.size, buf, failed)),
        sequential: sequential.map(|(buf, failed)| finish(prepared.size, buf, failed)),
        cg_iterations,
    })
}

/// The clean image pushed through each tile's real interpolation rows.
pub fn reference_image(prepared: &PreparedImage, clean: &ImageBuffer) -> ImageBuffer {
    let (mut pixels, mut valid) = blank(prepared.size);
    for job in &prepared.jobs {
        let op = &job.job.operator;
        let values = op.interpolate_real(&op.gather(clean.pixels()).values);
        for (&t, &v) in op.target_pixels().iter().zip(values.iter()) {
            pixels[t] = v;
            valid[t] = true;
        }
    }
    finish(prepared.size, (pixels, valid), 0).image
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsnrPoint {
    pub variance: f64,
    pub psnr_db: f64,
    pub patches_failed: usize,
}

/// PSNR against noise variance for one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct PsnrCurve {
    pub image: String,
    pub mode: Mode,
    pub config_fingerprint: u64,
    pub points: Vec<PsnrPoint>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub curves: Vec<PsnrCurve>,
    pub csv: String,
    pub cg_iterations: usize,
}

impl ExperimentReport {
    pub fn curve(&self, mode: Mode) -> Option<&PsnrCurve> {
        self.curves.iter().find(|c| c.mode == mode)
    }
}

/// Runs the configured noise sweep on `clean`.
///
/// For the `i`-th variance the noise stream is seeded with `seed ^ i`; the
/// same noisy image feeds every mode. PSNR is measured against
/// [`reference_image`] over pixels valid in both.
pub fn run_experiment(config: &ExperimentConfig, clean: &ImageBuffer) -> Result<ExperimentReport> {
    config.validate()?;
    let prepared = prepare(&config.transform, clean.size(), config.patch_size);
    if prepared.jobs.is_empty() {
        return Err(JdiError::OutOfBoundsPatch("no tile produced any output".into()));
    }
    let reference = reference_image(&prepared, clean);
    let modes: Vec<Mode> = [Mode::Joint, Mode::Sequential]
        .into_iter()
        .filter(|m| match m {
            Mode::Joint => config.mode.runs_joint(),
            _ => config.mode.runs_sequential(),
        })
        .collect();
    let fingerprint = config.fingerprint();
    let mut curves: Vec<PsnrCurve> = modes
        .iter()
        .map(|&mode| PsnrCurve {
            image: config.image_name.clone(),
            mode,
            config_fingerprint: fingerprint,
            points: vec![],
        })
        .collect();
    let mut cg_iterations = 0;

    for (i, &variance) in config.noise_variances.iter().enumerate() {
        let noisy = add_gaussian_noise(clean, variance, stream_seed(config.seed, i))?;
        let out = run_image(&prepared, &noisy, config)?;
        cg_iterations += out.cg_iterations;
        for curve in curves.iter_mut() {
            let stitched = match curve.mode {
                Mode::Joint => out.joint.as_ref(),
                _ => out.sequential.as_ref(),
            }
            .expect("mode was requested");
            curve.points.push(PsnrPoint {
                variance,
                psnr_db: psnr(&reference, &stitched.image)?,
                patches_failed: stitched.patches_failed,
            });
        }
    }

    let csv = render_csv(config, &curves);
    Ok(ExperimentReport { curves, csv, cg_iterations })
}

/// One row per (variance, mode), variances in sweep order.
pub fn render_csv(config: &ExperimentConfig, curves: &[PsnrCurve]) -> String {
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    let transform = config.transform.to_string();
    let points = curves.first().map_or(0, |c| c.points.len());
    for i in 0..points {
        for curve in curves {
            let p = curve.points[i];
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{:.6},{}",
                curve.image, transform, config.denoiser, curve.mode, p.variance, p.psnr_db, p.patches_failed
            );
        }
    }
    csv
}

/// Tile-wise MAP denoising: each tile's denoiser is mapped to its graph
/// Laplacian and the GLR-regularized problem is solved on that tile.
pub fn denoise_image(
    noisy: &ImageBuffer,
    kind: DenoiserKind,
    kernel: &KernelParams,
    mu: f64,
    patch_size: usize,
) -> Result<StitchedImage> {
    let size = noisy.size();
    let tiles = crate::interp::tiles(size, patch_size);
    let results: Vec<Result<(Vec<usize>, Vec<f64>)>> = tiles
        .par_iter()
        .map(|t| {
            let idx: Vec<usize> = (t.row..t.row + t.height)
                .flat_map(|r| (t.col..t.col + t.width).map(move |c| size.index(r, c)))
                .collect();
            let coords: Vec<[f64; 2]> = idx.iter().map(|&i| size.coords(i)).collect();
            let y = nalgebra::DVector::from_iterator(idx.len(), idx.iter().map(|&i| noisy.pixels()[i]));
            let psi = build_denoiser(kind, &coords, y.as_slice(), kernel)?;
            let x = if kind == DenoiserKind::Identity {
                y
            } else {
                map_denoise(&y, &denoiser_to_laplacian(&psi, mu)?, mu)?
            };
            Ok((idx, x.as_slice().to_vec()))
        })
        .collect();
    let (mut pixels, mut valid) = blank(size);
    let mut failed = 0;
    for r in results {
        match r {
            Ok((idx, vals)) => {
                for (i, v) in idx.into_iter().zip(vals) {
                    pixels[i] = v;
                    valid[i] = true;
                }
            }
            Err(_) => failed += 1,
        }
    }
    Ok(finish(size, (pixels, valid), failed))
}

/// Plain interpolation `Θy` of every tile.
pub fn interpolate_image(image: &ImageBuffer, transform: &Transform, patch_size: usize) -> StitchedImage {
    let prepared = prepare(transform, image.size(), patch_size);
    let failed = prepared.failed_tiles;
    StitchedImage { image: reference_image(&prepared, image), patches_failed: failed }
}
