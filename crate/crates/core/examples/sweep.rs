//! Runs one noise level of every configuration and prints PSNR and timings.

use std::time::Instant;

use jdi_core::pipeline::{add_gaussian_noise, prepare, psnr, reference_image, run_image, synthetic_portrait};
use jdi_core::{DenoiserKind, ExperimentConfig, Transform};

fn main() {
    let variance: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0.06);
    let size: usize = std::env::args().nth(2).and_then(|a| a.parse().ok()).unwrap_or(512);
    let clean = synthetic_portrait(size);
    for transform in [Transform::Rotation { angle_deg: 20.0 }, Transform::reference_homography()] {
        let t0 = Instant::now();
        let prepared = prepare(&transform, clean.size(), 10);
        let reference = reference_image(&prepared, &clean);
        println!("{transform}: prepare {:.2?} ({} jobs)", t0.elapsed(), prepared.jobs.len());
        for kind in [DenoiserKind::Bilateral, DenoiserKind::Nlm] {
            let mut cfg = ExperimentConfig::for_denoiser(kind);
            cfg.transform = transform;
            if let Ok(path) = std::env::var("SOLVE_PATH") {
                cfg.set("solve_path", &path).unwrap();
            }
            if std::env::var("JACOBI").is_ok() {
                cfg.solver.jacobi = true;
            }
            let noisy = add_gaussian_noise(&clean, variance, 1).unwrap();
            let t1 = Instant::now();
            let out = run_image(&prepared, &noisy, &cfg).unwrap();
            let j = out.joint.unwrap();
            let s = out.sequential.unwrap();
            println!(
                "  {kind}: joint {:.3} dB ({} failed), sequential {:.3} dB ({} failed), {:.2?}, cg iters {}",
                psnr(&reference, &j.image).unwrap(),
                j.patches_failed,
                psnr(&reference, &s.image).unwrap(),
                s.patches_failed,
                t1.elapsed(),
                out.cg_iterations
            );
        }
    }
}
