use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Result};
use crate::pipeline::ImageBuffer;

/// Seed of the noise stream for the `index`-th variance of a sweep.
pub fn stream_seed(seed: u64, index: usize) -> u64 {
    seed ^ index as u64
}

/// Adds i.i.d. zero-mean Gaussian noise of the given variance, drawn in
/// row-major order from ChaCha20 seeded with `seed`. Values are not clipped.
pub fn add_gaussian_noise(image: &ImageBuffer, variance: f64, seed: u64) -> Result<ImageBuffer> {
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(invalid(format!("noise variance must be nonnegative, got {variance}")));
    }
    let mut out = image.clone();
    if variance == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, variance.sqrt()).map_err(|e| invalid(e.to_string()))?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for p in out.pixels_mut() {
        *p += normal.sample(&mut rng);
    }
    Ok(out)
}
