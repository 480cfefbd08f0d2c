use crate::error::{invalid, Result};
use crate::pipeline::ImageBuffer;

/// Reported PSNR for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;

/// `10·log10(1 / MSE)` over pixels valid in both images, after clamping
/// `test` to `[0, 1]`. Capped at 99 dB.
pub fn psnr(reference: &ImageBuffer, test: &ImageBuffer) -> Result<f64> {
    if reference.width() != test.width() || reference.height() != test.height() {
        return Err(invalid(format!(
            "image sizes differ: {}x{} vs {}x{}",
            reference.width(),
            reference.height(),
            test.width(),
            test.height()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (((&r, &t), &vr), &vt) in
        reference.pixels().iter().zip(test.pixels()).zip(reference.valid_mask()).zip(test.valid_mask())
    {
        if vr && vt {
            let d = r - t.clamp(0.0, 1.0);
            sum += d * d;
            count += 1;
        }
    }
    if count == 0 {
        return Err(invalid("no pixels are valid in both images"));
    }
    let mse = sum / count as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}
