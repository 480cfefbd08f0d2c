//! Grayscale image buffers, binary PGM I/O and the procedural test images.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{invalid, JdiError, Result};
use crate::interp::ImageSize;

/// Row-major intensities, nominally in `[0, 1]`, with a per-pixel validity
/// mask (false for pixels no patch could produce).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    valid: Vec<bool>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid("image dimensions must be positive"));
        }
        if pixels.len() != width * height {
            return Err(invalid(format!("{} pixels for a {width}x{height} image", pixels.len())));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(invalid("image contains non-finite pixels"));
        }
        Ok(Self { width, height, valid: vec![true; pixels.len()], pixels })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::new(width, height, vec![value; width * height]).expect("valid constant image")
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let pixels = (0..height).flat_map(|r| (0..width).map(move |c| (r, c))).map(|(r, c)| f(r, c)).collect();
        Self::new(width, height, pixels).expect("generator produced finite pixels")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn size(&self) -> ImageSize {
        ImageSize::new(self.width, self.height)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn set_valid_mask(&mut self, valid: Vec<bool>) -> Result<()> {
        if valid.len() != self.pixels.len() {
            return Err(invalid("mask size does not match image"));
        }
        self.valid = valid;
        Ok(())
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// 8-bit samples, clamped to `[0, 1]` and rounded half up.
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| quantize(v)).collect()
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Parses a binary (P5) PGM with `maxval < 256`.
pub fn decode_pgm(bytes: &[u8]) -> Result<ImageBuffer> {
    let mut cursor = HeaderCursor { bytes, pos: 0 };
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(JdiError::MalformedImage { offset: 0, message: "missing P5 magic".into() });
    }
    cursor.pos = 2;
    let width = cursor.number("width")?;
    let height = cursor.number("height")?;
    let maxval = cursor.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(JdiError::MalformedImage { offset: cursor.pos, message: "zero dimension".into() });
    }
    if maxval == 0 || maxval > 255 {
        return Err(JdiError::MalformedImage { offset: cursor.pos, message: format!("unsupported maxval {maxval}") });
    }
    match bytes.get(cursor.pos) {
        Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
        _ => {
            return Err(JdiError::MalformedImage {
                offset: cursor.pos,
                message: "expected whitespace before raster".into(),
            })
        }
    }
    let need = width * height;
    let raster = &bytes[cursor.pos..];
    if raster.len() < need {
        return Err(JdiError::MalformedImage {
            offset: bytes.len(),
            message: format!("raster truncated: {} of {need} bytes", raster.len()),
        });
    }
    let scale = maxval as f64;
    let pixels = raster[..need].iter().map(|&b| b as f64 / scale).collect();
    ImageBuffer::new(width, height, pixels)
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(JdiError::MalformedImage { offset: start, message: format!("expected {what}") });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| JdiError::MalformedImage { offset: start, message: format!("{what} out of range") })
    }
}

pub fn encode_pgm(image: &ImageBuffer) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.to_u8());
    out
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    decode_pgm(&std::fs::read(path)?)
}

pub fn save_image(image: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_pgm(image))?;
    Ok(())
}

fn smoothstep(edge: f64, softness: f64, v: f64) -> f64 {
    let t = ((v - edge) / softness + 0.5).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Procedural portrait-like scene: shaded background, a soft-edged face
/// ellipse, striped hair texture, a hat brim with hard edges and fine
/// detail. Used for the rotation experiments.
pub fn synthetic_portrait(size: usize) -> ImageBuffer {
    let s = size as f64;
    ImageBuffer::from_fn(size, size, |r, c| {
        let (x, y) = (c as f64 / s, r as f64 / s);
        let mut v = 0.25 + 0.35 * y + 0.08 * (2.0 * PI * 3.0 * x).sin();
        // face
        let (fx, fy) = ((x - 0.5) / 0.22, (y - 0.58) / 0.3);
        let face = 1.0 - smoothstep(1.0, 0.06, (fx * fx + fy * fy).sqrt());
        let shade = 0.62 + 0.18 * (1.0 - (x - 0.42).abs() * 3.0).clamp(0.0, 1.0);
        v = v * (1.0 - face) + shade * face;
        // eyes and mouth
        for ex in [0.42, 0.58] {
            let d = ((x - ex).powi(2) / 0.0009 + (y - 0.52).powi(2) / 0.0003).sqrt();
            if d < 1.0 {
                v = 0.15;
            }
        }
        let mouth = ((x - 0.5) / 0.08).powi(2) + ((y - 0.72) / 0.015).powi(2);
        if mouth < 1.0 {
            v = 0.3;
        }
        // hair: oriented stripes around the face
        let (hx, hy) = ((x - 0.5) / 0.3, (y - 0.5) / 0.4);
        let hair_r = (hx * hx + hy * hy).sqrt();
        if hair_r < 1.0 && face < 0.5 && y < 0.8 {
            let stripes = 0.5 + 0.5 * (2.0 * PI * (x * 18.0 + y * 7.0)).sin();
            v = 0.2 + 0.25 * stripes;
        }
        // hat brim and crown
        if (0.18..0.24).contains(&y) && (0.2..0.8).contains(&x) {
            v = 0.85;
        }
        if (0.05..0.18).contains(&y) && (0.32..0.68).contains(&x) {
            v = 0.78 - 0.3 * ((x - 0.5) * 6.0).powi(2).min(1.0) * 0.5;
        }
        // shoulders
        if y > 0.85 {
            v = 0.45 + 0.1 * (2.0 * PI * x * 5.0).cos();
        }
        v.clamp(0.02, 0.98)
    })
}

/// Procedural still life of overlapping shaded blobs with specular
/// highlights. Used for the homography experiments.
pub fn synthetic_peppers(size: usize) -> ImageBuffer {
    let s = size as f64;
    let blobs: [(f64, f64, f64, f64, f64); 7] = [
        (0.25, 0.3, 0.22, 0.16, 0.55),
        (0.65, 0.25, 0.2, 0.2, 0.35),
        (0.45, 0.65, 0.28, 0.18, 0.7),
        (0.8, 0.7, 0.15, 0.25, 0.25),
        (0.15, 0.8, 0.14, 0.12, 0.8),
        (0.55, 0.45, 0.1, 0.1, 0.9),
        (0.9, 0.15, 0.1, 0.14, 0.6),
    ];
    ImageBuffer::from_fn(size, size, |r, c| {
        let (x, y) = (c as f64 / s, r as f64 / s);
        let mut v = 0.12 + 0.1 * ((x * 9.0).sin() * (y * 7.0).cos());
        for &(bx, by, rx, ry, tone) in &blobs {
            let (dx, dy) = ((x - bx) / rx, (y - by) / ry);
            let d = (dx * dx + dy * dy).sqrt();
            if d < 1.0 {
                let body = tone * (0.75 + 0.25 * (1.0 - d * d));
                let spec = (-((dx + 0.35).powi(2) + (dy + 0.35).powi(2)) / 0.02).exp();
                let edge = smoothstep(0.97, 0.05, d);
                v = (body + 0.3 * spec) * (1.0 - edge) + v * edge;
            }
        }
        v.clamp(0.02, 0.98)
    })
}
