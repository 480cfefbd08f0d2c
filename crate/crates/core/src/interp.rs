//! Bilinear interpolation operators for rotation and homography warps,
//! built per output patch and padded with unit rows to a square,
//! invertible matrix.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{invalid, JdiError, Result};
use crate::graph::{DirectedInterpGraph, INVERTIBLE_TOL};

/// Back-projected coordinates within this distance of a lattice point are
/// snapped onto it, so lattice-preserving warps give exact selection rows.
const SNAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageSize {
    pub width: usize,
    pub height: usize,
}

impl ImageSize {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn coords(&self, index: usize) -> [f64; 2] {
        [(index / self.width) as f64, (index % self.width) as f64]
    }
}

/// Geometric warp from the source image to the output image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    /// Anti-clockwise (as displayed) rotation about the image center.
    Rotation { angle_deg: f64 },
    /// Forward map in pixel coordinates `(x = col, y = row, 1)`.
    Homography(Matrix3<f64>),
}

impl Transform {
    pub fn identity() -> Self {
        Transform::Rotation { angle_deg: 0.0 }
    }

    /// The warp used by the homography experiments.
    pub fn reference_homography() -> Self {
        Transform::Homography(Matrix3::new(1.0, 0.2, 0.0, 0.1, 1.0, 0.0, 0.0, 0.0, 1.0))
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::Rotation { angle_deg } => write!(f, "rotation:{angle_deg}"),
            Transform::Homography(h) => {
                let rows: Vec<String> =
                    (0..3).map(|r| (0..3).map(|c| format!("{}", h[(r, c)])).collect::<Vec<_>>().join(" ")).collect();
                write!(f, "homography:{}", rows.join(";"))
            }
        }
    }
}

impl FromStr for Transform {
    type Err = JdiError;

    /// Accepts `rotation:20`, `rotation` (20 degrees), `homography`
    /// (the reference matrix), or `homography:1,0.2,0;0.1,1,0;0,0,1`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s, None),
        };
        match name.to_ascii_lowercase().as_str() {
            "rotation" | "rotate" => {
                let angle_deg = match arg {
                    Some(a) => a.parse().map_err(|_| JdiError::Config(format!("bad angle '{a}'")))?,
                    None => 20.0,
                };
                Ok(Transform::Rotation { angle_deg })
            }
            "homography" | "warp" => match arg {
                None => Ok(Transform::reference_homography()),
                Some(a) => Ok(Transform::Homography(parse_matrix3(a)?)),
            },
            "identity" => Ok(Transform::identity()),
            other => Err(JdiError::Config(format!("unknown transform '{other}'"))),
        }
    }
}

/// Parses `a,b,c;d,e,f;g,h,i` (commas or spaces within a row).
pub fn parse_matrix3(text: &str) -> Result<Matrix3<f64>> {
    let rows: Vec<&str> = text.split(';').collect();
    if rows.len() != 3 {
        return Err(JdiError::Config(format!("homography needs 3 rows, got '{text}'")));
    }
    let mut m = Matrix3::zeros();
    for (r, row) in rows.iter().enumerate() {
        let vals: Vec<&str> = row.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).collect();
        if vals.len() != 3 {
            return Err(JdiError::Config(format!("homography row '{row}' needs 3 entries")));
        }
        for (c, v) in vals.iter().enumerate() {
            m[(r, c)] = v.parse().map_err(|_| JdiError::Config(format!("bad number '{v}'")))?;
        }
    }
    Ok(m)
}

/// Maps output pixel centers back into source coordinates.
#[derive(Debug, Clone, Copy)]
pub struct BackProjector {
    kind: Projection,
}

#[derive(Debug, Clone, Copy)]
enum Projection {
    Rotation { cos: f64, sin: f64, cx: f64, cy: f64 },
    Homography(Matrix3<f64>),
}

impl BackProjector {
    pub fn new(transform: &Transform, size: ImageSize) -> Result<Self> {
        let kind = match *transform {
            Transform::Rotation { angle_deg } => {
                if !angle_deg.is_finite() {
                    return Err(invalid("rotation angle must be finite"));
                }
                let (sin, cos) = angle_deg.to_radians().sin_cos();
                Projection::Rotation {
                    cos,
                    sin,
                    cx: (size.width as f64 - 1.0) / 2.0,
                    cy: (size.height as f64 - 1.0) / 2.0,
                }
            }
            Transform::Homography(h) => {
                let det = h.determinant();
                if !(det.abs() > 1e-12 * h.norm().powi(3)) {
                    return Err(JdiError::DegenerateHomography(format!("determinant {det:e}")));
                }
                let inv = h.try_inverse().ok_or_else(|| JdiError::DegenerateHomography("not invertible".into()))?;
                Projection::Homography(inv)
            }
        };
        Ok(Self { kind })
    }

    /// Source `(x, y)` for the output pixel at `(row, col)`.
    pub fn source_point(&self, row: usize, col: usize) -> Result<(f64, f64)> {
        let (x, y) = (col as f64, row as f64);
        match self.kind {
            Projection::Rotation { cos, sin, cx, cy } => {
                let (dx, dy) = (x - cx, y - cy);
                Ok((cx + cos * dx - sin * dy, cy + sin * dx + cos * dy))
            }
            Projection::Homography(inv) => {
                let p = inv * Vector3::new(x, y, 1.0);
                if p.z.abs() < 1e-12 {
                    return Err(JdiError::DegenerateHomography(format!(
                        "output pixel ({row}, {col}) maps to infinity"
                    )));
                }
                Ok((p.x / p.z, p.y / p.z))
            }
        }
    }
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP_TOL {
        r
    } else {
        v
    }
}

/// Bilinear taps `(row, col, weight)` for source point `(x, y)`; `None` when
/// the point falls outside the image. Zero weights are omitted.
pub fn bilinear_taps(x: f64, y: f64, size: ImageSize) -> Option<Vec<(usize, usize, f64)>> {
    let (x, y) = (snap(x), snap(y));
    let (wmax, hmax) = (size.width as f64 - 1.0, size.height as f64 - 1.0);
    if !(x >= 0.0 && y >= 0.0 && x <= wmax && y <= hmax) {
        return None;
    }
    let c0 = (x.floor() as usize).min(size.width.saturating_sub(2));
    let r0 = (y.floor() as usize).min(size.height.saturating_sub(2));
    let a = x - c0 as f64;
    let b = y - r0 as f64;
    let taps = [
        (r0, c0, (1.0 - a) * (1.0 - b)),
        (r0, c0 + 1, a * (1.0 - b)),
        (r0 + 1, c0, (1.0 - a) * b),
        (r0 + 1, c0 + 1, a * b),
    ];
    Some(taps.into_iter().filter(|t| t.2 != 0.0).collect())
}

/// Rectangular block of output pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tile {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

/// A square interpolator `Θ` whose first `real_output_count` rows are
/// bilinear rows for real output pixels and whose remaining rows are unit
/// rows copying otherwise uncovered source pixels.
#[derive(Debug, Clone)]
pub struct InterpolatorOperator {
    matrix: DMatrix<f64>,
    real_output_count: usize,
    dummy_rows: Vec<(usize, usize)>,
    source_pixels: Vec<usize>,
    target_pixels: Vec<usize>,
    dropped_pixels: Vec<usize>,
    size: ImageSize,
    transform: Transform,
}

impl InterpolatorOperator {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Real rows only, `N_real × M`.
    pub fn real_rows(&self) -> DMatrix<f64> {
        self.matrix.rows(0, self.real_output_count).into_owned()
    }

    pub fn real_output_count(&self) -> usize {
        self.real_output_count
    }

    /// `(row index, footprint column)` of each unit row.
    pub fn dummy_rows(&self) -> &[(usize, usize)] {
        &self.dummy_rows
    }

    /// Image indices of the footprint, in column order of `Θ`.
    pub fn source_pixels(&self) -> &[usize] {
        &self.source_pixels
    }

    /// Image indices of the real output pixels, in row order of `Θ`.
    pub fn target_pixels(&self) -> &[usize] {
        &self.target_pixels
    }

    /// Output pixels of the tile that back-project outside the source image.
    pub fn dropped_pixels(&self) -> &[usize] {
        &self.dropped_pixels
    }

    pub fn source_coords(&self) -> Vec<[f64; 2]> {
        self.source_pixels.iter().map(|&i| self.size.coords(i)).collect()
    }

    pub fn target_coords(&self) -> Vec<[f64; 2]> {
        self.target_pixels.iter().map(|&i| self.size.coords(i)).collect()
    }

    pub fn transform(&self) -> Transform {
        self.transform
    }

    /// Footprint size `M` (equal to the padded row count).
    pub fn source_count(&self) -> usize {
        self.source_pixels.len()
    }

    /// Footprint intensities of `image` (row-major, `size` pixels).
    pub fn gather(&self, image: &[f64]) -> PatchSignal {
        PatchSignal {
            values: DVector::from_iterator(self.source_pixels.len(), self.source_pixels.iter().map(|&i| image[i])),
            pixels: self.source_pixels.clone(),
        }
    }

    /// Directed graph with `A_{M,N} = Θ⁻¹`. Invertibility was established
    /// when the operator was padded.
    pub fn to_graph(&self) -> Result<DirectedInterpGraph> {
        let inv =
            crate::linalg::inverse(&self.matrix, "theta").map_err(|e| JdiError::SingularInterpolator(e.to_string()))?;
        DirectedInterpGraph::new(inv)
    }

    /// `Θy` restricted to the real rows.
    pub fn interpolate_real(&self, y: &DVector<f64>) -> DVector<f64> {
        self.matrix.rows(0, self.real_output_count) * y
    }
}

/// Pixel intensities together with the image indices they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSignal {
    pub values: DVector<f64>,
    pub pixels: Vec<usize>,
}

/// Output of [`pad_full_rank`].
#[derive(Debug, Clone)]
pub struct PaddedTheta {
    pub matrix: DMatrix<f64>,
    /// `(row index, column)` of every appended unit row.
    pub dummy_rows: Vec<(usize, usize)>,
}

/// Appends unit rows so an `N_real × M` interpolator becomes square and
/// invertible. A column-pivoted Gram-Schmidt pass picks `N_real`
/// independent source columns; every other column receives a unit row.
pub fn pad_full_rank(theta_raw: &DMatrix<f64>) -> Result<PaddedTheta> {
    let (rows, cols) = theta_raw.shape();
    if rows == 0 || rows > cols {
        return Err(JdiError::RankDeficientInterpolator { rank: 0, rows });
    }
    let mut work: Vec<DVector<f64>> = theta_raw.column_iter().map(|c| c.into_owned()).collect();
    let mut norms: Vec<f64> = work.iter().map(|c| c.norm_squared()).collect();
    let scale = norms.iter().cloned().fold(0.0, f64::max).sqrt();
    let mut pivoted = vec![false; cols];
    for rank in 0..rows {
        let (best, best_norm) = norms
            .iter()
            .enumerate()
            .filter(|(j, _)| !pivoted[*j])
            .fold((usize::MAX, -1.0), |acc, (j, &n)| if n > acc.1 { (j, n) } else { acc });
        if best == usize::MAX || !(best_norm.sqrt() > INVERTIBLE_TOL * scale) {
            return Err(JdiError::RankDeficientInterpolator { rank, rows });
        }
        pivoted[best] = true;
        let q = &work[best] / best_norm.sqrt();
        for j in 0..cols {
            if !pivoted[j] {
                let proj = q.dot(&work[j]);
                work[j].axpy(-proj, &q, 1.0);
                norms[j] = work[j].norm_squared();
            }
        }
    }

    let mut matrix = DMatrix::zeros(cols, cols);
    matrix.rows_mut(0, rows).copy_from(theta_raw);
    let mut dummy_rows = Vec::with_capacity(cols - rows);
    for (row, col) in (rows..cols).zip((0..cols).filter(|&j| !pivoted[j])) {
        matrix[(row, col)] = 1.0;
        dummy_rows.push((row, col));
    }

    let sv = matrix.singular_values();
    let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if !(lo > INVERTIBLE_TOL * hi) {
        return Err(JdiError::RankDeficientInterpolator { rank: rows - 1, rows });
    }
    Ok(PaddedTheta { matrix, dummy_rows })
}

/// Builds the padded operator for one output tile under `transform`.
pub fn build_operator(transform: &Transform, tile: Tile, size: ImageSize) -> Result<InterpolatorOperator> {
    if tile.row + tile.height > size.height || tile.col + tile.width > size.width || tile.height == 0 || tile.width == 0
    {
        return Err(invalid(format!("tile {tile:?} does not fit in {size:?}")));
    }
    if size.width < 2 || size.height < 2 {
        return Err(invalid("image must be at least 2x2"));
    }
    let projector = BackProjector::new(transform, size)?;
    let mut target_pixels = Vec::new();
    let mut dropped_pixels = Vec::new();
    let mut rows_taps = Vec::new();
    for r in tile.row..tile.row + tile.height {
        for c in tile.col..tile.col + tile.width {
            let (x, y) = projector.source_point(r, c)?;
            match bilinear_taps(x, y, size) {
                Some(taps) => {
                    target_pixels.push(size.index(r, c));
                    rows_taps.push(taps);
                }
                None => dropped_pixels.push(size.index(r, c)),
            }
        }
    }
    if target_pixels.is_empty() {
        return Err(JdiError::OutOfBoundsPatch(format!("tile {tile:?} maps entirely outside the image")));
    }

    let mut source_pixels: Vec<usize> = rows_taps.iter().flatten().map(|&(r, c, _)| size.index(r, c)).collect();
    source_pixels.sort_unstable();
    source_pixels.dedup();

    let mut theta_raw = DMatrix::zeros(target_pixels.len(), source_pixels.len());
    for (row, taps) in rows_taps.iter().enumerate() {
        for &(r, c, w) in taps {
            let col = source_pixels.binary_search(&size.index(r, c)).expect("footprint covers taps");
            theta_raw[(row, col)] += w;
        }
    }
    let padded = pad_full_rank(&theta_raw)?;
    Ok(InterpolatorOperator {
        matrix: padded.matrix,
        real_output_count: target_pixels.len(),
        dummy_rows: padded.dummy_rows,
        source_pixels,
        target_pixels,
        dropped_pixels,
        size,
        transform: *transform,
    })
}

/// Rotation by `angle_deg` about the image center.
pub fn rotation_operator(angle_deg: f64, tile: Tile, size: ImageSize) -> Result<InterpolatorOperator> {
    build_operator(&Transform::Rotation { angle_deg }, tile, size)
}

/// Homography warp `h` (forward map, pixel coordinates).
pub fn homography_operator(h: Matrix3<f64>, tile: Tile, size: ImageSize) -> Result<InterpolatorOperator> {
    build_operator(&Transform::Homography(h), tile, size)
}

/// One output tile with its interpolator.
#[derive(Debug, Clone)]
pub struct PatchJob {
    pub tile: Tile,
    pub operator: InterpolatorOperator,
}

impl PatchJob {
    pub fn origin(&self) -> (usize, usize) {
        (self.tile.row, self.tile.col)
    }

    pub fn input_pixel_indices(&self) -> &[usize] {
        self.operator.source_pixels()
    }
}

/// Result of tiling an output image.
#[derive(Debug, Default)]
pub struct TilePlan {
    pub jobs: Vec<PatchJob>,
    /// Tiles whose every pixel back-projects outside the source.
    pub empty: Vec<Tile>,
    /// Tiles whose operator could not be built.
    pub failed: Vec<(Tile, JdiError)>,
}

/// The non-overlapping tiles of `size`, `patch`×`patch` except at the
/// right and bottom edges.
pub fn tiles(size: ImageSize, patch: usize) -> Vec<Tile> {
    let mut out = Vec::new();
    let patch = patch.max(1);
    for row in (0..size.height).step_by(patch) {
        for col in (0..size.width).step_by(patch) {
            out.push(Tile { row, col, height: patch.min(size.height - row), width: patch.min(size.width - col) });
        }
    }
    out
}

/// Tiles the output domain and builds each tile's operator in parallel.
pub fn tile_image(size: ImageSize, transform: &Transform, patch: usize) -> TilePlan {
    let built: Vec<(Tile, Result<InterpolatorOperator>)> =
        tiles(size, patch).into_par_iter().map(|tile| (tile, build_operator(transform, tile, size))).collect();
    let mut plan = TilePlan::default();
    for (tile, res) in built {
        match res {
            Ok(operator) => plan.jobs.push(PatchJob { tile, operator }),
            Err(JdiError::OutOfBoundsPatch(_)) => plan.empty.push(tile),
            Err(e) => plan.failed.push((tile, e)),
        }
    }
    plan
}
