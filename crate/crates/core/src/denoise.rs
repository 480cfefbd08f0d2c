//! Linear denoiser matrices over arbitrary pixel coordinate sets, and the
//! symmetric Sinkhorn-Knopp balancing that turns them into symmetric,
//! doubly stochastic operators.

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, JdiError, Result};
use crate::graph::certify_as;
use crate::linalg::SYM_TOL;

pub const DEFAULT_SINKHORN_TOL: f64 = 1e-8;
pub const DEFAULT_SINKHORN_MAX_ITER: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DenoiserKind {
    Gaussian,
    Bilateral,
    Nlm,
    Identity,
    /// Any matrix handed to [`crate::graph::certify_denoiser`] directly.
    Custom,
}

impl fmt::Display for DenoiserKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DenoiserKind::Gaussian => "gaussian",
            DenoiserKind::Bilateral => "bilateral",
            DenoiserKind::Nlm => "nlm",
            DenoiserKind::Identity => "identity",
            DenoiserKind::Custom => "custom",
        })
    }
}

impl FromStr for DenoiserKind {
    type Err = JdiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Self::Gaussian),
            "bilateral" | "bf" => Ok(Self::Bilateral),
            "nlm" => Ok(Self::Nlm),
            "identity" | "none" => Ok(Self::Identity),
            other => Err(JdiError::Config(format!("unknown denoiser '{other}'"))),
        }
    }
}

/// Kernel hyperparameters. Variances are in pixel² (spatial) and
/// intensity² on the unit scale (range, NLM).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub spatial_var: f64,
    pub range_var: f64,
    pub nlm_patch_size: usize,
    pub nlm_search_window: usize,
    pub nlm_h2: f64,
    pub nlm_taper: NlmWindow,
}

/// Weighting of the NLM search window.
///
/// A flat window is not a positive semidefinite mask, so on patches wider
/// than the window the balanced NLM matrix is usually indefinite and cannot
/// be mapped to a graph. The triangular window has the same support and is
/// a separable product of positive definite 1-D tapers, which keeps the
/// kernel positive definite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NlmWindow {
    Flat,
    #[default]
    Triangular,
}

impl NlmWindow {
    /// Weight of an offset of `(dr, dc)` pixels in a window of half-width `half`.
    fn weight(self, dr: i64, dc: i64, half: i64) -> f64 {
        if dr.abs() > half || dc.abs() > half {
            return 0.0;
        }
        match self {
            NlmWindow::Flat => 1.0,
            NlmWindow::Triangular => {
                let span = (half + 1) as f64;
                (1.0 - dr.abs() as f64 / span) * (1.0 - dc.abs() as f64 / span)
            }
        }
    }
}

impl fmt::Display for NlmWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NlmWindow::Flat => "flat",
            NlmWindow::Triangular => "triangular",
        })
    }
}

impl FromStr for NlmWindow {
    type Err = JdiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "flat" | "box" => Ok(Self::Flat),
            "triangular" | "tri" => Ok(Self::Triangular),
            other => Err(invalid(format!("unknown NLM window `{other}`"))),
        }
    }
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            spatial_var: 0.3,
            range_var: 0.3,
            nlm_patch_size: 3,
            nlm_search_window: 9,
            nlm_h2: 0.3,
            nlm_taper: NlmWindow::Triangular,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("spatial_var", self.spatial_var), ("range_var", self.range_var), ("nlm_h2", self.nlm_h2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.nlm_patch_size.is_multiple_of(2) || self.nlm_search_window.is_multiple_of(2) {
            return Err(invalid("NLM patch and search window sizes must be odd"));
        }
        if self.nlm_patch_size >= self.nlm_search_window {
            return Err(invalid("NLM patch must be smaller than the search window"));
        }
        Ok(())
    }
}

/// A square denoiser matrix `Ψ` together with the properties that were
/// actually verified for it.
#[derive(Debug, Clone)]
pub struct DenoiserOperator {
    matrix: DMatrix<f64>,
    kind: DenoiserKind,
    certified_symmetric: bool,
    certified_pd: bool,
    certified_nonexpansive: bool,
    doubly_stochastic: bool,
    spectrum: Option<Vec<f64>>,
}

impl DenoiserOperator {
    pub(crate) fn from_parts(
        matrix: DMatrix<f64>,
        kind: DenoiserKind,
        certified_symmetric: bool,
        certified_pd: bool,
        certified_nonexpansive: bool,
        doubly_stochastic: bool,
        spectrum: Option<Vec<f64>>,
    ) -> Self {
        Self { matrix, kind, certified_symmetric, certified_pd, certified_nonexpansive, doubly_stochastic, spectrum }
    }

    /// The identity denoiser on `n` pixels.
    pub fn identity(n: usize) -> Self {
        let spectrum = Some(vec![1.0; n]);
        Self::from_parts(DMatrix::identity(n, n), DenoiserKind::Identity, true, true, true, true, spectrum)
    }

    pub fn with_kind(mut self, kind: DenoiserKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn kind(&self) -> DenoiserKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn certified_symmetric(&self) -> bool {
        self.certified_symmetric
    }

    pub fn certified_pd(&self) -> bool {
        self.certified_pd
    }

    pub fn certified_nonexpansive(&self) -> bool {
        self.certified_nonexpansive
    }

    pub fn is_doubly_stochastic(&self) -> bool {
        self.doubly_stochastic
    }

    /// Symmetric, positive definite and non-expansive.
    pub fn is_certified(&self) -> bool {
        self.certified_symmetric && self.certified_pd && self.certified_nonexpansive
    }

    /// Ascending eigenvalues, present whenever the matrix passed the symmetry check.
    pub fn spectrum(&self) -> Option<&[f64]> {
        self.spectrum.as_deref()
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.size() {
            return Err(invalid(format!("signal length {} vs denoiser size {}", x.len(), self.size())));
        }
        if self.kind == DenoiserKind::Identity {
            return Ok(x.clone());
        }
        Ok(&self.matrix * x)
    }
}

fn check_coords(coords: &[[f64; 2]]) -> Result<()> {
    if coords.is_empty() {
        return Err(invalid("empty coordinate list"));
    }
    if coords.iter().flatten().any(|v| !v.is_finite()) {
        return Err(invalid("non-finite coordinate"));
    }
    Ok(())
}

fn sq_dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let dr = a[0] - b[0];
    let dc = a[1] - b[1];
    dr * dr + dc * dc
}

/// Builds a symmetric matrix from a pairwise weight, rejecting coincident
/// coordinates. The diagonal is the weight of a pixel with itself.
fn pairwise<F>(coords: &[[f64; 2]], mut weight: F) -> Result<DMatrix<f64>>
where
    F: FnMut(usize, usize, f64) -> f64,
{
    check_coords(coords)?;
    let n = coords.len();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        w[(i, i)] = weight(i, i, 0.0);
        for j in (i + 1)..n {
            let d2 = sq_dist(&coords[i], &coords[j]);
            if d2 == 0.0 {
                return Err(invalid(format!("duplicate coordinate at indices {i} and {j}")));
            }
            let v = weight(i, j, d2);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    Ok(w)
}

/// `W_ij = exp(−‖p_i − p_j‖² / (2σ_s²))` over every pair (no truncation).
pub fn gaussian_matrix(coords: &[[f64; 2]], params: &KernelParams) -> Result<DMatrix<f64>> {
    let denom = 2.0 * params.spatial_var;
    pairwise(coords, |_, _, d2| (-d2 / denom).exp())
}

/// Gaussian spatial kernel times a Gaussian range kernel on `intensities`.
pub fn bilateral_matrix(coords: &[[f64; 2]], intensities: &[f64], params: &KernelParams) -> Result<DMatrix<f64>> {
    if intensities.len() != coords.len() {
        return Err(invalid("intensities and coordinates differ in length"));
    }
    if intensities.iter().any(|v| !v.is_finite()) {
        return Err(invalid("non-finite intensity"));
    }
    let ds = 2.0 * params.spatial_var;
    let dr = 2.0 * params.range_var;
    pairwise(coords, |i, j, d2| {
        let dy = intensities[i] - intensities[j];
        (-d2 / ds).exp() * (-(dy * dy) / dr).exp()
    })
}

/// Non-local means weights on an integer pixel lattice.
///
/// `W_ij = ω(j − i)·exp(−d(P_i, P_j) / h²)` where `ω` is the search window
/// weight (zero outside the window, see [`NlmWindow`]) and `d` is the mean squared difference of the two
/// `patch×patch` neighborhoods. Neighborhood samples missing from the
/// coordinate set are replicated from the nearest in-bounds sample (clamped
/// to the set's bounding box, then the center pixel). The result is
/// symmetrized as `(W + Wᵀ)/2`.
pub fn nlm_matrix(coords: &[[f64; 2]], intensities: &[f64], params: &KernelParams) -> Result<DMatrix<f64>> {
    params.validate()?;
    check_coords(coords)?;
    if intensities.len() != coords.len() {
        return Err(invalid("intensities and coordinates differ in length"));
    }
    let mut lattice = Vec::with_capacity(coords.len());
    let mut index = HashMap::with_capacity(coords.len());
    for (k, c) in coords.iter().enumerate() {
        let (r, q) = (c[0].round(), c[1].round());
        if (r - c[0]).abs() > 1e-9 || (q - c[1]).abs() > 1e-9 {
            return Err(invalid("NLM requires integer lattice coordinates"));
        }
        let key = (r as i64, q as i64);
        if index.insert(key, k).is_some() {
            return Err(invalid(format!("duplicate coordinate {key:?}")));
        }
        lattice.push(key);
    }
    let (rmin, rmax) = lattice.iter().fold((i64::MAX, i64::MIN), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let (cmin, cmax) = lattice.iter().fold((i64::MAX, i64::MIN), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));

    let ph = (params.nlm_patch_size / 2) as i64;
    let wh = (params.nlm_search_window / 2) as i64;
    let patches: Vec<Vec<f64>> = lattice
        .iter()
        .enumerate()
        .map(|(k, &(r, c))| {
            let mut p = Vec::with_capacity(params.nlm_patch_size * params.nlm_patch_size);
            for dr in -ph..=ph {
                for dc in -ph..=ph {
                    let q = (r + dr, c + dc);
                    let v = index
                        .get(&q)
                        .or_else(|| index.get(&(q.0.clamp(rmin, rmax), q.1.clamp(cmin, cmax))))
                        .map_or(intensities[k], |&j| intensities[j]);
                    p.push(v);
                }
            }
            p
        })
        .collect();

    let n = coords.len();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (lattice[i], lattice[j]);
            let omega = params.nlm_taper.weight(a.0 - b.0, a.1 - b.1, wh);
            if omega == 0.0 {
                continue;
            }
            let d = patches[i].iter().zip(&patches[j]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
                / patches[i].len() as f64;
            w[(i, j)] = omega * (-d / params.nlm_h2).exp();
        }
    }
    Ok((&w + w.transpose()) * 0.5)
}

/// Symmetric Sinkhorn-Knopp scaling `Ψ = diag(d) W diag(d)` with
/// `d ← sqrt(d / (W d))`, iterated until every row (and so every column)
/// sums to 1 within `tol`. The result is certified before it is returned.
pub fn sinkhorn_balance(w: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<DenoiserOperator> {
    if !w.is_square() || w.nrows() == 0 {
        return Err(invalid("balancing needs a non-empty square matrix"));
    }
    if crate::linalg::symmetry_defect(w) > SYM_TOL {
        return Err(invalid("balancing needs a symmetric matrix"));
    }
    if w.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(invalid("balancing needs finite nonnegative entries"));
    }
    let n = w.nrows();
    if (0..n).any(|i| w[(i, i)] <= 0.0) {
        return Err(invalid("balancing needs a strictly positive diagonal"));
    }

    let mut d = DVector::from_element(n, 1.0);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations <= max_iter {
        let wd = w * &d;
        residual = d.iter().zip(wd.iter()).map(|(a, b)| (a * b - 1.0).abs()).fold(0.0, f64::max);
        if residual <= tol {
            break;
        }
        if iterations == max_iter {
            return Err(JdiError::BalanceFailure { iterations, residual });
        }
        for (di, wdi) in d.iter_mut().zip(wd.iter()) {
            *di = (*di / wdi).sqrt();
        }
        iterations += 1;
    }
    debug_assert!(residual <= tol);

    let mut psi = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = d[i] * w[(i, j)] * d[j];
            psi[(i, j)] = v;
            psi[(j, i)] = v;
        }
    }
    Ok(certify_as(psi, DenoiserKind::Custom))
}

/// Builds and balances a denoiser of the given kind over `coords`.
pub fn build_denoiser(
    kind: DenoiserKind,
    coords: &[[f64; 2]],
    intensities: &[f64],
    params: &KernelParams,
) -> Result<DenoiserOperator> {
    let w = match kind {
        DenoiserKind::Identity => return Ok(DenoiserOperator::identity(coords.len())),
        DenoiserKind::Gaussian => gaussian_matrix(coords, params)?,
        DenoiserKind::Bilateral => bilateral_matrix(coords, intensities, params)?,
        DenoiserKind::Nlm => nlm_matrix(coords, intensities, params)?,
        DenoiserKind::Custom => return Err(invalid("custom denoisers are supplied as matrices")),
    };
    Ok(sinkhorn_balance(&w, DEFAULT_SINKHORN_TOL, DEFAULT_SINKHORN_MAX_ITER)?.with_kind(kind))
}

/// Whitespace-separated text dump, one matrix row per line.
pub fn dump_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}
