//! Experiment configuration and its `key=value` text form.

use std::fmt;
use std::str::FromStr;

use crate::denoise::{DenoiserKind, KernelParams};
use crate::error::{JdiError, Result};
use crate::interp::{parse_matrix3, Transform};
use crate::solver::{SolvePath, SolverOptions, SolverWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Joint,
    Sequential,
    Both,
}

impl Mode {
    pub fn runs_joint(self) -> bool {
        matches!(self, Mode::Joint | Mode::Both)
    }

    pub fn runs_sequential(self) -> bool {
        matches!(self, Mode::Sequential | Mode::Both)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Joint => "joint",
            Mode::Sequential => "sequential",
            Mode::Both => "both",
        })
    }
}

impl FromStr for Mode {
    type Err = JdiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "joint" => Ok(Mode::Joint),
            "sequential" => Ok(Mode::Sequential),
            "both" => Ok(Mode::Both),
            other => Err(JdiError::Config(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub image_name: String,
    pub transform: Transform,
    pub denoiser: DenoiserKind,
    pub kernel: KernelParams,
    pub weights: SolverWeights,
    pub noise_variances: Vec<f64>,
    pub seed: u64,
    pub mode: Mode,
    pub patch_size: usize,
    pub solver: SolverOptions,
}

/// Variances `start, start+step, …, stop` (inclusive, to within half a step).
pub fn variance_range(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let count = ((stop - start) / step + 0.5).floor() as usize + 1;
    // rounded so grid points print as written (0.055, not 0.05500000000000001)
    (0..count).map(|i| ((start + step * i as f64) * 1e12).round() / 1e12).collect()
}

impl ExperimentConfig {
    /// Hyperparameter defaults for `denoiser`, rotation by 20 degrees.
    pub fn for_denoiser(denoiser: DenoiserKind) -> Self {
        let (weights, noise_variances) = match denoiser {
            DenoiserKind::Nlm => (SolverWeights::reference_nlm(), variance_range(0.125, 0.45, 0.025)),
            _ => (SolverWeights::reference(), variance_range(0.02, 0.10, 0.005)),
        };
        Self {
            image_name: "portrait".into(),
            transform: Transform::Rotation { angle_deg: 20.0 },
            denoiser,
            kernel: KernelParams::default(),
            weights,
            noise_variances,
            seed: 2024,
            mode: Mode::Both,
            patch_size: 10,
            solver: SolverOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.weights.validate()?;
        if self.noise_variances.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(JdiError::Config("noise variances must be positive".into()));
        }
        if self.patch_size < 2 {
            return Err(JdiError::Config("patch_size must be at least 2".into()));
        }
        if !(self.solver.cg_tol > 0.0) {
            return Err(JdiError::Config("cg_tol must be positive".into()));
        }
        Ok(())
    }

    /// Parses `key=value` lines (or whitespace-separated pairs); `#` starts a
    /// comment. Defaults follow the `denoiser` key when present.
    pub fn from_text(text: &str) -> Result<Self> {
        let pairs = split_pairs(text)?;
        Self::from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let pairs: Vec<(&str, &str)> = pairs.into_iter().collect();
        let denoiser = match pairs.iter().rev().find(|(k, _)| *k == "denoiser") {
            Some((_, v)) => v.parse()?,
            None => DenoiserKind::Bilateral,
        };
        let mut cfg = Self::for_denoiser(denoiser);
        // transform first so angle/h refine it regardless of order
        for (k, v) in pairs.iter().filter(|(k, _)| *k == "transform") {
            cfg.set(k, v)?;
        }
        for (k, v) in pairs.iter().filter(|(k, _)| *k != "transform") {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one configuration key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim().trim_matches('"');
        match key {
            "image" | "image_name" => self.image_name = value.to_string(),
            "transform" => self.transform = value.parse()?,
            "angle" => self.transform = Transform::Rotation { angle_deg: num(key, value)? },
            "h" | "homography" => self.transform = Transform::Homography(parse_matrix3(value)?),
            "denoiser" => self.denoiser = value.parse()?,
            "spatial_var" => self.kernel.spatial_var = num(key, value)?,
            "range_var" => self.kernel.range_var = num(key, value)?,
            "nlm_patch" | "nlm_patch_size" => self.kernel.nlm_patch_size = int(key, value)?,
            "nlm_window" | "nlm_search_window" => self.kernel.nlm_search_window = int(key, value)?,
            "nlm_h2" => self.kernel.nlm_h2 = num(key, value)?,
            "nlm_taper" => self.kernel.nlm_taper = value.parse()?,
            "mu" => self.weights.mu = num(key, value)?,
            "gamma" => self.weights.gamma = num(key, value)?,
            "kappa" => self.weights.kappa = num(key, value)?,
            "variances" | "noise_variance_list" => self.noise_variances = parse_variances(value)?,
            "seed" | "rng_seed" => self.seed = int(key, value)? as u64,
            "mode" => self.mode = value.parse()?,
            "patch_size" => self.patch_size = int(key, value)?,
            "cg_tol" => self.solver.cg_tol = num(key, value)?,
            "max_iter" => self.solver.max_iter = Some(int(key, value)?),
            "jacobi" => self.solver.jacobi = boolean(key, value)?,
            "closed_form" => {
                self.solver.path = if boolean(key, value)? { SolvePath::ClosedForm } else { SolvePath::Cg }
            }
            "solve_path" => {
                self.solver.path = match value {
                    "cg" => SolvePath::Cg,
                    "direct" => SolvePath::Direct,
                    "closed_form" | "closed-form" => SolvePath::ClosedForm,
                    other => return Err(JdiError::Config(format!("unknown solve_path '{other}'"))),
                }
            }
            other => return Err(JdiError::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Stable FNV-1a hash of the canonical text form.
    pub fn fingerprint(&self) -> u64 {
        self.to_string().bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
    }
}

impl fmt::Display for ExperimentConfig {
    /// Canonical `key=value` form, one per line; parses back to an equal config.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h = match self.transform {
            Transform::Rotation { angle_deg } => {
                writeln!(f, "transform=rotation")?;
                writeln!(f, "angle={angle_deg}")?;
                None
            }
            Transform::Homography(h) => Some(h),
        };
        if let Some(h) = h {
            let rows: Vec<String> =
                (0..3).map(|r| (0..3).map(|c| format!("{}", h[(r, c)])).collect::<Vec<_>>().join(",")).collect();
            writeln!(f, "transform=homography")?;
            writeln!(f, "h={}", rows.join(";"))?;
        }
        writeln!(f, "image={}", self.image_name)?;
        writeln!(f, "denoiser={}", self.denoiser)?;
        writeln!(f, "spatial_var={}", self.kernel.spatial_var)?;
        writeln!(f, "range_var={}", self.kernel.range_var)?;
        writeln!(f, "nlm_patch={}", self.kernel.nlm_patch_size)?;
        writeln!(f, "nlm_window={}", self.kernel.nlm_search_window)?;
        writeln!(f, "nlm_h2={}", self.kernel.nlm_h2)?;
        writeln!(f, "nlm_taper={}", self.kernel.nlm_taper)?;
        writeln!(f, "mu={}", self.weights.mu)?;
        writeln!(f, "gamma={}", self.weights.gamma)?;
        writeln!(f, "kappa={}", self.weights.kappa)?;
        let vars: Vec<String> = self.noise_variances.iter().map(|v| v.to_string()).collect();
        writeln!(f, "variances={}", vars.join(","))?;
        writeln!(f, "seed={}", self.seed)?;
        writeln!(f, "mode={}", self.mode)?;
        writeln!(f, "patch_size={}", self.patch_size)?;
        writeln!(f, "cg_tol={}", self.solver.cg_tol)?;
        if let Some(it) = self.solver.max_iter {
            writeln!(f, "max_iter={it}")?;
        }
        writeln!(f, "jacobi={}", self.solver.jacobi)?;
        let path = match self.solver.path {
            SolvePath::Cg => "cg",
            SolvePath::Direct => "direct",
            SolvePath::ClosedForm => "closed_form",
        };
        writeln!(f, "solve_path={path}")
    }
}

fn split_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        for token in tokenize(line) {
            let (k, v) =
                token.split_once('=').ok_or_else(|| JdiError::Config(format!("expected key=value, got '{token}'")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    Ok(out)
}

/// Whitespace split that keeps double-quoted spans together.
fn tokenize(line: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    for ch in line.chars() {
        match ch {
            '"' => {
                quoted = !quoted;
                cur.push(ch);
            }
            c if c.is_whitespace() && !quoted => {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

/// `0.02,0.03` or `start:stop:step`.
pub fn parse_variances(value: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = value.split(':').collect();
    if parts.len() == 3 {
        let v: Vec<f64> = parts.iter().map(|p| num("variances", p)).collect::<Result<_>>()?;
        if !(v[2] > 0.0) || v[1] < v[0] {
            return Err(JdiError::Config(format!("bad variance range '{value}'")));
        }
        return Ok(variance_range(v[0], v[1], v[2]));
    }
    value.split(',').filter(|s| !s.trim().is_empty()).map(|s| num("variances", s)).collect()
}

fn num(key: &str, value: &str) -> Result<f64> {
    value.trim().parse().map_err(|_| JdiError::Config(format!("{key}: '{value}' is not a number")))
}

fn int(key: &str, value: &str) -> Result<usize> {
    value.trim().parse().map_err(|_| JdiError::Config(format!("{key}: '{value}' is not a nonnegative integer")))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(JdiError::Config(format!("{key}: '{other}' is not a boolean"))),
    }
}
