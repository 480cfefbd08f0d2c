use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use jdi_core::denoise::build_denoiser;
use jdi_core::graph::denoiser_to_laplacian;
use jdi_core::pipeline::{
    add_gaussian_noise, denoise_image, interpolate_image, load_image, prepare, psnr, reference_image, run_experiment,
    run_image, save_image, stream_seed, synthetic_peppers, synthetic_portrait,
};
use jdi_core::{ExperimentConfig, ImageBuffer, JdiError, Mode};

#[derive(Debug, Parser)]
#[command(name = "jdi", version, about = "Joint image denoising and interpolation via mixed-graph MAP filtering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tile-wise MAP denoising with the configured denoiser's graph.
    Denoise(ImageArgs),
    /// Plain interpolation through the configured transform.
    Interpolate(ImageArgs),
    /// Joint denoising and interpolation (non-separable MAP solution).
    Joint(ImageArgs),
    /// Interpolation followed by denoising of the interpolated patch.
    Sequential(ImageArgs),
    /// PSNR sweep over the configured noise variances, written as CSV.
    Experiment(ExperimentArgs),
    /// Prints one patch's graph as an `i j w` edge list.
    InspectGraph(InspectArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// File of `key=value` lines.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Input PGM image. Without it the synthetic image named by `image=` is used.
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Side length of the synthetic image.
    #[arg(long, default_value_t = 512)]
    size: usize,
    /// Extra settings such as `transform=rotation angle=20`; applied after the config file.
    #[arg(value_name = "KEY=VALUE")]
    settings: Vec<String>,
}

#[derive(Debug, Args)]
struct ImageArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Adds Gaussian noise of this variance before processing and reports PSNR.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long, short)]
    out_image: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Writes the CSV here instead of standard output.
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GraphKind {
    /// Undirected graph of the denoiser over a patch's interpolated pixels.
    Denoiser,
    /// Directed graph of a patch's padded interpolator.
    Interpolator,
}

#[derive(Debug, Args)]
struct InspectArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_enum, default_value_t = GraphKind::Denoiser)]
    graph: GraphKind,
    /// Patch index in tiling order; defaults to the middle patch.
    #[arg(long)]
    patch: Option<usize>,
    /// Adds Gaussian noise of this variance before building the denoiser.
    #[arg(long)]
    noise: Option<f64>,
    /// Writes the edge list here instead of standard output.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] JdiError),
    #[error("{0}")]
    Usage(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn load_config(args: &ConfigArgs) -> CliResult<ExperimentConfig> {
    let mut text = match &args.config {
        Some(path) => fs::read_to_string(path)?,
        None => String::new(),
    };
    for s in &args.settings {
        if !s.contains('=') {
            return Err(CliError::Usage(format!("expected KEY=VALUE, got `{s}`")));
        }
        text.push('\n');
        text.push_str(s);
    }
    let mut cfg = ExperimentConfig::from_text(&text)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn load_input(args: &ConfigArgs, cfg: &ExperimentConfig) -> CliResult<ImageBuffer> {
    if let Some(path) = &args.input {
        return Ok(load_image(path)?);
    }
    match cfg.image_name.as_str() {
        "portrait" | "lena" => Ok(synthetic_portrait(args.size)),
        "peppers" => Ok(synthetic_peppers(args.size)),
        other => Err(CliError::Usage(format!(
            "unknown synthetic image `{other}`; pass --input or use image=portrait|peppers"
        ))),
    }
}

fn maybe_noisy(clean: &ImageBuffer, noise: Option<f64>, seed: u64) -> CliResult<ImageBuffer> {
    match noise {
        Some(v) => Ok(add_gaussian_noise(clean, v, stream_seed(seed, 0))?),
        None => Ok(clean.clone()),
    }
}

fn write_image(image: &ImageBuffer, path: Option<&Path>) -> CliResult<()> {
    if let Some(path) = path {
        save_image(image, path)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn run_single(args: &ImageArgs, which: &str) -> CliResult<()> {
    let mut cfg = load_config(&args.config)?;
    let clean = load_input(&args.config, &cfg)?;
    let input = maybe_noisy(&clean, args.noise, cfg.seed)?;
    let (image, failed, reference) = match which {
        "denoise" => {
            let out = denoise_image(&input, cfg.denoiser, &cfg.kernel, cfg.weights.mu, cfg.patch_size)?;
            (out.image, out.patches_failed, clean)
        }
        "interpolate" => {
            let out = interpolate_image(&input, &cfg.transform, cfg.patch_size);
            let reference = interpolate_image(&clean, &cfg.transform, cfg.patch_size).image;
            (out.image, out.patches_failed, reference)
        }
        mode => {
            cfg.mode = if mode == "joint" { Mode::Joint } else { Mode::Sequential };
            let prepared = prepare(&cfg.transform, input.size(), cfg.patch_size);
            let out = run_image(&prepared, &input, &cfg)?;
            let stitched = out.joint.or(out.sequential).expect("one mode requested");
            (stitched.image, stitched.patches_failed, reference_image(&prepared, &clean))
        }
    };
    println!(
        "{which}: {}x{} output, {} valid pixels, {failed} failed patches",
        image.width(),
        image.height(),
        image.valid_count()
    );
    if args.noise.is_some() {
        println!("psnr_db={:.6}", psnr(&reference, &image)?);
    }
    write_image(&image, args.out_image.as_deref())
}

/// Writes bulk output to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) -> CliResult<()> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn run_experiment_cmd(args: &ExperimentArgs) -> CliResult<()> {
    let cfg = load_config(&args.config)?;
    let clean = load_input(&args.config, &cfg)?;
    let report = run_experiment(&cfg, &clean)?;
    match &args.out_csv {
        Some(path) => {
            fs::write(path, &report.csv)?;
            eprintln!("wrote {}", path.display());
        }
        None => emit(&report.csv)?,
    }
    Ok(())
}

fn inspect_graph(args: &InspectArgs) -> CliResult<()> {
    let cfg = load_config(&args.config)?;
    let clean = load_input(&args.config, &cfg)?;
    let input = maybe_noisy(&clean, args.noise, cfg.seed)?;
    let prepared = prepare(&cfg.transform, input.size(), cfg.patch_size);
    if prepared.jobs.is_empty() {
        return Err(CliError::Usage("the transform leaves no patch with output pixels".into()));
    }
    let index = args.patch.unwrap_or(prepared.jobs.len() / 2);
    let job = prepared
        .jobs
        .get(index)
        .ok_or_else(|| CliError::Usage(format!("patch {index} out of range (0..{})", prepared.jobs.len())))?;
    let op = &job.job.operator;
    let text = match args.graph {
        GraphKind::Denoiser => {
            let z = op.interpolate_real(&op.gather(input.pixels()).values);
            let psi = build_denoiser(cfg.denoiser, &op.target_coords(), z.as_slice(), &cfg.kernel)?;
            denoiser_to_laplacian(&psi, cfg.weights.mu)?.edge_list()
        }
        GraphKind::Interpolator => {
            let a = job.graph.adjacency();
            let mut out = String::new();
            for i in 0..a.nrows() {
                for j in 0..a.ncols() {
                    if a[(i, j)] != 0.0 {
                        out.push_str(&format!("{i} {j} {}\n", a[(i, j)]));
                    }
                }
            }
            out
        }
    };
    eprintln!(
        "patch {index} at {:?}: {} sources, {} outputs, {} dummy rows",
        job.job.origin(),
        op.source_count(),
        op.real_output_count(),
        op.dummy_rows().len()
    );
    match &args.out {
        Some(path) => fs::write(path, text)?,
        None => emit(&text)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Denoise(a) => run_single(a, "denoise"),
        Command::Interpolate(a) => run_single(a, "interpolate"),
        Command::Joint(a) => run_single(a, "joint"),
        Command::Sequential(a) => run_single(a, "sequential"),
        Command::Experiment(a) => run_experiment_cmd(a),
        Command::InspectGraph(a) => inspect_graph(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Usage(_) | CliError::Core(JdiError::Config(_)) => ExitCode::from(2),
                CliError::Core(_) => ExitCode::FAILURE,
            }
        }
    }
}
