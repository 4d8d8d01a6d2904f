//! Command-line driver: frame rendering, bound synthesis, robustness
//! verification, self-validation sweeps, and per-pixel curve reports.
//!
//! Angles are degrees and distances meters on the command line; everything
//! internal is radians/meters. A TOML config file can supply defaults for
//! the parameter flags; explicit flags win. Exit codes: 0 success (`verify`:
//! all instances robust, `validate`: all checks passed), 1 `verify` unknown
//! or `validate` check failure, 2 usage or processing error.

use crate::bounds::{
    bound_image, bound_pixel, lipschitz_constant, load_bounds, save_bounds, BoundConfig, BoundSet,
    BoundsError,
};
use crate::geometry::{
    preimage, preimage_gradient, CameraIntrinsics, GeometryError, PerturbationScenario,
    PixelCoord, ScenarioKind,
};
use crate::imaging::{
    load_image, render, save_csv, save_pgm, Image, ImagingError, Padding, PgmFlavor,
    PixelCurveContext,
};
use crate::verifier::{load_network, verify_robust, Mode, Status, VerifierError};
use crate::Interval;
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;
use thiserror::Error;

/// Dense-grid soundness tolerance for `validate`.
const SOUND_TOL: f64 = 1e-9;
/// Relative tolerance for the analytic-vs-finite-difference gradient check.
const GRAD_TOL: f64 = 1e-5;
/// Central-difference step for the gradient check.
const GRAD_STEP: f64 = 1e-6;
/// Gradient-check sample count.
const GRAD_TRIPLES: usize = 1000;
/// Allowed excess of observed slope over the Lipschitz constant.
const LIP_TOL: f64 = 1e-9;
/// Random (pixel, cell, side) draws for the Lipschitz sweep.
const LIP_TRIPLES: usize = 50;
/// Grid resolution per cell for the Lipschitz sweep.
const LIP_GRID: usize = 100_000;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {msg}")]
    Config { path: String, msg: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Verifier(#[from] VerifierError),
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io { path: path.display().to_string(), source }
}

// ==== unit conversion (CLI boundary) ====

fn to_internal(kind: ScenarioKind, x: f64) -> f64 {
    if kind.is_rotation() {
        x.to_radians()
    } else {
        x
    }
}

fn to_cli(kind: ScenarioKind, x: f64) -> f64 {
    if kind.is_rotation() {
        x.to_degrees()
    } else {
        x
    }
}

fn unit_name(kind: ScenarioKind) -> &'static str {
    if kind.is_rotation() {
        "deg"
    } else {
        "m"
    }
}

// ==== flag value parsers ====

fn parse_kind(s: &str) -> Result<ScenarioKind, String> {
    ScenarioKind::from_token(s)
        .ok_or_else(|| format!("unknown scenario {s:?} (expected roll|pitch|yaw|dx|dy|dz)"))
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected MIN:MAX, got {s:?}"))?;
    let parse = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    Ok((parse(lo)?, parse(hi)?))
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (u, v) = s.split_once(',').ok_or_else(|| format!("expected U,V, got {s:?}"))?;
    let parse = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    Ok((parse(u)?, parse(v)?))
}

fn parse_pixel(s: &str) -> Result<(usize, usize), String> {
    let (i, j) = s.split_once(',').ok_or_else(|| format!("expected I,J, got {s:?}"))?;
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    Ok((parse(i)?, parse(j)?))
}

fn parse_padding(s: &str) -> Result<Padding, String> {
    Padding::from_token(s).ok_or_else(|| {
        format!("unknown padding {s:?} (expected black|gray|replicate|reflect|wrap)")
    })
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::from_token(s).ok_or_else(|| format!("unknown mode {s:?} (expected interval|linear)"))
}

/// Output encoding for rendered frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RenderFormat {
    Pgm,
    PgmAscii,
    Csv,
}

impl RenderFormat {
    fn extension(self) -> &'static str {
        match self {
            RenderFormat::Pgm | RenderFormat::PgmAscii => "pgm",
            RenderFormat::Csv => "csv",
        }
    }
}

fn parse_format(s: &str) -> Result<RenderFormat, String> {
    match s {
        "pgm" => Ok(RenderFormat::Pgm),
        "pgm-ascii" => Ok(RenderFormat::PgmAscii),
        "csv" => Ok(RenderFormat::Csv),
        _ => Err(format!("unknown format {s:?} (expected pgm|pgm-ascii|csv)")),
    }
}

// ==== config file ====

/// Optional TOML defaults for the parameter flags (not for paths). Flags
/// win over file values.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    scenario: Option<String>,
    range: Option<String>,
    height: Option<f64>,
    focal: Option<f64>,
    principal: Option<String>,
    padding: Option<String>,
    q: Option<usize>,
    samples: Option<usize>,
    eps: Option<f64>,
    max_iters: Option<u64>,
    mode: Option<String>,
    threads: Option<usize>,
    seed: Option<u64>,
    count: Option<usize>,
    points: Option<usize>,
    grid: Option<usize>,
    label: Option<usize>,
    format: Option<String>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Config { path: path.display().to_string(), msg: e.to_string() })
    }

    /// Parses a string-valued config key with the matching flag parser.
    fn parsed<T>(
        value: &Option<String>,
        key: &str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<Option<T>, CliError> {
        value
            .as_deref()
            .map(|v| parse(v).map_err(|msg| usage(format!("config key {key}: {msg}"))))
            .transpose()
    }
}

// ==== shared flag groups ====

/// Scenario and camera flags shared by the rendering/bounding commands.
#[derive(Debug, Args, Default)]
struct SceneArgs {
    /// Perturbed pose parameter: roll|pitch|yaw|dx|dy|dz.
    #[arg(long, value_parser = parse_kind)]
    scenario: Option<ScenarioKind>,
    /// Parameter range MIN:MAX (degrees for rotations, meters for
    /// translations).
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    range: Option<(f64, f64)>,
    /// Camera height above the scene plane in meters (translations only).
    #[arg(long, allow_hyphen_values = true)]
    height: Option<f64>,
    /// Focal length in pixels (default: image width).
    #[arg(long)]
    focal: Option<f64>,
    /// Principal point U,V in pixels (default: image center).
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    principal: Option<(f64, f64)>,
    /// Border handling: black|gray|replicate|reflect|wrap.
    #[arg(long, value_parser = parse_padding)]
    padding: Option<Padding>,
}

/// Bound-synthesis flags shared by bound/validate/report.
#[derive(Debug, Args, Default)]
struct FitArgs {
    /// Partition cells per bound side.
    #[arg(long)]
    q: Option<usize>,
    /// Samples per cell for segment fitting.
    #[arg(long)]
    samples: Option<usize>,
    /// Certificate slack for the violation search.
    #[arg(long)]
    eps: Option<f64>,
    /// Branch-and-bound budget per violation search.
    #[arg(long)]
    max_iters: Option<u64>,
}

/// Fully resolved run parameters: the scenario in internal units, camera
/// overrides, fit settings, and plumbing, merged from flags over the config
/// file and validated before any work starts.
#[derive(Debug)]
pub struct RunConfig {
    pub scenario: Option<PerturbationScenario>,
    /// The parameter range exactly as entered (degrees/meters), kept for
    /// display and for grids whose values should match user input; `Some`
    /// iff `scenario` is.
    pub cli_range: Option<(f64, f64)>,
    pub padding: Padding,
    pub focal: Option<f64>,
    pub principal: Option<(f64, f64)>,
    pub fit: BoundConfig,
    pub mode: Mode,
    pub threads: usize,
    pub seed: u64,
}

impl RunConfig {
    fn resolve(
        scene: &SceneArgs,
        fit: &FitArgs,
        mode: Option<Mode>,
        threads: Option<usize>,
        seed: Option<u64>,
        file: &FileConfig,
    ) -> Result<RunConfig, CliError> {
        let kind = match scene.scenario {
            Some(k) => Some(k),
            None => FileConfig::parsed(&file.scenario, "scenario", parse_kind)?,
        };
        let range = match scene.range {
            Some(r) => Some(r),
            None => FileConfig::parsed(&file.range, "range", parse_range)?,
        };
        let height = scene.height.or(file.height);
        let scenario = match (kind, range) {
            (Some(kind), Some((lo, hi))) => {
                let domain = Interval::new(to_internal(kind, lo), to_internal(kind, hi));
                let z = if kind.is_rotation() {
                    None
                } else {
                    Some(height.ok_or_else(|| {
                        usage(format!("--height is required for scenario {kind}"))
                    })?)
                };
                Some(PerturbationScenario::new(kind, domain, z)?)
            }
            (None, None) => None,
            (Some(_), None) => return Err(usage("--scenario requires --range")),
            (None, Some(_)) => return Err(usage("--range requires --scenario")),
        };

        let padding = match scene.padding {
            Some(p) => p,
            None => FileConfig::parsed(&file.padding, "padding", parse_padding)?
                .unwrap_or(Padding::Black),
        };
        let principal = match scene.principal {
            Some(p) => Some(p),
            None => FileConfig::parsed(&file.principal, "principal", parse_pair)?,
        };

        let d = BoundConfig::default();
        let fit = BoundConfig {
            q: fit.q.or(file.q).unwrap_or(d.q),
            samples: fit.samples.or(file.samples).unwrap_or(d.samples),
            eps: fit.eps.or(file.eps).unwrap_or(d.eps),
            max_iters: fit.max_iters.or(file.max_iters).unwrap_or(d.max_iters),
        };
        if fit.q == 0 {
            return Err(usage("--q must be at least 1"));
        }
        if fit.samples < 2 {
            return Err(usage("--samples must be at least 2"));
        }
        if !(fit.eps > 0.0 && fit.eps.is_finite()) {
            return Err(usage("--eps must be a positive real"));
        }
        if fit.max_iters == 0 {
            return Err(usage("--max-iters must be at least 1"));
        }

        let mode = match mode {
            Some(m) => m,
            None => FileConfig::parsed(&file.mode, "mode", parse_mode)?.unwrap_or(Mode::Linear),
        };
        let threads = match threads.or(file.threads) {
            Some(n) => n,
            None => match std::env::var("HOMOBOUND_THREADS") {
                Ok(v) => v.trim().parse().map_err(|_| {
                    usage(format!("HOMOBOUND_THREADS must be a thread count, got {v:?}"))
                })?,
                Err(_) => 0,
            },
        };
        Ok(RunConfig {
            scenario,
            cli_range: range,
            padding,
            focal: scene.focal.or(file.focal),
            principal,
            fit,
            mode,
            threads,
            seed: seed.or(file.seed).unwrap_or(0),
        })
    }

    fn require_scenario(&self) -> Result<(PerturbationScenario, (f64, f64)), CliError> {
        let s = self.scenario.ok_or_else(|| usage("--scenario and --range are required"))?;
        Ok((s, self.cli_range.expect("a resolved scenario always carries its range")))
    }

    /// Image intrinsics: library defaults for the image size, overridden by
    /// the focal/principal flags.
    pub fn intrinsics_for(&self, img: &Image) -> CameraIntrinsics {
        let mut intr = CameraIntrinsics::defaults_for(img.width(), img.height());
        if let Some(f) = self.focal {
            intr.f = f;
        }
        if let Some((u, v)) = self.principal {
            intr.xc = u;
            intr.yc = v;
        }
        intr
    }

    /// Caps the global worker pool; 0 keeps the library default.
    fn apply_threads(&self) {
        if self.threads > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(self.threads).build_global();
        }
    }
}

// ==== command line ====

#[derive(Debug, Parser)]
#[command(
    name = "homobound",
    version,
    about = "Sound pixel-value bounds under camera-pose perturbations, \
             with ReLU-network robustness certification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render evenly spaced sample frames across the parameter range.
    Render(RenderArgs),
    /// Compute sound per-pixel bounds and write a bound-set file.
    Bound(BoundArgs),
    /// Verify classifier robustness against bound-set files.
    Verify(VerifyArgs),
    /// Self-check an instance: gradients, soundness, Lipschitz constants.
    Validate(ValidateArgs),
    /// Emit per-kappa curve and bound columns for one pixel as CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct RenderArgs {
    /// Input image (.pgm or .csv).
    #[arg(long)]
    image: PathBuf,
    /// Output directory for frames and the manifest.
    #[arg(long)]
    out: PathBuf,
    /// Number of frames across the range.
    #[arg(long)]
    count: Option<usize>,
    /// Frame encoding: pgm|pgm-ascii|csv.
    #[arg(long, value_parser = parse_format)]
    format: Option<RenderFormat>,
    #[command(flatten)]
    scene: SceneArgs,
    /// TOML file with defaults for the parameter flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BoundArgs {
    /// Input image (.pgm or .csv).
    #[arg(long)]
    image: PathBuf,
    /// Output bound-set file.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    fit: FitArgs,
    /// Worker threads for bound synthesis (default: HOMOBOUND_THREADS or
    /// all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// TOML file with defaults for the parameter flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Bound-set file; repeat for a batch.
    #[arg(long, required = true)]
    bounds: Vec<PathBuf>,
    /// Network file.
    #[arg(long)]
    net: PathBuf,
    /// True class index; repeat to give one per --bounds.
    #[arg(long)]
    label: Vec<usize>,
    /// Propagation mode: interval|linear.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    /// Source image per --bounds (enables rendered witnesses).
    #[arg(long)]
    image: Vec<PathBuf>,
    /// TOML file with defaults for the parameter flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Image to validate on (default: a random image from --seed).
    #[arg(long)]
    image: Option<PathBuf>,
    /// Existing bound-set file to check (requires --image; otherwise bounds
    /// are synthesized from the scenario flags).
    #[arg(long)]
    bounds: Option<PathBuf>,
    /// Grid resolution for the soundness sweep.
    #[arg(long)]
    grid: Option<usize>,
    /// Seed for the random image and random check locations.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    fit: FitArgs,
    /// Worker threads (default: HOMOBOUND_THREADS or all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// TOML file with defaults for the parameter flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Input image (.pgm or .csv).
    #[arg(long)]
    image: PathBuf,
    /// Bound-set file (otherwise bounds are synthesized from the scenario
    /// flags).
    #[arg(long)]
    bounds: Option<PathBuf>,
    /// Target pixel as row,column.
    #[arg(long, value_parser = parse_pixel)]
    pixel: (usize, usize),
    /// Number of kappa rows.
    #[arg(long)]
    points: Option<usize>,
    /// Output CSV path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    fit: FitArgs,
    /// TOML file with defaults for the parameter flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Parses `std::env::args` and runs the selected command.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Render(args) => cmd_render(args),
        Command::Bound(args) => cmd_bound(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Report(args) => cmd_report(args),
    }
}

// ==== render ====

fn cmd_render(args: RenderArgs) -> Result<ExitCode, CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let cfg = RunConfig::resolve(&args.scene, &FitArgs::default(), None, None, None, &file)?;
    let (s, (cli_lo, cli_hi)) = cfg.require_scenario()?;
    let count = args.count.or(file.count).unwrap_or(5);
    if count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    let format = match args.format {
        Some(f) => f,
        None => FileConfig::parsed(&file.format, "format", parse_format)?
            .unwrap_or(RenderFormat::Pgm),
    };

    let img = load_image(&args.image, cfg.padding)?;
    let intr = cfg.intrinsics_for(&img);
    std::fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;

    let kind = s.kind();
    // The grid is laid out in the units the range was entered in, so the
    // manifest lists exact human-entered values; each point converts to
    // radians for rendering. The conversion is monotone and maps the
    // endpoints to the validated domain endpoints, so every grid point is
    // in-domain.
    let cli_grid = Interval::new(cli_lo, cli_hi).grid(count);
    let mut manifest = String::new();
    writeln!(manifest, "# homobound render manifest").unwrap();
    writeln!(manifest, "# scenario {kind}, kappa in {}", unit_name(kind)).unwrap();
    for (idx, &x) in cli_grid.iter().enumerate() {
        let frame = render(&img, intr, &s, to_internal(kind, x))?;
        let name = format!("frame_{idx:03}.{}", format.extension());
        let path = args.out.join(&name);
        match format {
            RenderFormat::Pgm => save_pgm(&frame, &path, PgmFlavor::Binary)?,
            RenderFormat::PgmAscii => save_pgm(&frame, &path, PgmFlavor::Ascii)?,
            RenderFormat::Csv => save_csv(&frame, &path)?,
        }
        writeln!(manifest, "{name} {x}").unwrap();
    }
    let manifest_path = args.out.join("manifest.txt");
    std::fs::write(&manifest_path, manifest).map_err(|e| io_err(&manifest_path, e))?;
    println!("wrote {count} frames and manifest.txt to {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

// ==== bound ====

fn cmd_bound(args: BoundArgs) -> Result<ExitCode, CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let cfg = RunConfig::resolve(&args.scene, &args.fit, None, args.threads, None, &file)?;
    let (s, (cli_lo, cli_hi)) = cfg.require_scenario()?;
    let img = load_image(&args.image, cfg.padding)?;
    let intr = cfg.intrinsics_for(&img);
    cfg.apply_threads();

    let start = Instant::now();
    let set = bound_image(&img, intr, &s, &cfg.fit)?;
    let elapsed = start.elapsed().as_secs_f64();
    save_bounds(&set, &args.out)?;

    let kind = s.kind();
    println!("scenario {kind} [{cli_lo}, {cli_hi}] {}", unit_name(kind));
    println!(
        "image {}x{}, q {}, samples {}, eps {}",
        img.height(),
        img.width(),
        cfg.fit.q,
        cfg.fit.samples,
        cfg.fit.eps
    );
    println!("polytope area {:.6e}", set.total_area());
    println!("mean bab steps {:.2}", set.mean_bab_steps());
    println!("warnings {}", set.warnings);
    println!("time {elapsed:.3} s");
    println!("wrote {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

// ==== verify ====

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode, CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let cfg =
        RunConfig::resolve(&SceneArgs::default(), &FitArgs::default(), args.mode, None, None, &file)?;
    let n = args.bounds.len();
    let labels = if args.label.is_empty() {
        let l = file.label.ok_or_else(|| usage("--label is required"))?;
        vec![l; n]
    } else if args.label.len() == 1 {
        vec![args.label[0]; n]
    } else if args.label.len() == n {
        args.label.clone()
    } else {
        return Err(usage(format!(
            "expected 1 or {n} --label values, got {}",
            args.label.len()
        )));
    };
    if !(args.image.is_empty() || args.image.len() == n) {
        return Err(usage(format!(
            "expected 0 or {n} --image values, got {}",
            args.image.len()
        )));
    }

    let net = load_network(&args.net)?;
    let mut robust = 0;
    for (idx, path) in args.bounds.iter().enumerate() {
        let set = load_bounds(path)?;
        let source = args
            .image
            .get(idx)
            .map(|p| load_image(p, set.padding))
            .transpose()?;
        let outcome = verify_robust(&net, &set, labels[idx], cfg.mode, source.as_ref())?;

        println!("{}: {}", path.display(), outcome.status);
        let margins: Vec<String> =
            outcome.margins.iter().map(|m| format!("{m:.6e}")).collect();
        println!("  margins: {}", margins.join(" "));
        if let Some(w) = &outcome.witness {
            let kind = set.scenario.kind();
            let kappa = to_cli(kind, w.kappa);
            match w.margin {
                Some(m) => println!(
                    "  witness: kappa {kappa} {}, margin {m:.6e}",
                    unit_name(kind)
                ),
                None => println!("  witness: kappa {kappa} {}", unit_name(kind)),
            }
        }
        robust += usize::from(outcome.status == Status::Robust);
    }
    if n > 1 {
        println!("robust {robust}/{n}");
    }
    Ok(if robust == n { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

// ==== validate ====

fn random_image(seed: u64, h: usize, w: usize, padding: Padding) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..h * w).map(|_| rng.gen_range(0.0..=1.0)).collect();
    Image::new(h, w, data, padding).expect("fixed-size random image is valid")
}

fn cmd_validate(args: ValidateArgs) -> Result<ExitCode, CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let cfg =
        RunConfig::resolve(&args.scene, &args.fit, None, args.threads, args.seed, &file)?;
    let grid = args.grid.or(file.grid).unwrap_or(10_000);
    if grid < 2 {
        return Err(usage("--grid must be at least 2"));
    }
    cfg.apply_threads();

    let (img, set) = match &args.bounds {
        Some(path) => {
            let set = load_bounds(path)?;
            let image_path = args
                .image
                .as_ref()
                .ok_or_else(|| usage("--image is required with --bounds"))?;
            let img = load_image(image_path, set.padding)?;
            if (img.height(), img.width()) != (set.image_height, set.image_width) {
                return Err(usage(format!(
                    "image is {}x{} but the bound set covers {}x{}",
                    img.height(),
                    img.width(),
                    set.image_height,
                    set.image_width
                )));
            }
            (img, set)
        }
        None => {
            let (s, _) = cfg.require_scenario()?;
            let img = match &args.image {
                Some(path) => load_image(path, cfg.padding)?,
                None => random_image(cfg.seed, 8, 8, cfg.padding),
            };
            let intr = cfg.intrinsics_for(&img);
            let set = bound_image(&img, intr, &s, &cfg.fit)?;
            (img, set)
        }
    };

    let kind = set.scenario.kind();
    let d = set.scenario.domain();
    println!(
        "instance: {kind} [{}, {}] {}, image {}x{}, q {}, samples {}, eps {}",
        to_cli(kind, d.lo),
        to_cli(kind, d.hi),
        unit_name(kind),
        img.height(),
        img.width(),
        set.config.q,
        set.config.samples,
        set.config.eps
    );

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut failures = 0;
    let mut check = |name: &str, detail: String, value: f64, tol: f64| {
        let ok = value <= tol;
        failures += usize::from(!ok);
        println!(
            "{name}: {detail}, {value:.3e} (tol {tol:.0e}) ... {}",
            if ok { "ok" } else { "FAILED" }
        );
    };

    let grad = gradient_check(&img, &set, &mut rng)?;
    check(
        "gradient check",
        format!("{GRAD_TRIPLES} triples, max relative error"),
        grad,
        GRAD_TOL,
    );
    let sound = soundness_sweep(&img, &set, grid)?;
    check(
        "soundness sweep",
        format!("{grid}-point grid x {} pixels, max violation", set.bounds.len()),
        sound,
        SOUND_TOL,
    );
    let lip = lipschitz_sweep(&img, &set, &mut rng)?;
    check(
        "lipschitz sweep",
        format!("{LIP_TRIPLES} segments, {LIP_GRID}-point grid, max slope excess"),
        lip,
        LIP_TOL,
    );

    if failures == 0 {
        println!("all checks passed");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("{failures} checks failed");
        Ok(ExitCode::from(1))
    }
}

/// Max relative error between analytic preimage gradients and central
/// finite differences at random interior (pixel, kappa) draws.
fn gradient_check(
    img: &Image,
    set: &BoundSet,
    rng: &mut ChaCha8Rng,
) -> Result<f64, CliError> {
    let d = set.scenario.domain();
    if d.width() <= 4.0 * GRAD_STEP {
        return Err(usage("domain too narrow for the finite-difference gradient check"));
    }
    let (lo, hi) = (d.lo + 2.0 * GRAD_STEP, d.hi - 2.0 * GRAD_STEP);
    let mut worst = 0.0f64;
    let mut done = 0;
    let mut attempts = 0;
    while done < GRAD_TRIPLES {
        attempts += 1;
        if attempts > 100 * GRAD_TRIPLES {
            return Err(usage(
                "gradient check could not find enough differentiable sample points",
            ));
        }
        let p = PixelCoord::new(
            rng.gen_range(0..img.width()) as f64,
            rng.gen_range(0..img.height()) as f64,
        );
        let kappa = rng.gen_range(lo..=hi);
        // Draws that land too close to a discontinuity are redrawn.
        let Ok(a) = preimage_gradient(set.intr, &set.scenario, kappa, p) else { continue };
        let Ok(fwd) = preimage(set.intr, &set.scenario, kappa + GRAD_STEP, p) else { continue };
        let Ok(bwd) = preimage(set.intr, &set.scenario, kappa - GRAD_STEP, p) else { continue };
        let fd = (
            (fwd.u - bwd.u) / (2.0 * GRAD_STEP),
            (fwd.v - bwd.v) / (2.0 * GRAD_STEP),
        );
        let scale = a.0.abs().max(a.1.abs()).max(1.0);
        worst = worst.max(((a.0 - fd.0).abs().max((a.1 - fd.1).abs())) / scale);
        done += 1;
    }
    Ok(worst)
}

/// Max violation of the sound bounds against the true pixel curves on a
/// dense kappa grid, over every pixel.
fn soundness_sweep(img: &Image, set: &BoundSet, grid: usize) -> Result<f64, CliError> {
    let kappas = set.scenario.domain().grid(grid);
    let per_pixel: Vec<f64> = (0..set.bounds.len())
        .into_par_iter()
        .map(|idx| -> Result<f64, CliError> {
            let (i, j) = (idx / set.image_width, idx % set.image_width);
            let ctx = PixelCurveContext::new(img, set.intr, set.scenario, i, j)?;
            let bound = &set.bounds[idx];
            let mut worst = 0.0f64;
            for &k in &kappas {
                let g = ctx.pixel_value(k)?;
                worst = worst.max(bound.lower_star(k) - g).max(g - bound.upper_star(k));
            }
            Ok(worst)
        })
        .collect::<Result<_, _>>()?;
    Ok(per_pixel.into_iter().fold(0.0, f64::max))
}

/// Max excess of the observed finite-difference slope of a violation
/// function over its computed Lipschitz constant, across random (pixel,
/// cell, side) draws.
fn lipschitz_sweep(
    img: &Image,
    set: &BoundSet,
    rng: &mut ChaCha8Rng,
) -> Result<f64, CliError> {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..LIP_TRIPLES {
        let idx = rng.gen_range(0..set.bounds.len());
        let (i, j) = (idx / set.image_width, idx % set.image_width);
        let ctx = PixelCurveContext::new(img, set.intr, set.scenario, i, j)?;
        let bound = &set.bounds[idx];
        let cell = rng.gen_range(0..bound.lower.len());
        let lower_side = rng.gen_bool(0.5);
        let seg = if lower_side { bound.lower[cell] } else { bound.upper[cell] };

        let l = lipschitz_constant(&ctx, &seg, seg.subdomain)?.l;
        let violation = |k: f64| -> Result<f64, CliError> {
            let g = ctx.pixel_value(k)?;
            Ok(if lower_side { seg.eval(k) - g } else { g - seg.eval(k) })
        };
        let kappas = seg.subdomain.grid(LIP_GRID);
        let mut prev = (kappas[0], violation(kappas[0])?);
        let mut steepest = 0.0f64;
        for &k in &kappas[1..] {
            let v = violation(k)?;
            steepest = steepest.max((v - prev.1).abs() / (k - prev.0));
            prev = (k, v);
        }
        worst = worst.max(steepest - l);
    }
    Ok(worst)
}

// ==== report ====

fn cmd_report(args: ReportArgs) -> Result<ExitCode, CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let cfg = RunConfig::resolve(&args.scene, &args.fit, None, None, None, &file)?;
    let points = args.points.or(file.points).unwrap_or(201);
    if points == 0 {
        return Err(usage("--points must be at least 1"));
    }
    let (i, j) = args.pixel;

    let (img, s, intr, bound) = match &args.bounds {
        Some(path) => {
            let set = load_bounds(path)?;
            let img = load_image(&args.image, set.padding)?;
            if (img.height(), img.width()) != (set.image_height, set.image_width) {
                return Err(usage(format!(
                    "image is {}x{} but the bound set covers {}x{}",
                    img.height(),
                    img.width(),
                    set.image_height,
                    set.image_width
                )));
            }
            if i >= set.image_height || j >= set.image_width {
                return Err(usage(format!(
                    "pixel ({i}, {j}) outside a {}x{} image",
                    set.image_height, set.image_width
                )));
            }
            (img, set.scenario, set.intr, set.bound_at(i, j).clone())
        }
        None => {
            let (s, _) = cfg.require_scenario()?;
            let img = load_image(&args.image, cfg.padding)?;
            let intr = cfg.intrinsics_for(&img);
            let ctx = PixelCurveContext::new(&img, intr, s, i, j)?;
            let (bound, _) = bound_pixel(&ctx, &cfg.fit)?;
            (img, s, intr, bound)
        }
    };

    let ctx = PixelCurveContext::new(&img, intr, s, i, j)?;
    let kind = s.kind();
    let mut csv = String::new();
    writeln!(csv, "kappa_{},g,lower,upper,lower_sound,upper_sound", unit_name(kind)).unwrap();
    for k in s.domain().grid(points) {
        let g = ctx.pixel_value(k)?;
        writeln!(
            csv,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            to_cli(kind, k),
            g,
            bound.lower_unsound(k),
            bound.upper_unsound(k),
            bound.lower_star(k),
            bound.upper_star(k)
        )
        .unwrap();
    }
    match &args.out {
        Some(path) => {
            std::fs::write(path, csv).map_err(|e| io_err(path, e))?;
            println!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(ExitCode::SUCCESS)
}
