//! Command-line front end. Each command resolves a [`Settings`] record
//! (defaults, then `--config`, then flags), reads all inputs, and only then
//! writes its outputs.

mod plot;
mod settings;
mod sweep;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use plot::{line_plot_svg, Series};
pub use settings::Settings;
pub use sweep::{
    median, median_curve, noise_seed, psnr_plot, report, run_leg, run_sweep, ssim_plot, LegOutcome,
    SweepConfig, DEFAULT_PATTERNS_PER_SECOND, DEFAULT_RATIOS,
};

use crate::bpfa::{inpaint, write_diagnostics_csv, write_dictionary};
use crate::error::{Error, Result};
use crate::maps::{load_map, save_labels, save_map, MapImage, MapKind, MetricsRecord, METRICS_CSV_HEADER};
use crate::metrics::{psnr, ssim, SsimParams};
use crate::phantom::generate_phantom;
use crate::sampler::{acquisition_time_estimate, apply_acquisition, generate_uniform_mask, SamplingSet};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ebsd-cs", version, about = "Compressive EBSD simulation and BPFA map inpainting")]
struct Cli {
    /// Seed for every random draw (mask, noise, phantom, sampler).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory that receives all outputs.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Flat JSON object of settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a Voronoi phantom: band contrast, IPF and grain labels.
    Phantom(PhantomArgs),
    /// Draw a uniform subsampling set and write it as a mask file.
    Mask(MaskArgs),
    /// Apply a mask (and optional noise) to a map.
    Subsample(SubsampleArgs),
    /// Subsample a map and reconstruct it with BPFA.
    Inpaint(InpaintArgs),
    /// SSIM and PSNR of a reconstruction against a reference.
    Metrics(MetricsArgs),
    /// Full ratio × seed × kind evaluation on a phantom.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct PhantomArgs {
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    grains: Option<usize>,
    #[arg(long)]
    boundary_width: Option<f64>,
}

#[derive(Debug, Args)]
struct MaskArgs {
    #[arg(long)]
    ratio: Option<f64>,
    /// Take the grid size from this map instead of --width/--height.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
}

#[derive(Debug, Args)]
struct AcquisitionArgs {
    /// Fully sampled input map (PGM or PPM).
    #[arg(long)]
    input: PathBuf,
    /// Existing mask file; otherwise one is drawn with --ratio.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
}

#[derive(Debug, Args)]
struct SubsampleArgs {
    #[command(flatten)]
    acq: AcquisitionArgs,
}

#[derive(Debug, Args)]
struct BpfaArgs {
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    keep_measured: Option<bool>,
    /// Dictionary size K.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Debug, Args)]
struct InpaintArgs {
    #[command(flatten)]
    acq: AcquisitionArgs,
    #[command(flatten)]
    bpfa: BpfaArgs,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    reconstruction: PathBuf,
    /// Sampling ratio recorded in the output row.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    patterns_per_second: Option<f64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Comma-separated sampling ratios.
    #[arg(long, value_delimiter = ',')]
    ratios: Option<Vec<f64>>,
    /// Comma-separated leg seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated map kinds (band_contrast, ipf).
    #[arg(long, value_delimiter = ',')]
    kinds: Option<Vec<MapKind>>,
    #[arg(long)]
    patterns_per_second: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[command(flatten)]
    phantom: PhantomArgs,
    #[command(flatten)]
    bpfa: BpfaArgs,
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

impl PhantomArgs {
    fn apply(self, s: &mut Settings) {
        set(&mut s.width, self.width);
        set(&mut s.height, self.height);
        set(&mut s.n_grains, self.grains);
        set(&mut s.boundary_width_px, self.boundary_width);
    }
}

impl BpfaArgs {
    fn apply(self, s: &mut Settings) {
        set(&mut s.patch_size, self.patch_size);
        set(&mut s.stride, self.stride);
        if self.keep_measured.is_some() {
            s.keep_measured = self.keep_measured;
        }
        set(&mut s.k, self.k);
        set(&mut s.burn_in, self.burn_in);
        set(&mut s.samples, self.samples);
    }
}

fn check_ratio(ratio: f64) -> std::result::Result<(), Failure> {
    if ratio > 0.0 && ratio <= 1.0 {
        Ok(())
    } else {
        Err(Failure::Usage(format!("ratio {ratio} outside (0, 1]")))
    }
}

fn check_noise(sigma: f64) -> std::result::Result<(), Failure> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("noise sigma {sigma} must be finite and non-negative")))
    }
}

fn map_extension(map: &MapImage) -> &'static str {
    if map.channels() == 3 {
        "ppm"
    } else {
        "pgm"
    }
}

struct Outputs<'a> {
    dir: &'a Path,
}

impl Outputs<'_> {
    fn prepare(&self) -> Result<()> {
        std::fs::create_dir_all(self.dir).map_err(|e| Error::io_at(self.dir, e))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn text(&self, name: &str, text: &str) -> Result<()> {
        let path = self.path(name);
        std::fs::write(&path, text).map_err(|e| Error::io_at(path, e))
    }
}

/// Loads the input map and either the given mask or a fresh draw.
fn acquire(acq: &AcquisitionArgs, s: &Settings) -> std::result::Result<(MapImage, SamplingSet, bool), Failure> {
    check_ratio(s.ratio)?;
    check_noise(s.noise_sigma)?;
    let map = load_map(&acq.input)?;
    let (mask, drawn) = match &acq.mask {
        Some(path) => (SamplingSet::load(path)?, false),
        None => (generate_uniform_mask(map.n_positions(), s.ratio, s.seed).map_err(usage)?, true),
    };
    if mask.n_positions() != map.n_positions() {
        return Err(Failure::Runtime(Error::Domain(format!(
            "mask covers {} positions but the map has {}",
            mask.n_positions(),
            map.n_positions()
        ))));
    }
    Ok((map, mask, drawn))
}

fn cmd_phantom(args: PhantomArgs, mut s: Settings, out: Outputs) -> std::result::Result<(), Failure> {
    args.apply(&mut s);
    let spec = s.phantom_spec();
    spec.validate().map_err(usage)?;
    let ph = generate_phantom(&spec)?;
    out.prepare()?;
    save_map(&ph.band_contrast, out.path("band_contrast.pgm"))?;
    save_map(&ph.ipf, out.path("ipf.ppm"))?;
    save_labels(&ph.labels, spec.width, spec.height, out.path("labels.pgm"))?;
    Ok(())
}

fn cmd_mask(args: MaskArgs, mut s: Settings, out: Outputs) -> std::result::Result<(), Failure> {
    set(&mut s.ratio, args.ratio);
    set(&mut s.width, args.width);
    set(&mut s.height, args.height);
    check_ratio(s.ratio)?;
    let n = match &args.input {
        Some(path) => load_map(path)?.n_positions(),
        None => s.width * s.height,
    };
    let mask = generate_uniform_mask(n, s.ratio, s.seed).map_err(usage)?;
    out.prepare()?;
    mask.save(out.path("mask.txt"))?;
    println!("positions={} measured={} ratio={:.6}", n, mask.len(), mask.ratio());
    Ok(())
}

fn cmd_subsample(args: SubsampleArgs, mut s: Settings, out: Outputs) -> std::result::Result<(), Failure> {
    set(&mut s.ratio, args.acq.ratio);
    set(&mut s.noise_sigma, args.acq.noise_sigma);
    let (map, mask, drawn) = acquire(&args.acq, &s)?;
    let masked = apply_acquisition(&map, &mask, s.noise_sigma, noise_seed(s.seed))?;
    out.prepare()?;
    save_map(masked.map(), out.path(&format!("subsampled.{}", map_extension(&map))))?;
    if drawn {
        mask.save(out.path("mask.txt"))?;
    }
    Ok(())
}

fn cmd_inpaint(args: InpaintArgs, mut s: Settings, out: Outputs) -> std::result::Result<(), Failure> {
    set(&mut s.ratio, args.acq.ratio);
    set(&mut s.noise_sigma, args.acq.noise_sigma);
    args.bpfa.apply(&mut s);
    let config = s.inpaint_config();
    config.hp.validate().map_err(usage)?;
    let (map, mask, drawn) = acquire(&args.acq, &s)?;
    let masked = apply_acquisition(&map, &mask, s.noise_sigma, noise_seed(s.seed))?;
    let result = inpaint(&masked, &config)?;
    out.prepare()?;
    save_map(&result.image, out.path(&format!("reconstruction.{}", map_extension(&map))))?;
    if drawn {
        mask.save(out.path("mask.txt"))?;
    }
    write_diagnostics_csv(&result.diagnostics, out.path("diagnostics.csv"))?;
    write_dictionary(&result.state, out.path("dictionary.bin"))?;
    Ok(())
}

fn cmd_metrics(args: MetricsArgs, mut s: Settings, out: Outputs) -> std::result::Result<(), Failure> {
    set(&mut s.ratio, args.ratio);
    set(&mut s.patterns_per_second, args.patterns_per_second);
    check_ratio(s.ratio)?;
    let reference = load_map(&args.reference)?;
    let recon = load_map(&args.reconstruction)?;
    let record = MetricsRecord {
        sampling_ratio: s.ratio,
        map_kind: reference.kind(),
        seed: s.seed,
        ssim: ssim(&recon, &reference, &SsimParams::default())?,
        psnr_db: psnr(&recon, &reference)?,
        wall_time_s: 0.0,
        estimated_acquisition_s: acquisition_time_estimate(
            reference.n_positions(),
            s.ratio,
            s.patterns_per_second,
        )
        .map_err(usage)?,
    };
    let text = format!("{METRICS_CSV_HEADER}\n{}\n", record.to_csv_row());
    out.prepare()?;
    out.text("metrics.csv", &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_sweep(args: SweepArgs, mut s: Settings, out: Outputs) -> std::result::Result<(), Failure> {
    set(&mut s.ratios, args.ratios);
    set(&mut s.seeds, args.seeds);
    set(&mut s.kinds, args.kinds);
    set(&mut s.patterns_per_second, args.patterns_per_second);
    set(&mut s.noise_sigma, args.noise_sigma);
    args.phantom.apply(&mut s);
    args.bpfa.apply(&mut s);
    let config = s.sweep_config();
    config.validate().map_err(usage)?;
    run_sweep(&config, out.dir, |m| {
        eprintln!(
            "{} ratio={} seed={} ssim={:.4} psnr_db={:.2} wall_time_s={:.1}",
            m.map_kind, m.sampling_ratio, m.seed, m.ssim, m.psnr_db, m.wall_time_s
        )
    })?;
    Ok(())
}

fn dispatch(cli: Cli) -> std::result::Result<(), Failure> {
    let mut settings = match &cli.config {
        Some(path) => match Settings::load(path) {
            Ok(s) => s,
            Err(e @ Error::Format(_)) => return Err(usage(e)),
            Err(e) => return Err(e.into()),
        },
        None => Settings::default(),
    };
    set(&mut settings.seed, cli.seed);
    let out = Outputs { dir: &cli.out_dir };
    match cli.command {
        Command::Phantom(a) => cmd_phantom(a, settings, out),
        Command::Mask(a) => cmd_mask(a, settings, out),
        Command::Subsample(a) => cmd_subsample(a, settings, out),
        Command::Inpaint(a) => cmd_inpaint(a, settings, out),
        Command::Metrics(a) => cmd_metrics(a, settings, out),
        Command::Sweep(a) => cmd_sweep(a, settings, out),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code. Diagnostics go to stderr as one line.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            EXIT_RUNTIME
        }
    }
}
