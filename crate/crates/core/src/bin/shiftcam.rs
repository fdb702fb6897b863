//! `shiftcam`: PSF computation, single-shot acquisition, reconstruction and
//! the camera comparison table.
//!
//! Any config key can be given as `--section.key value` (or
//! `--section.key=value`) anywhere on the command line. Layers apply in the
//! order defaults, `--config` file, `SHIFTCAM_*` environment, command line.
//!
//! Exit codes: 0 ok, 1 other failure, 2 config error, 3 numerical failure,
//! 4 acceptance check failed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use shiftcam::artifact::MeasurementArtifact;
use shiftcam::config::{GlobalConfig, KEYS};
use shiftcam::harness::{
    caption_path, format_table, mse, ordering_violations, records_csv, run_experiment, simulate_classic, write_gallery,
    ImageSource,
};
use shiftcam::sensing::{conversion_operator, open_shot_total, PRNG_NAME};
use shiftcam::{
    acquire_raw, compute_psf, convert_measurements, i_total_in_band, reconstruct, save_image, Architecture, Error,
    Grid, ImagePlane, ModulatorPattern, Psf,
};

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_CHECK: u8 = 4;

/// Short flags for frequently used keys.
const ALIASES: &[(&str, &str)] = &[
    ("radius", "optics.kernel_radius"),
    ("distance", "optics.propagation_distance"),
    ("wavelength", "optics.wavelength"),
    ("pitch", "optics.pixel_pitch"),
    ("images", "experiment.images"),
    ("trials", "experiment.trials"),
    ("cameras", "experiment.cameras"),
    ("budget", "experiment.budget"),
    ("dims", "experiment.target_dims"),
    ("seed-base", "experiment.seed_base"),
    ("out-dir", "io.out_dir"),
];

#[derive(Parser, Debug)]
#[command(
    name = "shiftcam",
    version,
    about = "Parallel compressive imaging simulator",
    after_help = "Config keys may be passed as --section.key VALUE; run `shiftcam keys` for the list.\n\
                  Aliases: --radius --distance --wavelength --pitch --images --trials --cameras --budget --dims --seed-base --out-dir"
)]
struct Cli {
    /// key=value config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// worker threads (default: available cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// more logging; repeat for debug
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute the diffraction kernel: CSV, heat map and convergence report.
    Psf,
    /// Simulate one raw acquisition and write a measurement file and the pattern.
    Acquire {
        /// image file or phantom:<flat|quadrants|disk>
        image: String,
        /// full, A or B
        #[arg(long, default_value = "B")]
        arch: Architecture,
        /// pattern seed (default: experiment.seed_base)
        #[arg(long)]
        seed: Option<u64>,
        /// measurement file (default: <out_dir>/<image>_<arch>_s<seed>.meas)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reconstruct an image from a measurement file.
    Reconstruct {
        measurements: PathBuf,
        /// output image, .png or .pgm (default: <out_dir>/<stem>.png)
        #[arg(long)]
        out: Option<PathBuf>,
        /// write the iteration trace CSV (default path: <out_dir>/<stem>_trace.csv)
        #[arg(long, num_args = 0..=1, default_missing_value = "-")]
        trace: Option<PathBuf>,
    },
    /// Run the camera comparison and write CSV, table and gallery.
    Table {
        /// exit 4 unless A and B beat the half-resolution classic camera on every image
        #[arg(long)]
        check: bool,
    },
    /// List config keys with their defaults.
    Keys,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => EXIT_CONFIG,
            Error::NonConverged { .. } | Error::Numerical(_) => EXIT_NUMERICAL,
            _ => EXIT_OTHER,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn config_failure(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: message.into(),
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Split `--section.key value` and alias flags out of argv.
fn extract_overrides(args: Vec<String>) -> CliResult<(Vec<String>, Vec<(String, String)>)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    if let Some(prog) = it.next() {
        rest.push(prog);
    }
    while let Some(arg) = it.next() {
        if arg == "--" {
            rest.push(arg);
            rest.extend(it.by_ref());
            break;
        }
        let Some(flag) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (name, inline) = match flag.split_once('=') {
            Some((n, v)) => (n, Some(v.to_string())),
            None => (flag, None),
        };
        let key = if let Some((_, k)) = ALIASES.iter().find(|(a, _)| *a == name) {
            k.to_string()
        } else if name.contains('.') || KEYS.iter().any(|(k, _)| *k == name) {
            name.to_string()
        } else {
            rest.push(arg);
            continue;
        };
        let value = match inline {
            Some(v) => v,
            None => it.next().ok_or_else(|| config_failure(format!("--{name} needs a value")))?,
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}

fn build_config(cli: &Cli, overrides: &[(String, String)]) -> shiftcam::Result<GlobalConfig> {
    let mut cfg = GlobalConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    cfg.apply_env(std::env::vars())?;
    for (k, v) in overrides {
        cfg.set(k, v, &format!("command line --{k}"))?;
    }
    if cli.verbose > 0 {
        cfg.verbosity = cfg.verbosity.max(cli.verbose);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_logging(verbosity: u8) {
    let level = match verbosity {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Failure {
        code: EXIT_OTHER,
        message: format!("{}: {e}", dir.display()),
    })
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(path, contents).map_err(|e| Failure {
        code: EXIT_OTHER,
        message: format!("{}: {e}", path.display()),
    })
}

fn psf_for(cfg: &GlobalConfig) -> shiftcam::Result<Option<Psf>> {
    if cfg.experiment.diffraction {
        Ok(Some(compute_psf(&cfg.optics)?.psf))
    } else {
        Ok(None)
    }
}

fn psf_hash(psf: Option<&Psf>) -> String {
    psf.map_or_else(|| "none".to_string(), Psf::hash)
}

fn cmd_psf(cfg: &GlobalConfig) -> CliResult<()> {
    let report = compute_psf(&cfg.optics)?;
    let kernel = report.psf.kernel();
    let dir = &cfg.out_dir;
    create_dir(dir)?;

    let mut csv = String::new();
    for i in 0..kernel.rows() {
        let row: Vec<String> = (0..kernel.cols()).map(|j| format!("{:.12e}", kernel[(i, j)])).collect();
        let _ = writeln!(csv, "{}", row.join(","));
    }
    write_file(&dir.join("psf.csv"), csv)?;

    // Magnified heat map, scaled to the peak.
    let scale = 16;
    let peak = kernel.max();
    let heat = Grid::from_fn(kernel.rows() * scale, kernel.cols() * scale, |i, j| {
        kernel[(i / scale, j / scale)] / peak
    });
    save_image(&heat, dir.join("psf.png"))?;

    let sum = kernel.sum();
    let r = report.psf.radius();
    let mut txt = String::new();
    let _ = writeln!(txt, "size={}x{}", kernel.rows(), kernel.cols());
    let _ = writeln!(txt, "sum={sum:.12}");
    let _ = writeln!(txt, "center={:.12}", kernel[(r, r)]);
    let _ = writeln!(txt, "captured_energy={:.12}", report.captured_energy);
    let _ = writeln!(txt, "fresnel_number={:.6}", cfg.optics.fresnel_number());
    let _ = writeln!(txt, "oversampling={}", report.oversampling);
    let _ = writeln!(txt, "max_change={:.3e}", report.max_change);
    let _ = writeln!(txt, "converged=true");
    let _ = writeln!(txt, "hash={}", report.psf.hash());
    for key in KEYS.iter().map(|(k, _)| *k).filter(|k| k.starts_with("optics.")) {
        let _ = writeln!(txt, "{key}={}", cfg.get(key).unwrap_or_default());
    }
    write_file(&dir.join("psf_report.txt"), &txt)?;
    println!(
        "psf {}x{} sum {sum:.12} center {:.6} oversampling {} -> {}",
        kernel.rows(),
        kernel.cols(),
        kernel[(r, r)],
        report.oversampling,
        dir.display()
    );
    Ok(())
}

/// Load an image source at the configured target size.
fn load_target(src: &ImageSource, dims: (usize, usize)) -> shiftcam::Result<ImagePlane> {
    let img = src.load()?;
    if img.dims() == dims {
        Ok(img)
    } else {
        simulate_classic(&img, dims)
    }
}

fn cmd_acquire(
    cfg: &GlobalConfig,
    image: &str,
    arch: Architecture,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> CliResult<()> {
    let src: ImageSource = image.parse()?;
    let seed = seed.unwrap_or(cfg.experiment.seed_base);
    let (m, n) = cfg.experiment.target_dims;
    let img = load_target(&src, (m, n))?;
    let psf = psf_for(cfg)?;
    let pattern = ModulatorPattern::generate(m, n, seed)?;
    let mut raw = acquire_raw(&pattern, psf.as_ref(), &img, arch)?;
    if arch == Architecture::A {
        raw.i_total = Some(open_shot_total(&img, psf.as_ref())?);
    }
    let mut extra = BTreeMap::new();
    extra.insert("image".to_string(), src.to_string());
    let artifact = MeasurementArtifact {
        measurements: raw,
        seed,
        prng: PRNG_NAME.to_string(),
        psf_hash: psf_hash(psf.as_ref()),
        extra,
    };
    let path = out.unwrap_or_else(|| {
        cfg.out_dir
            .join(format!("{}_{}_s{seed}.meas", src.name(), arch.name()))
    });
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    artifact.save(&path)?;
    let pattern_path = path.with_file_name(format!(
        "{}_pattern.pgm",
        path.file_stem().map_or_else(|| "measurements".into(), |s| s.to_string_lossy())
    ));
    pattern.save(&pattern_path)?;
    println!(
        "{} measurements, sum {:.6e} -> {}",
        artifact.measurements.len(),
        artifact.measurements.sum(),
        path.display()
    );
    Ok(())
}

fn cmd_reconstruct(cfg: &GlobalConfig, input: &Path, out: Option<PathBuf>, trace: Option<PathBuf>) -> CliResult<()> {
    let artifact = MeasurementArtifact::load(input)?;
    if artifact.prng != PRNG_NAME {
        return Err(config_failure(format!(
            "{}: pattern generator '{}' is not supported (expected {PRNG_NAME})",
            input.display(),
            artifact.prng
        )));
    }
    let psf = psf_for(cfg)?;
    let expected = psf_hash(psf.as_ref());
    if artifact.psf_hash != expected {
        return Err(config_failure(format!(
            "provenance mismatch: {} was acquired with PSF {}, the current config gives {expected}",
            input.display(),
            artifact.psf_hash
        )));
    }
    let raw = &artifact.measurements;
    let (m, n) = raw.image_dims;
    let pattern = ModulatorPattern::generate(m, n, artifact.seed)?;
    let i_total = match raw.architecture {
        Architecture::A => raw.i_total.ok_or_else(|| {
            Failure::from(Error::Artifact(format!(
                "{}: architecture A needs the recorded open-shot i_total",
                input.display()
            )))
        })?,
        _ => i_total_in_band(raw, &pattern)?,
    };
    let converted = convert_measurements(raw, i_total)?;
    let op = conversion_operator(&pattern, psf.as_ref(), raw.architecture)?;
    let result = reconstruct(&op, &converted, &cfg.solver)?;

    let stem = input
        .file_stem()
        .map_or_else(|| "reconstruction".to_string(), |s| s.to_string_lossy().into_owned());
    let out = out.unwrap_or_else(|| cfg.out_dir.join(format!("{stem}.png")));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_image(&result.image, &out)?;

    let mut metrics = String::new();
    let _ = writeln!(metrics, "measurements={}", input.display());
    let _ = writeln!(metrics, "architecture={}", raw.architecture.name());
    let _ = writeln!(metrics, "seed={}", artifact.seed);
    let _ = writeln!(metrics, "psf_hash={}", artifact.psf_hash);
    let _ = writeln!(metrics, "i_total={i_total:?}");
    let _ = writeln!(metrics, "iterations={}", result.iterations);
    let _ = writeln!(metrics, "inner_iterations={}", result.inner_iterations);
    let _ = writeln!(metrics, "residual={:.6e}", result.final_residual);
    if let Some(obj) = result.objective_trace.last() {
        let _ = writeln!(metrics, "objective={obj:.9e}");
    }
    let mut rel_err = None;
    if let Some(src) = artifact.extra.get("image") {
        match src.parse::<ImageSource>().and_then(|s| load_target(&s, (m, n))) {
            Ok(truth) => {
                let e = mse(&result.image, &truth)?;
                let norm: f64 = truth.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
                let rel = (e * truth.len() as f64).sqrt() / norm;
                let _ = writeln!(metrics, "mse={e:.9e}");
                let _ = writeln!(metrics, "relative_error={rel:.9e}");
                rel_err = Some(rel);
            }
            Err(e) => log::warn!("cannot load {src} for metrics: {e}"),
        }
    }
    for key in KEYS.iter().map(|(k, _)| *k).filter(|k| k.starts_with("solver.")) {
        let _ = writeln!(metrics, "{key}={}", cfg.get(key).unwrap_or_default());
    }
    write_file(&caption_path(&out), &metrics)?;

    if let Some(t) = trace {
        let path = if t.as_os_str() == "-" {
            cfg.out_dir.join(format!("{stem}_trace.csv"))
        } else {
            t
        };
        let mut csv = String::from("iteration,objective,residual\n");
        for e in &result.trace {
            let _ = writeln!(csv, "{},{:.9e},{:.9e}", e.iteration, e.objective, e.residual);
        }
        write_file(&path, csv)?;
    }
    print!(
        "{} iterations, residual {:.3e}",
        result.iterations, result.final_residual
    );
    if let Some(r) = rel_err {
        print!(", relative error {r:.4}");
    }
    println!(" -> {}", out.display());
    Ok(())
}

fn cmd_table(cfg: &GlobalConfig, check: bool) -> CliResult<()> {
    let exp = cfg.experiment();
    exp.validate().map_err(|e| config_failure(e.to_string()))?;
    if exp.images.is_empty() {
        return Err(config_failure("no images: set experiment.images (or --images)"));
    }
    let out = run_experiment(&exp)?;
    let dir = &cfg.out_dir;
    create_dir(dir)?;
    write_file(&dir.join("results.csv"), records_csv(&out.records))?;
    write_file(&dir.join("config.txt"), cfg.to_text())?;
    let table = format_table(&out.rows);
    write_file(&dir.join("table.txt"), &table)?;
    if out.gallery.iter().any(|(_, tiles)| !tiles.is_empty()) {
        write_gallery(&out, &dir.join("gallery.png"))?;
    }
    print!("{table}");

    let failed: Vec<_> = out.records.iter().filter(|r| r.error.is_some()).collect();
    if !failed.is_empty() {
        for r in &failed {
            eprintln!("{} {} trial {}: {}", r.image, r.camera, r.trial, r.error.as_deref().unwrap_or(""));
        }
        return Err(Failure {
            code: EXIT_NUMERICAL,
            message: format!("{} cells failed", failed.len()),
        });
    }
    if check {
        let bad = ordering_violations(&out.rows);
        if !bad.is_empty() {
            return Err(Failure {
                code: EXIT_CHECK,
                message: format!("ordering check failed:\n  {}", bad.join("\n  ")),
            });
        }
        println!("ordering check passed");
    }
    Ok(())
}

fn cmd_keys() {
    let cfg = GlobalConfig::default();
    for (k, doc) in KEYS {
        println!("{k}={}  # {doc}", cfg.get(k).unwrap_or_default());
    }
}

fn run() -> CliResult<()> {
    let (args, overrides) = extract_overrides(std::env::args().collect())?;
    let cli = Cli::try_parse_from(args).map_err(|e| {
        let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
        let _ = e.print();
        Failure {
            code,
            message: String::new(),
        }
    })?;
    // Parse once quietly for the verbosity, then again with logging on so
    // every layer is reported.
    let verbosity = build_config(&cli, &overrides).map_err(Failure::from)?.verbosity;
    init_logging(verbosity);
    let cfg = build_config(&cli, &overrides).map_err(Failure::from)?;

    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(config_failure("--jobs must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure {
                code: EXIT_OTHER,
                message: e.to_string(),
            })?;
    }
    match cli.command {
        Command::Psf => cmd_psf(&cfg),
        Command::Acquire { image, arch, seed, out } => cmd_acquire(&cfg, &image, arch, seed, out),
        Command::Reconstruct {
            measurements,
            out,
            trace,
        } => cmd_reconstruct(&cfg, &measurements, out, trace),
        Command::Table { check } => cmd_table(&cfg, check),
        Command::Keys => {
            cmd_keys();
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("shiftcam: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}
