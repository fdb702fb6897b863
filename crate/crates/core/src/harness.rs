//! Camera comparison experiment: classic cameras at full and half
//! resolution, a sequential compressive camera with i.i.d. ±1 rows, and
//! the one-shot parallel architectures A and B, all scored by MSE
//! normalized to the full-resolution classic camera.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, ImagePlane};
use crate::image_io::{block_average, load_image, make_phantom, quantize, upsample_nearest, write_pgm, PhantomKind};
use crate::linop::SignMatrix;
use crate::optics::{compute_psf, OpticsConfig, Psf};
use crate::sensing::pattern::BitStream;
use crate::sensing::{
    acquire_raw, conversion_operator, convert_measurements, i_total_in_band, open_shot_total, Architecture,
    ModulatorPattern,
};
use crate::solver::{solve_tv, reconstruct, SolverConfig};

/// Side of the synthetic originals.
pub const ORIGINAL_SIDE: usize = 512;

/// Below this classic-camera error an image counts as exactly representable
/// at the reference resolution; normalized errors are then reported as 0
/// (reproduced) or infinity.
pub const FLOOR_GUARD: f64 = 1e-12;

/// Absolute MSE under which a camera reproduces a representable image.
pub const EXACT_MSE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Camera {
    ClassicFull,
    ClassicHalf,
    SequentialCi,
    ParallelA,
    ParallelB,
}

impl Camera {
    pub const ALL: [Camera; 5] = [
        Camera::ClassicFull,
        Camera::ClassicHalf,
        Camera::SequentialCi,
        Camera::ParallelA,
        Camera::ParallelB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Camera::ClassicFull => "classic_full",
            Camera::ClassicHalf => "classic_half",
            Camera::SequentialCi => "sequential_ci",
            Camera::ParallelA => "parallel_A",
            Camera::ParallelB => "parallel_B",
        }
    }

    /// Exposures needed for one image.
    pub fn shots(self, budget: usize) -> usize {
        match self {
            Camera::ClassicFull | Camera::ClassicHalf | Camera::ParallelB => 1,
            Camera::ParallelA => 2,
            Camera::SequentialCi => budget,
        }
    }

    fn is_random(self) -> bool {
        !matches!(self, Camera::ClassicFull | Camera::ClassicHalf)
    }
}

impl fmt::Display for Camera {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Camera {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Camera::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown camera '{s}'")))
    }
}

/// Resolution at which reconstruction errors are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MseResolution {
    /// Against the classic full-resolution image; normalized error
    /// `1 + MSE_ref(x) / floor`, where `floor` is the classic camera's own
    /// error against the original.
    Reference,
    /// Against the original, with reconstructions upsampled by pixel
    /// replication.
    Original,
}

impl MseResolution {
    pub fn name(self) -> &'static str {
        match self {
            MseResolution::Reference => "reference",
            MseResolution::Original => "original",
        }
    }
}

impl FromStr for MseResolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reference" => Ok(MseResolution::Reference),
            "original" => Ok(MseResolution::Original),
            _ => Err(Error::InvalidArgument(format!("unknown MSE resolution '{s}'"))),
        }
    }
}

/// A test image: a file, or a synthetic phantom written as `phantom:<kind>`.
#[derive(Debug, Clone, PartialEq)]
pub enum ImageSource {
    File(PathBuf),
    Phantom(PhantomKind),
}

impl ImageSource {
    pub fn name(&self) -> String {
        match self {
            ImageSource::File(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
            ImageSource::Phantom(k) => k.name().to_string(),
        }
    }

    /// Original image. Phantoms are drawn at 516 and cropped to 512 so
    /// their edges do not fall on block boundaries.
    pub fn load(&self) -> Result<ImagePlane> {
        match self {
            ImageSource::File(p) => load_image(p),
            ImageSource::Phantom(k) => {
                let big = make_phantom(*k, ORIGINAL_SIDE + 4, ORIGINAL_SIDE + 4)?;
                Ok(big.window(0, 0, ORIGINAL_SIDE, ORIGINAL_SIDE))
            }
        }
    }
}

impl fmt::Display for ImageSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImageSource::File(p) => write!(f, "{}", p.display()),
            ImageSource::Phantom(k) => write!(f, "phantom:{}", k.name()),
        }
    }
}

impl FromStr for ImageSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("phantom:") {
            Some(kind) => Ok(ImageSource::Phantom(kind.parse()?)),
            None if s.is_empty() => Err(Error::InvalidArgument("empty image path".into())),
            None => Ok(ImageSource::File(PathBuf::from(s))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub images: Vec<ImageSource>,
    pub target_dims: (usize, usize),
    pub trials: usize,
    pub seed_base: u64,
    pub cameras: Vec<Camera>,
    pub optics: OpticsConfig,
    pub solver: SolverConfig,
    /// Measurements per compressive camera.
    pub budget: usize,
    /// Blur the parallel cameras with the diffraction PSF.
    pub diffraction: bool,
    pub mse_resolution: MseResolution,
    /// Fill the `wall_ms` column. Off by default so that repeated runs
    /// produce identical files.
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            images: Vec::new(),
            target_dims: (128, 128),
            trials: 25,
            seed_base: 0,
            cameras: Camera::ALL.to_vec(),
            optics: OpticsConfig::default(),
            solver: SolverConfig::default(),
            budget: 128 * 128 / 4,
            diffraction: true,
            mse_resolution: MseResolution::Reference,
            record_timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let (m, n) = self.target_dims;
        if self.trials == 0 {
            return Err(Error::InvalidArgument("experiment.trials must be >= 1".into()));
        }
        if m < 4 || n < 4 || m % 4 != 0 || n % 4 != 0 {
            return Err(Error::Dimension(format!(
                "target dimensions must be multiples of 4, got {m}x{n}"
            )));
        }
        let parallel = self.cameras.iter().any(|c| matches!(c, Camera::ParallelA | Camera::ParallelB));
        if parallel && self.budget != (m / 2) * (n / 2) {
            return Err(Error::InvalidArgument(format!(
                "budget {} must equal (m/2)(n/2) = {} for the parallel cameras",
                self.budget,
                (m / 2) * (n / 2)
            )));
        }
        if self.budget == 0 || self.budget > m * n {
            return Err(Error::InvalidArgument(format!("budget {} outside 1..={}", self.budget, m * n)));
        }
        if self.cameras.is_empty() {
            return Err(Error::InvalidArgument("no cameras selected".into()));
        }
        self.solver.validate()?;
        self.optics.validate()
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed_base.wrapping_add(trial as u64)
    }
}

/// One scored reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub image: String,
    pub camera: Camera,
    pub trial: usize,
    pub seed: u64,
    pub normalized_mse: f64,
    pub mse: f64,
    /// `|Ax - y| / |y|` of the solver; 0 for classic cameras.
    pub residual: f64,
    /// `(I_total estimate - Σ img) / Σ img` for the parallel cameras.
    pub i_total_rel_err: f64,
    pub wall_ms: u64,
    pub error: Option<String>,
}

/// Mean and sample standard deviation of a camera's normalized errors on
/// one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub image: String,
    pub camera: Camera,
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<TrialRecord>,
    pub rows: Vec<ResultRow>,
    /// Trial-0 reconstructions per image at the target resolution, in
    /// camera order; half-resolution images are upsampled.
    pub gallery: Vec<(String, Vec<(Camera, ImagePlane)>)>,
}

/// Mean squared difference.
pub fn mse(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::Dimension(format!("MSE of {:?} and {:?}", a.dims(), b.dims())));
    }
    if a.is_empty() {
        return Err(Error::Dimension("MSE of empty images".into()));
    }
    let s: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(s / a.len() as f64)
}

/// Conventional camera: average over the pixel regions of the output.
pub fn simulate_classic(img: &ImagePlane, out_dims: (usize, usize)) -> Result<ImagePlane> {
    let (m, n) = img.dims();
    let (p, q) = out_dims;
    if p == 0 || q == 0 || m % p != 0 || n % q != 0 || m / p != n / q {
        return Err(Error::Dimension(format!(
            "{m}x{n} does not reduce to {p}x{q} by a square block"
        )));
    }
    block_average(img, m / p)
}

/// Measurements of a sequential compressive camera with its matrix.
#[derive(Debug, Clone)]
pub struct SequentialShot {
    pub values: Vec<f64>,
    pub matrix: SignMatrix,
}

/// `budget` independent rows of i.i.d. ±1 entries over the image pixels,
/// drawn from the seeded bit stream row by row (bit 1 → +1).
pub fn sequential_matrix(dims: (usize, usize), budget: usize, seed: u64) -> Result<SignMatrix> {
    let npix = dims.0 * dims.1;
    if budget == 0 || budget > npix {
        return Err(Error::InvalidArgument(format!("budget {budget} outside 1..={npix}")));
    }
    let mut bits = BitStream::new(seed);
    Ok(SignMatrix::from_fn(budget, dims, |_, _| bits.next_bit()))
}

pub fn simulate_sequential_ci(img: &ImagePlane, budget: usize, seed: u64) -> Result<SequentialShot> {
    use crate::linop::LinearOperator;
    let matrix = sequential_matrix(img.dims(), budget, seed)?;
    let values = matrix.apply(img.as_slice());
    Ok(SequentialShot { values, matrix })
}

/// Everything a cell needs about one image.
struct Prepared {
    name: String,
    original: ImagePlane,
    reference: ImagePlane,
    factor: usize,
    /// Classic full-resolution camera's MSE against the original.
    floor: f64,
}

fn prepare(src: &ImageSource, dims: (usize, usize)) -> Result<Prepared> {
    let original = src.load()?;
    let reference = simulate_classic(&original, dims)?;
    let factor = original.rows() / dims.0;
    let floor = mse(&upsample_nearest(&reference, factor), &original)?;
    Ok(Prepared {
        name: src.name(),
        original,
        reference,
        factor,
        floor,
    })
}

struct Scored {
    normalized: f64,
    mse: f64,
}

fn score(prep: &Prepared, recon: &ImagePlane, how: MseResolution) -> Result<Scored> {
    let (err, normalized) = match how {
        MseResolution::Reference => {
            let e = mse(recon, &prep.reference)?;
            (e, if prep.floor > FLOOR_GUARD { 1.0 + e / prep.floor } else { f64::NAN })
        }
        MseResolution::Original => {
            let e = mse(&upsample_nearest(recon, prep.factor), &prep.original)?;
            (e, if prep.floor > FLOOR_GUARD { e / prep.floor } else { f64::NAN })
        }
    };
    let normalized = if normalized.is_nan() {
        // Exactly representable image: reproduced or not.
        let e = mse(recon, &prep.reference)?;
        if e <= EXACT_MSE {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        normalized
    };
    Ok(Scored { normalized, mse: err })
}

struct CellOutput {
    image: ImagePlane,
    residual: f64,
    i_total_rel_err: f64,
}

fn run_cell(prep: &Prepared, camera: Camera, seed: u64, cfg: &ExperimentConfig, psf: Option<&Psf>) -> Result<CellOutput> {
    let (m, n) = cfg.target_dims;
    let img = &prep.reference;
    let total = img.sum();
    let rel = |est: f64| if total > 0.0 { (est - total) / total } else { est };
    match camera {
        Camera::ClassicFull => Ok(CellOutput {
            image: img.clone(),
            residual: 0.0,
            i_total_rel_err: 0.0,
        }),
        Camera::ClassicHalf => {
            let half = simulate_classic(img, (m / 2, n / 2))?;
            Ok(CellOutput {
                image: upsample_nearest(&half, 2),
                residual: 0.0,
                i_total_rel_err: 0.0,
            })
        }
        Camera::SequentialCi => {
            let shot = simulate_sequential_ci(img, cfg.budget, seed)?;
            let res = solve_tv(&shot.matrix, &shot.values, &cfg.solver)?;
            Ok(CellOutput {
                image: res.image,
                residual: res.final_residual,
                i_total_rel_err: 0.0,
            })
        }
        Camera::ParallelA | Camera::ParallelB => {
            let arch = if camera == Camera::ParallelA { Architecture::A } else { Architecture::B };
            let pattern = ModulatorPattern::generate(m, n, seed)?;
            let raw = acquire_raw(&pattern, psf, img, arch)?;
            let i_total = match arch {
                Architecture::A => open_shot_total(img, psf)?,
                _ => i_total_in_band(&raw, &pattern)?,
            };
            let conv = convert_measurements(&raw, i_total)?;
            let op = conversion_operator(&pattern, psf, arch)?;
            let res = reconstruct(&op, &conv, &cfg.solver)?;
            Ok(CellOutput {
                image: res.image,
                residual: res.final_residual,
                i_total_rel_err: rel(i_total),
            })
        }
    }
}

/// Run every (image, camera, trial) cell on the current rayon pool.
/// Failed cells are kept as records carrying the error and NaN scores.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    if cfg.images.is_empty() {
        return Err(Error::InvalidArgument("no images given".into()));
    }
    let psf = if cfg.diffraction && cfg.cameras.iter().any(|c| matches!(c, Camera::ParallelA | Camera::ParallelB)) {
        Some(compute_psf(&cfg.optics)?.psf)
    } else {
        None
    };
    let prepared: Vec<Prepared> = cfg.images.iter().map(|s| prepare(s, cfg.target_dims)).collect::<Result<_>>()?;
    let mut names: Vec<&str> = prepared.iter().map(|p| p.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("image names must be unique".into()));
    }

    let mut cameras = cfg.cameras.clone();
    cameras.sort();
    cameras.dedup();
    let mut cells = Vec::new();
    for (k, _) in prepared.iter().enumerate() {
        for &c in &cameras {
            // Deterministic cameras are computed once and repeated per trial.
            let trials = if c.is_random() { cfg.trials } else { 1 };
            for t in 0..trials {
                cells.push((k, c, t));
            }
        }
    }
    let outputs: Vec<(usize, Camera, usize, Result<CellOutput>, u64)> = cells
        .into_par_iter()
        .map(|(k, c, t)| {
            let start = Instant::now();
            let out = run_cell(&prepared[k], c, cfg.trial_seed(t), cfg, psf.as_ref());
            let ms = start.elapsed().as_millis() as u64;
            log::info!("{} {} trial {t}: {} ms", prepared[k].name, c, ms);
            (k, c, t, out, ms)
        })
        .collect();

    let mut records = Vec::new();
    let mut gallery: Vec<(String, Vec<(Camera, ImagePlane)>)> =
        prepared.iter().map(|p| (p.name.clone(), Vec::new())).collect();
    for (k, c, t, out, ms) in outputs {
        let prep = &prepared[k];
        let repeats = if c.is_random() { t..t + 1 } else { 0..cfg.trials };
        let base = TrialRecord {
            image: prep.name.clone(),
            camera: c,
            trial: t,
            seed: if c.is_random() { cfg.trial_seed(t) } else { 0 },
            normalized_mse: f64::NAN,
            mse: f64::NAN,
            residual: f64::NAN,
            i_total_rel_err: f64::NAN,
            wall_ms: if cfg.record_timing { ms } else { 0 },
            error: None,
        };
        let filled = match out.and_then(|o| score(prep, &o.image, cfg.mse_resolution).map(|s| (o, s))) {
            Ok((o, s)) => {
                if t == 0 {
                    gallery[k].1.push((c, o.image.clone()));
                }
                TrialRecord {
                    normalized_mse: s.normalized,
                    mse: s.mse,
                    residual: o.residual,
                    i_total_rel_err: o.i_total_rel_err,
                    ..base
                }
            }
            Err(e) => {
                log::error!("{} {} trial {t} failed: {e}", prep.name, c);
                TrialRecord {
                    error: Some(e.to_string()),
                    ..base
                }
            }
        };
        for trial in repeats {
            records.push(TrialRecord {
                trial,
                ..filled.clone()
            });
        }
    }
    records.sort_by(|a, b| (&a.image, a.camera, a.trial).cmp(&(&b.image, b.camera, b.trial)));
    for (_, imgs) in gallery.iter_mut() {
        imgs.sort_by_key(|(c, _)| *c);
    }
    gallery.sort_by(|a, b| a.0.cmp(&b.0));
    let rows = summarize(&records);
    Ok(ExperimentOutput { records, rows, gallery })
}

/// Group records by (image, camera) into mean and sample standard
/// deviation. Records must be sorted by image, camera, trial.
pub fn summarize(records: &[TrialRecord]) -> Vec<ResultRow> {
    let mut rows: Vec<ResultRow> = Vec::new();
    for r in records {
        match rows.last_mut() {
            Some(row) if row.image == r.image && row.camera == r.camera => row.values.push(r.normalized_mse),
            _ => rows.push(ResultRow {
                image: r.image.clone(),
                camera: r.camera,
                mean: 0.0,
                std: 0.0,
                values: vec![r.normalized_mse],
            }),
        }
    }
    for row in &mut rows {
        let k = row.values.len() as f64;
        row.mean = row.values.iter().sum::<f64>() / k;
        row.std = if row.values.len() > 1 {
            (row.values.iter().map(|v| (v - row.mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        if row.values.iter().all(|&v| v == row.values[0]) {
            row.std = 0.0;
        }
    }
    rows
}

/// For every image with the needed rows: mean normalized error of A and of
/// B at most that of the half-resolution classic camera. Returns the
/// violations; an image lacking any of the three rows is a violation too.
pub fn ordering_violations(rows: &[ResultRow]) -> Vec<String> {
    let mut images: Vec<&str> = rows.iter().map(|r| r.image.as_str()).collect();
    images.dedup();
    let mut bad = Vec::new();
    for img in images {
        let mean = |c: Camera| rows.iter().find(|r| r.image == img && r.camera == c).map(|r| r.mean);
        match (mean(Camera::ClassicHalf), mean(Camera::ParallelA), mean(Camera::ParallelB)) {
            (Some(h), Some(a), Some(b)) => {
                for (name, v) in [("parallel_A", a), ("parallel_B", b)] {
                    if !(v <= h) {
                        bad.push(format!("{img}: {name} {v:.4} > classic_half {h:.4}"));
                    }
                }
            }
            _ => bad.push(format!("{img}: missing classic_half, parallel_A or parallel_B")),
        }
    }
    bad
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.9e}")
    }
}

pub const CSV_HEADER: &str = "image,camera,trial,seed,normalized_mse,mse,residual,i_total_rel_err,wall_ms";

pub fn records_csv(records: &[TrialRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.image,
            r.camera,
            r.trial,
            r.seed,
            fmt_num(r.normalized_mse),
            fmt_num(r.mse),
            fmt_num(r.residual),
            fmt_num(r.i_total_rel_err),
            r.wall_ms
        );
    }
    s
}

/// Table with one line per image: `mean (std)` for each camera.
pub fn format_table(rows: &[ResultRow]) -> String {
    let mut cameras: Vec<Camera> = rows.iter().map(|r| r.camera).collect();
    cameras.sort();
    cameras.dedup();
    let mut images: Vec<&str> = rows.iter().map(|r| r.image.as_str()).collect();
    images.dedup();
    let mut s = format!("{:<12}", "image");
    for c in &cameras {
        let _ = write!(s, " {:>17}", c.name());
    }
    s.push('\n');
    for img in images {
        let _ = write!(s, "{img:<12}");
        for c in &cameras {
            match rows.iter().find(|r| r.image == img && r.camera == *c) {
                Some(r) => {
                    let _ = write!(s, " {:>17}", format!("{:.3} ({:.3})", r.mean, r.std));
                }
                None => {
                    let _ = write!(s, " {:>17}", "-");
                }
            }
        }
        s.push('\n');
    }
    s
}

/// Gallery as one grayscale PGM/PNG: a row per image, a column per camera,
/// 4-pixel white gutters. The caption lists each tile's normalized error.
pub fn write_gallery(out: &ExperimentOutput, path: &Path) -> Result<()> {
    let gap = 4;
    let cols = out.gallery.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    if cols == 0 {
        return Err(Error::InvalidArgument("nothing to draw".into()));
    }
    let (th, tw) = out.gallery[0].1[0].1.dims();
    let height = out.gallery.len() * (th + gap) + gap;
    let width = cols * (tw + gap) + gap;
    let mut canvas = Grid::filled(height, width, 1.0);
    let mut caption = String::from("row,col,image,camera,normalized_mse\n");
    for (r, (name, tiles)) in out.gallery.iter().enumerate() {
        for (c, (camera, img)) in tiles.iter().enumerate() {
            let (r0, c0) = (gap + r * (th + gap), gap + c * (tw + gap));
            for i in 0..th.min(img.rows()) {
                for j in 0..tw.min(img.cols()) {
                    canvas.as_mut_slice()[(r0 + i) * width + c0 + j] = img[(i, j)];
                }
            }
            let v = out
                .records
                .iter()
                .find(|t| &t.image == name && t.camera == *camera && t.trial == 0)
                .map_or(f64::NAN, |t| t.normalized_mse);
            let _ = writeln!(caption, "{r},{c},{name},{camera},{v:.4}");
        }
    }
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
        crate::image_io::save_image(&canvas, path)?;
    } else {
        let bytes: Vec<u8> = canvas.as_slice().iter().map(|&v| quantize(v)).collect();
        write_pgm(path, width, height, &bytes)?;
    }
    let cap = caption_path(path);
    fs::write(&cap, caption).map_err(|e| Error::io(&cap, e))
}

pub fn caption_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}
