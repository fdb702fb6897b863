//! Shift-based sensing operator.
//!
//! With `k = m` and `l = n` detectors, detector `(i, j)` sees the image
//! through the `m x n` window of the modulator grid starting at `(i, j)`:
//!
//! `D(i, j) = Σ_{p,q} pattern(i+p, j+q) · img(p, q)`
//!
//! i.e. a valid cross-correlation. The transpose has the same form with the
//! roles of image and detector grid swapped, so forward and adjoint share a
//! single precomputed pattern spectrum.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linop::LinearOperator;
use crate::optics::{blur_pattern, convolve_same, Psf};
use crate::sensing::correlate::Correlator;
use crate::sensing::measurement::{downsample, Architecture, MeasurementSet, Stage};
use crate::sensing::pattern::ModulatorPattern;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Physical 0/1 transmittance.
    Raw01,
    /// Entries mapped to `2·p - 1` (±1 for a binary pattern).
    Bipolar,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Raw01 => "raw01",
            Mode::Bipolar => "bipolar",
        }
    }

    fn stage(self) -> Stage {
        match self {
            Mode::Raw01 => Stage::Raw,
            Mode::Bipolar => Stage::Converted,
        }
    }
}

/// `D = M I` for one modulator grid, composed with a detector read-out
/// architecture.
#[derive(Debug)]
pub struct SensingOperator {
    m: usize,
    n: usize,
    pattern: Grid,
    mode: Mode,
    architecture: Architecture,
    correlator: Correlator,
}

/// Operator for `pattern`: bipolar mode maps entries to `2p - 1` first,
/// then the optional PSF blurs the grid (zero padded).
pub fn make_operator(
    pattern: &ModulatorPattern,
    psf: Option<&Psf>,
    mode: Mode,
    architecture: Architecture,
) -> Result<SensingOperator> {
    let mapped = match mode {
        Mode::Raw01 => pattern.grid().clone(),
        Mode::Bipolar => pattern.grid().map(|v| 2.0 * v - 1.0),
    };
    let effective = match psf {
        Some(h) => blur_pattern(&mapped, h)?,
        None => mapped,
    };
    SensingOperator::from_grid(effective, mode, architecture)
}

/// Bipolar operator that reproduces converted physical acquisitions
/// exactly: the 0/1 pattern is blurred first and then mapped, `2·(P∗h) - 1`.
/// Agrees with [`make_operator`] in bipolar mode on detectors whose
/// windows stay `r` cells inside the modulator; at the top and left rim the
/// zero padding of the blur makes the two differ.
pub fn conversion_operator(
    pattern: &ModulatorPattern,
    psf: Option<&Psf>,
    architecture: Architecture,
) -> Result<SensingOperator> {
    let blurred = match psf {
        Some(h) => blur_pattern(pattern.grid(), h)?,
        None => pattern.grid().clone(),
    };
    SensingOperator::from_grid(blurred.map(|v| 2.0 * v - 1.0), Mode::Bipolar, architecture)
}

impl SensingOperator {
    /// Operator over an arbitrary `(2m) x (2n)` real grid (already mapped
    /// and blurred as desired).
    pub fn from_grid(pattern: Grid, mode: Mode, architecture: Architecture) -> Result<Self> {
        let (r, c) = pattern.dims();
        if r % 2 != 0 || c % 2 != 0 {
            return Err(Error::Dimension(format!("pattern grid must be (2m)x(2n), got {r}x{c}")));
        }
        let (m, n) = (r / 2, c / 2);
        if architecture != Architecture::Full && (m % 2 != 0 || n % 2 != 0) {
            return Err(Error::Dimension(format!(
                "architecture {architecture} needs even image dimensions, got {m}x{n}"
            )));
        }
        let correlator = Correlator::new(&pattern);
        Ok(SensingOperator {
            m,
            n,
            pattern,
            mode,
            architecture,
            correlator,
        })
    }

    pub fn pattern(&self) -> &Grid {
        &self.pattern
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
    }

    /// Same pattern and mode, different read-out.
    pub fn with_architecture(&self, architecture: Architecture) -> Result<Self> {
        Self::from_grid(self.pattern.clone(), self.mode, architecture)
    }

    fn check_image(&self, img: &Grid) -> Result<()> {
        if img.dims() != (self.m, self.n) {
            return Err(Error::Dimension(format!(
                "image {:?} vs operator {}x{}",
                img.dims(),
                self.m,
                self.n
            )));
        }
        Ok(())
    }

    fn full_forward(&self, x: &[f64]) -> Vec<f64> {
        self.correlator.correlate(x, (self.m, self.n), (self.m, self.n))
    }

    fn full_adjoint(&self, d: &[f64]) -> Vec<f64> {
        self.correlator.correlate(d, (self.m, self.n), (self.m, self.n))
    }

    /// Every shift, before any read-out downsampling.
    pub fn forward_full(&self, img: &Grid) -> Result<MeasurementSet> {
        self.check_image(img)?;
        MeasurementSet::new(
            self.full_forward(img.as_slice()),
            (self.m, self.n),
            Architecture::Full,
            self.mode.stage(),
        )
    }

    /// Transpose of [`forward_full`](Self::forward_full).
    pub fn adjoint_full(&self, meas: &MeasurementSet) -> Result<Grid> {
        if meas.architecture != Architecture::Full {
            return Err(Error::WrongMeasurements {
                expected: "full".into(),
                got: meas.architecture.name().into(),
            });
        }
        if meas.values.len() != self.m * self.n {
            return Err(Error::Dimension(format!(
                "{} measurements for a {}x{} grid",
                meas.values.len(),
                self.m,
                self.n
            )));
        }
        Grid::new(self.m, self.n, self.full_adjoint(&meas.values))
    }

    /// Forward map followed by this operator's read-out.
    pub fn measure(&self, img: &Grid) -> Result<MeasurementSet> {
        let full = self.forward_full(img)?;
        downsample(&full, self.architecture)
    }
}

impl LinearOperator for SensingOperator {
    fn image_dims(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    fn num_measurements(&self) -> usize {
        self.architecture.output_len(self.m, self.n)
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let full = self.full_forward(x);
        let (m, n) = (self.m, self.n);
        match self.architecture {
            Architecture::Full => full,
            Architecture::A => (0..m)
                .step_by(2)
                .flat_map(|i| (0..n).step_by(2).map(move |j| (i, j)))
                .map(|(i, j)| full[i * n + j])
                .collect(),
            Architecture::B => (0..m)
                .step_by(2)
                .flat_map(|i| (0..n).step_by(2).map(move |j| (i, j)))
                .map(|(i, j)| full[i * n + j] + full[(i + 1) * n + j] + full[i * n + j + 1] + full[(i + 1) * n + j + 1])
                .collect(),
        }
    }

    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        let (m, n) = (self.m, self.n);
        let d = match self.architecture {
            Architecture::Full => y.to_vec(),
            Architecture::A => {
                let mut d = vec![0.0; m * n];
                for (k, &v) in y.iter().enumerate() {
                    let (bi, bj) = (k / (n / 2), k % (n / 2));
                    d[2 * bi * n + 2 * bj] = v;
                }
                d
            }
            Architecture::B => {
                let mut d = vec![0.0; m * n];
                for (k, &v) in y.iter().enumerate() {
                    let (i, j) = (2 * (k / (n / 2)), 2 * (k % (n / 2)));
                    d[i * n + j] = v;
                    d[(i + 1) * n + j] = v;
                    d[i * n + j + 1] = v;
                    d[(i + 1) * n + j + 1] = v;
                }
                d
            }
        };
        self.full_adjoint(&d)
    }
}

/// Valid cross-correlation with an arbitrary detector count: `k x l`
/// detectors behind a pattern of at least `(k-1+m) x (l-1+n)`.
pub fn correlate_valid(pattern: &Grid, img: &Grid, detectors: (usize, usize)) -> Result<Grid> {
    let (k, l) = detectors;
    let (m, n) = img.dims();
    if k == 0 || l == 0 || pattern.rows() < k - 1 + m || pattern.cols() < l - 1 + n {
        return Err(Error::Dimension(format!(
            "pattern {:?} too small for {k}x{l} detectors over a {m}x{n} image",
            pattern.dims()
        )));
    }
    let c = Correlator::new(pattern);
    Grid::new(k, l, c.correlate(img.as_slice(), (m, n), (k, l)))
}

/// Ideal (diffraction-free) detector plane extended by `margin` shifts on
/// every side, with the pattern treated as opaque outside its grid. Entry
/// `(margin + i, margin + j)` is the reading of shift `(i, j)`,
/// `i in -margin..m+margin`.
pub fn ideal_detector_plane(pattern: &Grid, img: &Grid, margin: usize) -> Result<Grid> {
    let (pr, pc) = pattern.dims();
    let (m, n) = img.dims();
    if pr < m || pc < n {
        return Err(Error::Dimension("image larger than pattern".into()));
    }
    let padded = Grid::from_fn(pr + 2 * margin, pc + 2 * margin, |u, v| {
        if u < margin || v < margin || u >= pr + margin || v >= pc + margin {
            0.0
        } else {
            pattern[(u - margin, v - margin)]
        }
    });
    let rows = pr - m + 1 + 2 * margin;
    let cols = pc - n + 1 + 2 * margin;
    let c = Correlator::new(&padded);
    let plane = Grid::new(rows, cols, c.correlate(img.as_slice(), (m, n), (rows, cols)))?;
    Ok(plane)
}

/// Physical one-shot acquisition of `img` through the 0/1 `pattern`: the
/// ideal detector plane (including shifts just outside the array, whose
/// light still spreads inward) is blurred by the PSF at the detector and
/// the `m x n` array is read out, then downsampled for `architecture`.
pub fn acquire_raw(
    pattern: &ModulatorPattern,
    psf: Option<&Psf>,
    img: &Grid,
    architecture: Architecture,
) -> Result<MeasurementSet> {
    let (m, n) = pattern.base_dims();
    if img.dims() != (m, n) {
        return Err(Error::Dimension(format!(
            "image {:?} vs pattern base {m}x{n}",
            img.dims()
        )));
    }
    let r = psf.map_or(0, Psf::radius);
    let plane = ideal_detector_plane(pattern.grid(), img, r)?;
    let blurred = match psf {
        Some(h) => convolve_same(&plane, h),
        None => plane,
    };
    let detectors = blurred.window(r, r, m, n);
    let full = MeasurementSet::new(detectors.into_vec(), (m, n), Architecture::Full, Stage::Raw)?;
    downsample(&full, architecture)
}

/// Second exposure with every modulator pixel open, read at the central
/// detector. Its window stays inside the modulator for kernel radii up to
/// `m/2`, so the reading is the unmodulated total `Σ img`.
pub fn open_shot_total(img: &Grid, psf: Option<&Psf>) -> Result<f64> {
    let (m, n) = img.dims();
    let r = psf.map_or(0, Psf::radius) as isize;
    let (ci, cj) = ((m / 2) as isize, (n / 2) as isize);
    // Column/row prefix sums give each shifted window sum in O(1).
    let mut prefix = vec![0.0; (m + 1) * (n + 1)];
    for i in 0..m {
        for j in 0..n {
            prefix[(i + 1) * (n + 1) + j + 1] =
                img[(i, j)] + prefix[i * (n + 1) + j + 1] + prefix[(i + 1) * (n + 1) + j] - prefix[i * (n + 1) + j];
        }
    }
    let rect = |r0: isize, r1: isize, c0: isize, c1: isize| -> f64 {
        let (r0, r1) = (r0.clamp(0, m as isize) as usize, r1.clamp(0, m as isize) as usize);
        let (c0, c1) = (c0.clamp(0, n as isize) as usize, c1.clamp(0, n as isize) as usize);
        if r0 >= r1 || c0 >= c1 {
            return 0.0;
        }
        prefix[r1 * (n + 1) + c1] - prefix[r0 * (n + 1) + c1] - prefix[r1 * (n + 1) + c0] + prefix[r0 * (n + 1) + c0]
    };
    let mut total = 0.0;
    for a in -r..=r {
        for b in -r..=r {
            let (si, sj) = (ci - a, cj - b);
            // Image pixels p with 0 <= si + p < 2m see an open modulator cell.
            let reading = rect(-si, 2 * m as isize - si, -sj, 2 * n as isize - sj);
            let w = psf.map_or(1.0, |h| h.at(a, b));
            total += w * reading;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::correlate::correlate_direct;

    #[test]
    fn three_detector_system() {
        let pattern = Grid::new(1, 7, vec![1., 0., 1., 0., 1., 1., 0.]).unwrap();
        let img = Grid::new(1, 5, vec![1., 2., 3., 4., 5.]).unwrap();
        let d = correlate_valid(&pattern, &img, (1, 3)).unwrap();
        let expect = [9.0, 11.0, 8.0];
        for (a, b) in d.as_slice().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(correlate_valid(&pattern, &img, (1, 4)).is_err());
    }

    #[test]
    fn all_open_pattern_sums_image() {
        let p = ModulatorPattern::from_base(&Grid::filled(4, 6, 1.0)).unwrap();
        let op = make_operator(&p, None, Mode::Raw01, Architecture::Full).unwrap();
        let img = Grid::from_fn(4, 6, |i, j| (i + 2 * j) as f64 * 0.1);
        let d = op.forward_full(&img).unwrap();
        for v in &d.values {
            assert!((v - img.sum()).abs() < 1e-10);
        }
    }

    #[test]
    fn impulse_reads_pattern_window() {
        let p = ModulatorPattern::generate(4, 4, 3).unwrap();
        let op = make_operator(&p, None, Mode::Raw01, Architecture::Full).unwrap();
        let (pp, qq) = (1, 2);
        let mut img = Grid::zeros(4, 4);
        img[(pp, qq)] = 1.0;
        let d = op.forward_full(&img).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((d.values[i * 4 + j] - p.grid()[(i + pp, j + qq)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adjoint_examples() {
        let p = ModulatorPattern::from_base(&Grid::filled(4, 4, 1.0)).unwrap();
        let op = make_operator(&p, None, Mode::Raw01, Architecture::Full).unwrap();
        let mut delta = vec![0.0; 16];
        delta[5] = 1.0;
        let meas = MeasurementSet::new(delta, (4, 4), Architecture::Full, Stage::Raw).unwrap();
        let x = op.adjoint_full(&meas).unwrap();
        assert!(x.as_slice().iter().all(|v| (v - 1.0).abs() < 1e-12));

        let zero = MeasurementSet::new(vec![0.0; 16], (4, 4), Architecture::Full, Stage::Raw).unwrap();
        assert!(op.adjoint_full(&zero).unwrap().as_slice().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn dimension_errors() {
        let p = ModulatorPattern::generate(4, 4, 3).unwrap();
        let op = make_operator(&p, None, Mode::Raw01, Architecture::Full).unwrap();
        assert!(op.forward_full(&Grid::zeros(4, 5)).is_err());
        let big = Psf::from_weights(Grid::filled(9, 9, 1.0)).unwrap();
        assert!(make_operator(&p, Some(&big), Mode::Raw01, Architecture::Full).is_err());
        assert!(SensingOperator::from_grid(Grid::zeros(6, 6), Mode::Raw01, Architecture::A).is_err());
    }

    #[test]
    fn extended_plane_matches_direct() {
        let p = ModulatorPattern::generate(4, 4, 9).unwrap();
        let img = Grid::from_fn(4, 4, |i, j| (i * 4 + j) as f64);
        let plane = ideal_detector_plane(p.grid(), &img, 2).unwrap();
        assert_eq!(plane.dims(), (9, 9));
        let mut padded = Grid::zeros(12, 12);
        for i in 0..8 {
            for j in 0..8 {
                padded[(i + 2, j + 2)] = p.grid()[(i, j)];
            }
        }
        let direct = correlate_direct(&padded, &img, (9, 9));
        for (a, b) in plane.as_slice().iter().zip(direct.as_slice()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn open_shot_equals_image_sum() {
        let img = Grid::from_fn(8, 8, |i, j| ((i * 3 + j) % 5) as f64 * 0.2);
        let psf = Psf::from_weights(Grid::from_fn(5, 5, |i, j| 1.0 + (i * j) as f64)).unwrap();
        for h in [None, Some(&psf)] {
            let t = open_shot_total(&img, h).unwrap();
            assert!((t - img.sum()).abs() < 1e-10 * img.sum());
        }
    }

    #[test]
    fn conversion_operator_matches_physical_conversion() {
        let h = Psf::from_weights(Grid::from_fn(5, 5, |i, j| 1.0 + (i * j) as f64 / 4.0)).unwrap();
        let p = ModulatorPattern::generate(12, 12, 8).unwrap();
        let img = Grid::from_fn(12, 12, |i, j| ((i * 5 + j * 3) % 7) as f64 / 6.0);
        for arch in [Architecture::Full, Architecture::A, Architecture::B] {
            let raw = acquire_raw(&p, Some(&h), &img, arch).unwrap();
            let conv = crate::sensing::convert_measurements(&raw, img.sum()).unwrap();
            let op = conversion_operator(&p, Some(&h), arch).unwrap();
            let direct = op.measure(&img).unwrap();
            for (a, b) in conv.values.iter().zip(&direct.values) {
                assert!((a - b).abs() < 1e-10, "{arch}: {a} vs {b}");
            }
            let naive = make_operator(&p, Some(&h), Mode::Bipolar, arch).unwrap().measure(&img).unwrap();
            let worst = conv.values.iter().zip(&naive.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(worst > 1e-3);
        }
    }
}
