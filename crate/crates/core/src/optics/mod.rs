//! Incoherent point spread function of a square modulator pixel and
//! pattern blurring.
//!
//! A uniformly illuminated square aperture of side `pixel_pitch` is
//! propagated a distance `propagation_distance` in the Fresnel (paraxial)
//! approximation. The aperture is separable, so the 2-D intensity is the
//! product of two 1-D slit intensities; each 1-D intensity is integrated
//! over detector pixels of the same pitch by sub-sampled midpoint
//! quadrature. The kernel is truncated to `(2r+1)²` and renormalized.

mod fresnel;

pub use fresnel::fresnel;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Largest sub-sample count per pixel tried by the convergence loop.
pub const MAX_OVERSAMPLING: usize = 1 << 16;

/// Maximum change of any kernel entry (as a fraction of the unit total)
/// between two successive oversampling doublings.
pub const CONVERGENCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct OpticsConfig {
    /// meters
    pub wavelength: f64,
    /// modulator pixel side, meters
    pub pixel_pitch: f64,
    /// modulator to detector, meters
    pub propagation_distance: f64,
    /// physical modulator side, meters
    pub modulator_side: f64,
    /// kernel is `(2r+1) x (2r+1)`
    pub kernel_radius: usize,
    /// starting sub-samples per pixel; doubled until converged
    pub oversampling: usize,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        OpticsConfig {
            wavelength: 400e-9,
            pixel_pitch: 1e-4,
            propagation_distance: 60e-3,
            modulator_side: 25.6e-3,
            kernel_radius: 11,
            oversampling: 16,
        }
    }
}

impl OpticsConfig {
    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("wavelength", self.wavelength),
            ("pixel_pitch", self.pixel_pitch),
            ("propagation_distance", self.propagation_distance),
            ("modulator_side", self.modulator_side),
        ];
        for (name, v) in lengths {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("optics.{name} must be > 0, got {v}")));
            }
        }
        if self.oversampling == 0 {
            return Err(Error::InvalidArgument("optics.oversampling must be >= 1".into()));
        }
        Ok(())
    }

    /// Modulator pixels per side implied by the physical dimensions.
    pub fn modulator_pixels(&self) -> usize {
        (self.modulator_side / self.pixel_pitch).round() as usize
    }

    /// `(pitch/2)² / (λ z)`.
    pub fn fresnel_number(&self) -> f64 {
        let a = self.pixel_pitch / 2.0;
        a * a / (self.wavelength * self.propagation_distance)
    }
}

/// Nonnegative, unit-sum, odd-sized square convolution kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Psf {
    radius: usize,
    kernel: Grid,
}

impl Psf {
    /// Identity kernel (r = 0).
    pub fn delta() -> Self {
        Psf {
            radius: 0,
            kernel: Grid::filled(1, 1, 1.0),
        }
    }

    /// Kernel from arbitrary nonnegative weights, rescaled to unit sum.
    pub fn from_weights(weights: Grid) -> Result<Self> {
        let (r, c) = weights.dims();
        if r != c || r % 2 == 0 {
            return Err(Error::Dimension(format!("PSF must be odd and square, got {r}x{c}")));
        }
        if weights.min() < 0.0 {
            return Err(Error::InvalidArgument("negative PSF weight".into()));
        }
        let total = weights.sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument("PSF weights sum to zero".into()));
        }
        Ok(Psf {
            radius: r / 2,
            kernel: weights.scaled(1.0 / total),
        })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn size(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn kernel(&self) -> &Grid {
        &self.kernel
    }

    /// Weight at offset `(di, dj)` from the centre.
    #[inline]
    pub fn at(&self, di: isize, dj: isize) -> f64 {
        let r = self.radius as isize;
        self.kernel[((di + r) as usize, (dj + r) as usize)]
    }

    /// Hex SHA-256 over the radius and the little-endian kernel bytes.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.radius as u64).to_le_bytes());
        for v in self.kernel.as_slice() {
            h.update(v.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Result of [`compute_psf`]: the kernel plus quadrature diagnostics.
#[derive(Debug, Clone)]
pub struct PsfReport {
    pub psf: Psf,
    /// Per-pixel 1-D energy fractions `P(i)`, `i = -r..=r`, before
    /// truncation; the kernel is `P(i) P(j) / (Σ P)²`.
    pub profile: Vec<f64>,
    /// Share of the propagated energy that falls inside the kernel window.
    pub captured_energy: f64,
    /// Sub-samples per pixel of the returned kernel.
    pub oversampling: usize,
    /// Largest entry change against the previous (half-density) pass.
    pub max_change: f64,
}

/// Intensity of a slit of half-width `half_width` at lateral offset `x`,
/// relative to the incident intensity. `scale = sqrt(2 / (λ z))`.
#[inline]
fn slit_intensity(x: f64, half_width: f64, scale: f64) -> f64 {
    let (c1, s1) = fresnel(scale * (-half_width - x));
    let (c2, s2) = fresnel(scale * (half_width - x));
    let dc = c2 - c1;
    let ds = s2 - s1;
    0.5 * (dc * dc + ds * ds)
}

/// 1-D fraction of the slit's transmitted energy landing on each detector
/// pixel `i = -r..=r`, by midpoint quadrature with `os` samples per pixel.
fn pixel_profile(cfg: &OpticsConfig, os: usize) -> Vec<f64> {
    let pitch = cfg.pixel_pitch;
    let half = pitch / 2.0;
    let scale = (2.0 / (cfg.wavelength * cfg.propagation_distance)).sqrt();
    let r = cfg.kernel_radius as isize;
    (-r..=r)
        .into_par_iter()
        .map(|i| {
            let left = (i as f64 - 0.5) * pitch;
            let sum: f64 = (0..os)
                .map(|s| slit_intensity(left + (s as f64 + 0.5) * pitch / os as f64, half, scale))
                .sum();
            // ∫ I dx over the pixel divided by the aperture width (= pitch).
            sum / os as f64
        })
        .collect()
}

fn kernel_from_profile(profile: &[f64]) -> Grid {
    let total: f64 = profile.iter().sum();
    let n = profile.len();
    Grid::from_fn(n, n, |i, j| profile[i] * profile[j] / (total * total))
}

/// Incoherent PSF of one modulator pixel.
///
/// Starts at `cfg.oversampling` sub-samples per pixel and doubles until no
/// kernel entry moves by more than [`CONVERGENCE_TOL`]; fails with
/// [`Error::NonConverged`] past [`MAX_OVERSAMPLING`].
pub fn compute_psf(cfg: &OpticsConfig) -> Result<PsfReport> {
    compute_psf_capped(cfg, MAX_OVERSAMPLING)
}

fn compute_psf_capped(cfg: &OpticsConfig, cap: usize) -> Result<PsfReport> {
    cfg.validate()?;
    let mut os = cfg.oversampling;
    let mut prev = kernel_from_profile(&pixel_profile(cfg, os));
    loop {
        let next_os = os * 2;
        let profile = pixel_profile(cfg, next_os);
        let kernel = kernel_from_profile(&profile);
        let max_change = kernel
            .as_slice()
            .iter()
            .zip(prev.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if max_change <= CONVERGENCE_TOL {
            let captured = profile.iter().sum::<f64>().powi(2);
            log::debug!(
                "psf converged at oversampling {next_os}: max change {max_change:.2e}, captured energy {captured:.6}"
            );
            return Ok(PsfReport {
                psf: Psf {
                    radius: cfg.kernel_radius,
                    kernel,
                },
                profile,
                captured_energy: captured,
                oversampling: next_os,
                max_change,
            });
        }
        if next_os >= cap {
            return Err(Error::NonConverged {
                max_change,
                oversampling: next_os,
            });
        }
        os = next_os;
        prev = kernel;
    }
}

/// Same-size 2-D linear convolution of `pattern` with the PSF, treating
/// everything outside the grid as zero.
pub fn blur_pattern(pattern: &Grid, psf: &Psf) -> Result<Grid> {
    let (rows, cols) = pattern.dims();
    let size = psf.size();
    if rows < size || cols < size {
        return Err(Error::Dimension(format!(
            "pattern {rows}x{cols} smaller than {size}x{size} kernel"
        )));
    }
    Ok(convolve_same(pattern, psf))
}

/// Zero-padded same-size convolution without the size precondition; also
/// used for detector-plane blur.
pub(crate) fn convolve_same(grid: &Grid, psf: &Psf) -> Grid {
    let (rows, cols) = grid.dims();
    let r = psf.radius() as isize;
    let mut out = vec![0.0; rows * cols];
    out.par_chunks_mut(cols).enumerate().for_each(|(i, row)| {
        for (j, slot) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for a in -r..=r {
                let si = i as isize - a;
                if si < 0 || si >= rows as isize {
                    continue;
                }
                for b in -r..=r {
                    let sj = j as isize - b;
                    if sj < 0 || sj >= cols as isize {
                        continue;
                    }
                    acc += psf.at(a, b) * grid[(si as usize, sj as usize)];
                }
            }
            *slot = acc;
        }
    });
    Grid::new(rows, cols, out).expect("finite convolution")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg_with(distance: f64, radius: usize) -> OpticsConfig {
        OpticsConfig {
            propagation_distance: distance,
            kernel_radius: radius,
            ..OpticsConfig::default()
        }
    }

    #[test]
    fn default_psf_invariants() {
        let report = compute_psf(&OpticsConfig::default()).unwrap();
        let psf = &report.psf;
        assert_eq!(psf.size(), 23);
        assert!((psf.kernel().sum() - 1.0).abs() < 1e-12);
        assert!(psf.kernel().min() >= 0.0);
        let r = psf.radius() as isize;
        for i in -r..=r {
            for j in -r..=r {
                let v = psf.at(i, j);
                assert!((v - psf.at(-i, j)).abs() < 1e-10);
                assert!((v - psf.at(i, -j)).abs() < 1e-10);
                assert!((v - psf.at(j, i)).abs() < 1e-10);
            }
        }
        assert!(report.max_change <= CONVERGENCE_TOL);
        assert!(report.captured_energy > 0.9 && report.captured_energy < 1.0);
    }

    #[test]
    fn fresnel_number_of_default_geometry() {
        let nf = OpticsConfig::default().fresnel_number();
        assert!((nf - 0.104_166_666).abs() < 1e-6);
        assert_eq!(OpticsConfig::default().modulator_pixels(), 256);
    }

    #[test]
    fn short_distance_approaches_delta() {
        // Edge fringes of width sqrt(λz) keep a little light outside the
        // geometric pixel: 0.99714 at 1 µm, above 0.999 from 0.1 µm down.
        let c = |z| compute_psf(&cfg_with(z, 11)).unwrap().psf.at(0, 0);
        let (c6, c7, c8) = (c(1e-6), c(1e-7), c(1e-8));
        assert!((c6 - 0.997_138).abs() < 1e-4, "{c6}");
        assert!(c7 > 0.999 && c8 > 0.999, "{c7} {c8}");
        assert!(c6 < c7 && c7 < c8);
    }

    #[test]
    fn radius_zero_is_unit() {
        let report = compute_psf(&cfg_with(1e-6, 0)).unwrap();
        assert_eq!(report.psf.kernel().as_slice(), &[1.0]);
    }

    #[test]
    fn deterministic() {
        let a = compute_psf(&OpticsConfig::default()).unwrap();
        let b = compute_psf(&OpticsConfig::default()).unwrap();
        assert_eq!(a.psf, b.psf);
        assert_eq!(a.psf.hash(), b.psf.hash());
    }

    #[test]
    fn invalid_config() {
        let mut cfg = OpticsConfig::default();
        cfg.wavelength = -1.0;
        assert!(compute_psf(&cfg).is_err());
        let mut cfg = OpticsConfig::default();
        cfg.oversampling = 0;
        assert!(compute_psf(&cfg).is_err());
    }

    #[test]
    fn non_convergence_is_reported() {
        let cfg = OpticsConfig {
            oversampling: 1,
            ..OpticsConfig::default()
        };
        match compute_psf_capped(&cfg, 2) {
            Err(Error::NonConverged { oversampling, max_change }) => {
                assert_eq!(oversampling, 2);
                assert!(max_change > CONVERGENCE_TOL);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    fn small_psf() -> Psf {
        Psf::from_weights(Grid::new(3, 3, vec![1., 2., 1., 2., 4., 2., 1., 2., 1.]).unwrap()).unwrap()
    }

    #[test]
    fn blur_identity_and_impulse() {
        let p = Grid::from_fn(6, 7, |i, j| ((i * 7 + j) % 2) as f64);
        assert_eq!(blur_pattern(&p, &Psf::delta()).unwrap(), p);

        let mut impulse = Grid::zeros(5, 5);
        impulse[(2, 2)] = 1.0;
        let psf = small_psf();
        let out = blur_pattern(&impulse, &psf).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((out[(i + 1, j + 1)] - psf.kernel()[(i, j)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn blur_of_ones() {
        let ones = Grid::filled(6, 6, 1.0);
        let out = blur_pattern(&ones, &small_psf()).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let border = i == 0 || j == 0 || i == 5 || j == 5;
                if border {
                    assert!(out[(i, j)] < 1.0);
                } else {
                    assert!((out[(i, j)] - 1.0).abs() < 1e-15);
                }
            }
        }
        assert!(blur_pattern(&Grid::zeros(2, 2), &small_psf()).is_err());
    }

    #[test]
    fn blur_conserves_interior_energy() {
        let psf = small_psf();
        let mut p = Grid::zeros(9, 9);
        for i in 1..8 {
            for j in 1..8 {
                p[(i, j)] = ((i + 2 * j) % 3) as f64;
            }
        }
        let out = blur_pattern(&p, &psf).unwrap();
        assert!((out.sum() - p.sum()).abs() < 1e-10);
        let full = Grid::filled(9, 9, 1.0);
        assert!(blur_pattern(&full, &psf).unwrap().sum() < full.sum());
    }

    #[test]
    fn weights_validation() {
        assert!(Psf::from_weights(Grid::zeros(2, 2)).is_err());
        assert!(Psf::from_weights(Grid::filled(3, 3, -1.0)).is_err());
        assert!(Psf::from_weights(Grid::zeros(3, 3)).is_err());
    }
}
