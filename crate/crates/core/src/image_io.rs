//! Grayscale image loading, saving, block averaging and synthetic phantoms.
//!
//! Images are 8-bit grayscale PGM (P5, maxval 255) or PNG. Values are
//! normalized to `[0, 1]` by dividing the raw byte by 255; export clamps to
//! `[0, 1]` and rounds half away from zero.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};

use crate::error::{Error, Result};
use crate::grid::{Grid, ImagePlane};

pub fn load_image(path: impl AsRef<Path>) -> Result<ImagePlane> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let unsupported = |reason: String| Error::UnsupportedImage {
        path: path.to_path_buf(),
        reason,
    };
    let reader = ImageReader::new(std::io::Cursor::new(&bytes))
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(ImageFormat::Pnm) | Some(ImageFormat::Png) => {}
        other => return Err(unsupported(format!("format {other:?}, expected PGM or PNG"))),
    }
    let decoded = reader.decode().map_err(|e| unsupported(e.to_string()))?;
    match decoded {
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            let data = buf.into_raw().into_iter().map(|b| b as f64 / 255.0).collect();
            Grid::new(h as usize, w as usize, data)
        }
        other => Err(unsupported(format!(
            "color type {:?}, only 8-bit grayscale is accepted",
            other.color()
        ))),
    }
}

/// Byte value stored for an intensity: clamp to `[0, 1]`, scale by 255 and
/// round half away from zero.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Write `img` as 8-bit grayscale. The format follows the extension:
/// `.png` writes PNG, anything else binary PGM.
pub fn save_image(img: &ImagePlane, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = img.as_slice().iter().map(|&v| quantize(v)).collect();
    let is_png = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        let buf = image::GrayImage::from_raw(img.cols() as u32, img.rows() as u32, bytes)
            .expect("buffer size matches dimensions");
        buf.save_with_format(path, ImageFormat::Png)
            .map_err(|e| match e {
                image::ImageError::IoError(io) => Error::io(path, io),
                other => Error::io(path, std::io::Error::other(other)),
            })
    } else {
        write_pgm(path, img.cols(), img.rows(), &bytes)
    }
}

pub(crate) fn write_pgm(path: &Path, width: usize, height: usize, bytes: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(bytes.len() + 32);
    write!(out, "P5\n{width} {height}\n255\n").expect("write to Vec");
    out.extend_from_slice(bytes);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Mean over disjoint `factor x factor` blocks.
pub fn block_average(img: &ImagePlane, factor: usize) -> Result<ImagePlane> {
    let (m, n) = img.dims();
    if factor == 0 || m % factor != 0 || n % factor != 0 {
        return Err(Error::Dimension(format!(
            "block factor {factor} does not divide {m}x{n}"
        )));
    }
    let area = (factor * factor) as f64;
    Ok(Grid::from_fn(m / factor, n / factor, |bi, bj| {
        let mut s = 0.0;
        for i in bi * factor..(bi + 1) * factor {
            for j in bj * factor..(bj + 1) * factor {
                s += img[(i, j)];
            }
        }
        s / area
    }))
}

/// Nearest-neighbour upsampling by an integer factor (each pixel becomes a
/// constant `factor x factor` block).
pub fn upsample_nearest(img: &ImagePlane, factor: usize) -> ImagePlane {
    assert!(factor > 0);
    Grid::from_fn(img.rows() * factor, img.cols() * factor, |i, j| {
        img[(i / factor, j / factor)]
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhantomKind {
    Flat,
    Quadrants,
    Disk,
}

impl PhantomKind {
    pub const ALL: [PhantomKind; 3] = [PhantomKind::Flat, PhantomKind::Quadrants, PhantomKind::Disk];

    pub fn name(self) -> &'static str {
        match self {
            PhantomKind::Flat => "flat",
            PhantomKind::Quadrants => "quadrants",
            PhantomKind::Disk => "disk",
        }
    }
}

impl std::str::FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(PhantomKind::Flat),
            "quadrants" => Ok(PhantomKind::Quadrants),
            "disk" => Ok(PhantomKind::Disk),
            _ => Err(Error::InvalidArgument(format!("unknown phantom '{s}'"))),
        }
    }
}

/// Deterministic piecewise-constant test image.
///
/// * `Flat`: every pixel 0.5.
/// * `Quadrants`: split at `(m/2, n/2)`; top-left 0, top-right 1/3,
///   bottom-left 2/3, bottom-right 1.
/// * `Disk`: 1 where the pixel centre lies within `min(m, n)/4` of the image
///   centre, 0 elsewhere.
pub fn make_phantom(kind: PhantomKind, m: usize, n: usize) -> Result<ImagePlane> {
    if m < 8 || n < 8 {
        return Err(Error::Dimension(format!("phantom needs at least 8x8, got {m}x{n}")));
    }
    let img = match kind {
        PhantomKind::Flat => Grid::filled(m, n, 0.5),
        PhantomKind::Quadrants => Grid::from_fn(m, n, |i, j| {
            let bottom = i >= m / 2;
            let right = j >= n / 2;
            match (bottom, right) {
                (false, false) => 0.0,
                (false, true) => 1.0 / 3.0,
                (true, false) => 2.0 / 3.0,
                (true, true) => 1.0,
            }
        }),
        PhantomKind::Disk => {
            let radius = m.min(n) as f64 / 4.0;
            let (ci, cj) = (m as f64 / 2.0, n as f64 / 2.0);
            Grid::from_fn(m, n, |i, j| {
                let di = i as f64 + 0.5 - ci;
                let dj = j as f64 + 0.5 - cj;
                if di * di + dj * dj <= radius * radius {
                    1.0
                } else {
                    0.0
                }
            })
        }
    };
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn load_normalizes_bytes() {
        let dir = tmp();
        let cases: [(u8, f64); 3] = [(0, 0.0), (255, 1.0), (128, 128.0 / 255.0)];
        for (byte, expected) in cases {
            let p = dir.path().join(format!("v{byte}.pgm"));
            write_pgm(&p, 4, 4, &[byte; 16]).unwrap();
            let img = load_image(&p).unwrap();
            assert_eq!(img.dims(), (4, 4));
            assert!(img.as_slice().iter().all(|&v| v == expected));
        }
        assert!((128.0f64 / 255.0 - 0.50196).abs() < 1e-5);
    }

    #[test]
    fn load_errors() {
        let dir = tmp();
        assert!(matches!(
            load_image(dir.path().join("missing.pgm")),
            Err(Error::Io { .. })
        ));

        let rgb = dir.path().join("rgb.png");
        image::RgbImage::new(4, 4).save(&rgb).unwrap();
        assert!(matches!(load_image(&rgb), Err(Error::UnsupportedImage { .. })));

        let deep = dir.path().join("deep.png");
        image::ImageBuffer::<image::Luma<u16>, _>::new(4, 4).save(&deep).unwrap();
        assert!(matches!(load_image(&deep), Err(Error::UnsupportedImage { .. })));
    }

    #[test]
    fn save_clamps_and_rounds() {
        assert_eq!(quantize(1.2), 255);
        assert_eq!(quantize(-0.1), 0);
        assert_eq!(quantize(0.5), 128);

        let dir = tmp();
        let img = Grid::new(1, 3, vec![1.2, -0.1, 0.5]).unwrap();
        for name in ["a.pgm", "a.png"] {
            let p = dir.path().join(name);
            save_image(&img, &p).unwrap();
            let back = load_image(&p).unwrap();
            assert_eq!(back.as_slice(), &[1.0, 0.0, 128.0 / 255.0]);
        }
    }

    #[test]
    fn save_to_unwritable_path_fails() {
        let img = Grid::zeros(2, 2);
        assert!(save_image(&img, "/nonexistent-dir/x.pgm").is_err());
    }

    #[test]
    fn block_average_examples() {
        let c = Grid::filled(8, 8, 0.3);
        for f in [1, 2, 4, 8] {
            let out = block_average(&c, f).unwrap();
            assert_eq!(out.dims(), (8 / f, 8 / f));
            assert!(out.as_slice().iter().all(|&v| (v - 0.3).abs() < 1e-15));
        }
        let checker = Grid::new(2, 2, vec![0., 1., 1., 0.]).unwrap();
        assert_eq!(block_average(&checker, 2).unwrap().as_slice(), &[0.5]);
        let g = Grid::from_fn(4, 6, |i, j| (i * 6 + j) as f64);
        assert_eq!(block_average(&g, 1).unwrap(), g);
        assert!(block_average(&g, 4).is_err());
        assert!(block_average(&g, 0).is_err());
    }

    #[test]
    fn phantoms() {
        let flat = make_phantom(PhantomKind::Flat, 8, 8).unwrap();
        assert!(flat.as_slice().iter().all(|&v| v == 0.5));

        let q = make_phantom(PhantomKind::Quadrants, 8, 8).unwrap();
        assert_eq!(q[(0, 0)], 0.0);
        assert_eq!(q[(0, 7)], 1.0 / 3.0);
        assert_eq!(q[(7, 0)], 2.0 / 3.0);
        assert_eq!(q[(7, 7)], 1.0);

        let d = make_phantom(PhantomKind::Disk, 64, 64).unwrap();
        for i in 0..64 {
            for j in 0..64 {
                let di = i as f64 + 0.5 - 32.0;
                let dj = j as f64 + 0.5 - 32.0;
                let inside = (di * di + dj * dj).sqrt() <= 16.0;
                assert_eq!(d[(i, j)], if inside { 1.0 } else { 0.0 });
            }
        }
        assert!(make_phantom(PhantomKind::Disk, 4, 8).is_err());
    }

    fn byte_image() -> impl Strategy<Value = Grid> {
        (1usize..12, 1usize..12).prop_flat_map(|(r, c)| {
            proptest::collection::vec(any::<u8>(), r * c).prop_map(move |bytes| {
                Grid::new(r, c, bytes.into_iter().map(|b| b as f64 / 255.0).collect()).unwrap()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn save_load_round_trip(img in byte_image(), png in any::<bool>()) {
            let dir = tmp();
            let p = dir.path().join(if png { "x.png" } else { "x.pgm" });
            save_image(&img, &p).unwrap();
            prop_assert_eq!(load_image(&p).unwrap(), img);
        }

        #[test]
        fn block_average_preserves_mean_and_composes(
            vals in proptest::collection::vec(0.0f64..1.0, 144),
        ) {
            let img = Grid::new(12, 12, vals).unwrap();
            for f in [2, 3, 4, 6, 12] {
                let out = block_average(&img, f).unwrap();
                prop_assert!((out.mean() - img.mean()).abs() <= 1e-12);
            }
            let two_then_three = block_average(&block_average(&img, 2).unwrap(), 3).unwrap();
            let six = block_average(&img, 6).unwrap();
            for (a, b) in two_then_three.as_slice().iter().zip(six.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
