use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::image_io::{load_image, write_pgm};

/// Name of the bit generator recorded in artifacts. The stream is
/// `ChaCha8Rng::seed_from_u64(seed)`, consumed as 64-bit words, least
/// significant bit first, one bit per base-quadrant cell in row-major order.
pub const PRNG_NAME: &str = "chacha8-u64-lsb";

/// `(2m) x (2n)` binary transmittance grid built from an `m x n` base
/// quadrant repeated in all four quadrants.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulatorPattern {
    base_rows: usize,
    base_cols: usize,
    grid: Grid,
    seed: Option<u64>,
}

/// Row-major stream of Bernoulli(1/2) bits.
pub(crate) struct BitStream {
    rng: ChaCha8Rng,
    word: u64,
    left: u32,
}

impl BitStream {
    pub(crate) fn new(seed: u64) -> Self {
        BitStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
            word: 0,
            left: 0,
        }
    }

    pub(crate) fn next_bit(&mut self) -> bool {
        if self.left == 0 {
            self.word = self.rng.next_u64();
            self.left = 64;
        }
        let bit = self.word & 1 == 1;
        self.word >>= 1;
        self.left -= 1;
        bit
    }
}

impl ModulatorPattern {
    /// Random tiled pattern; `m` and `n` must be even.
    pub fn generate(m: usize, n: usize, seed: u64) -> Result<Self> {
        if m == 0 || n == 0 || !m.is_multiple_of(2) || !n.is_multiple_of(2) {
            return Err(Error::Dimension(format!(
                "pattern base must have even positive sides, got {m}x{n}"
            )));
        }
        let mut bits = BitStream::new(seed);
        let base = Grid::from_fn(m, n, |_, _| if bits.next_bit() { 1.0 } else { 0.0 });
        let mut p = Self::from_base(&base)?;
        p.seed = Some(seed);
        Ok(p)
    }

    /// Tiled pattern from an explicit 0/1 base quadrant.
    pub fn from_base(base: &Grid) -> Result<Self> {
        if base.as_slice().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidArgument("pattern entries must be 0 or 1".into()));
        }
        let (m, n) = base.dims();
        Ok(ModulatorPattern {
            base_rows: m,
            base_cols: n,
            grid: Grid::from_fn(2 * m, 2 * n, |i, j| base[(i % m, j % n)]),
            seed: None,
        })
    }

    pub fn base_dims(&self) -> (usize, usize) {
        (self.base_rows, self.base_cols)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn base(&self) -> Grid {
        self.grid.window(0, 0, self.base_rows, self.base_cols)
    }

    /// Σ of the base quadrant (number of open cells).
    pub fn base_sum(&self) -> f64 {
        self.base().sum()
    }

    pub fn density(&self) -> f64 {
        self.base_sum() / (self.base_rows * self.base_cols) as f64
    }

    pub fn is_tiled(&self) -> bool {
        let (m, n) = (self.base_rows, self.base_cols);
        (0..m).all(|i| {
            (0..n).all(|j| {
                let v = self.grid[(i, j)];
                self.grid[(i + m, j)] == v && self.grid[(i, j + n)] == v && self.grid[(i + m, j + n)] == v
            })
        })
    }

    /// Write the grid as a 0/255 PGM plus a `<path>.txt` sidecar holding
    /// `m`, `n`, `seed`, `prng` and `tiled` as key=value lines.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes: Vec<u8> = self
            .grid
            .as_slice()
            .iter()
            .map(|&v| if v != 0.0 { 255 } else { 0 })
            .collect();
        write_pgm(path, self.grid.cols(), self.grid.rows(), &bytes)?;
        let mut side = String::new();
        writeln!(side, "m={}", self.base_rows).unwrap();
        writeln!(side, "n={}", self.base_cols).unwrap();
        match self.seed {
            Some(s) => writeln!(side, "seed={s}").unwrap(),
            None => writeln!(side, "seed=none").unwrap(),
        }
        writeln!(side, "prng={PRNG_NAME}").unwrap();
        writeln!(side, "tiled={}", self.is_tiled()).unwrap();
        let sp = sidecar_path(path);
        fs::write(&sp, side).map_err(|e| Error::io(sp, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = load_image(path)?;
        let sp = sidecar_path(path);
        let text = fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
        let mut m = None;
        let mut n = None;
        let mut seed = None;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Artifact(format!("malformed sidecar line '{line}'")))?;
            let parse = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| Error::Artifact(format!("bad value '{v}' for {k}")))
            };
            match k {
                "m" => m = Some(parse(v)?),
                "n" => n = Some(parse(v)?),
                "seed" if v != "none" => {
                    seed = Some(
                        v.parse::<u64>()
                            .map_err(|_| Error::Artifact(format!("bad seed '{v}'")))?,
                    )
                }
                "seed" | "prng" | "tiled" => {}
                _ => return Err(Error::Artifact(format!("unknown sidecar key '{k}'"))),
            }
        }
        let (m, n) = m
            .zip(n)
            .ok_or_else(|| Error::Artifact("sidecar lacks m or n".into()))?;
        if img.dims() != (2 * m, 2 * n) {
            return Err(Error::Artifact(format!(
                "pattern image is {:?}, sidecar says base {m}x{n}",
                img.dims()
            )));
        }
        let base = img.window(0, 0, m, n).map(|v| if v > 0.5 { 1.0 } else { 0.0 });
        let mut p = Self::from_base(&base)?;
        if p.grid.as_slice() != img.map(|v| if v > 0.5 { 1.0 } else { 0.0 }).as_slice() {
            return Err(Error::Artifact("pattern image is not quadrant-tiled".into()));
        }
        p.seed = seed;
        Ok(p)
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}
