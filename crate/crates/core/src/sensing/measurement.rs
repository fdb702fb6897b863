use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sensing::pattern::ModulatorPattern;

/// Detector read-out scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Architecture {
    /// One measurement per shift, `m x n` detectors.
    Full,
    /// Keep detectors whose 1-based row and column are both odd.
    A,
    /// Sum disjoint 2x2 detector blocks.
    B,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Full => "full",
            Architecture::A => "A",
            Architecture::B => "B",
        }
    }

    /// Number of full-grid readings aggregated into one measurement.
    pub fn aggregation(self) -> usize {
        match self {
            Architecture::Full | Architecture::A => 1,
            Architecture::B => 4,
        }
    }

    pub fn output_len(self, m: usize, n: usize) -> usize {
        match self {
            Architecture::Full => m * n,
            Architecture::A | Architecture::B => (m / 2) * (n / 2),
        }
    }

    /// Exposures needed to obtain converted measurements: A needs an extra
    /// all-open acquisition for the unmodulated total.
    pub fn shots(self) -> usize {
        match self {
            Architecture::A => 2,
            Architecture::Full | Architecture::B => 1,
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Architecture::Full),
            "A" | "a" => Ok(Architecture::A),
            "B" | "b" => Ok(Architecture::B),
            _ => Err(Error::InvalidArgument(format!("unknown architecture '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    /// Physical 0/1-pattern readings.
    Raw,
    /// Equivalent ±1-pattern measurements.
    Converted,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Raw => "raw",
            Stage::Converted => "converted",
        }
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Stage::Raw),
            "converted" => Ok(Stage::Converted),
            _ => Err(Error::InvalidArgument(format!("unknown stage '{s}'"))),
        }
    }
}

/// Detector readings with their provenance. The full grid is vectorized
/// row-major; A and B outputs are row-major over the `(m/2) x (n/2)` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub values: Vec<f64>,
    pub image_dims: (usize, usize),
    pub architecture: Architecture,
    pub stage: Stage,
    pub i_total: Option<f64>,
}

impl MeasurementSet {
    pub fn new(
        values: Vec<f64>,
        image_dims: (usize, usize),
        architecture: Architecture,
        stage: Stage,
    ) -> Result<Self> {
        let (m, n) = image_dims;
        if architecture != Architecture::Full && (m % 2 != 0 || n % 2 != 0) {
            return Err(Error::Dimension(format!(
                "architecture {architecture} needs even dimensions, got {m}x{n}"
            )));
        }
        let expected = architecture.output_len(m, n);
        if values.len() != expected {
            return Err(Error::Dimension(format!(
                "{} values for architecture {architecture} on {m}x{n} (expected {expected})",
                values.len()
            )));
        }
        Ok(MeasurementSet {
            values,
            image_dims,
            architecture,
            stage,
            i_total: None,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    fn expect_full(&self) -> Result<(usize, usize)> {
        if self.architecture != Architecture::Full {
            return Err(Error::WrongMeasurements {
                expected: "full".into(),
                got: self.architecture.name().into(),
            });
        }
        let (m, n) = self.image_dims;
        if m % 2 != 0 || n % 2 != 0 {
            return Err(Error::Dimension(format!("downsampling needs even dimensions, got {m}x{n}")));
        }
        Ok((m, n))
    }
}

/// Architecture A: keep `D(i, j)` with both 1-based indices odd.
pub fn downsample_a(meas: &MeasurementSet) -> Result<MeasurementSet> {
    let (m, n) = meas.expect_full()?;
    let mut out = Vec::with_capacity(m * n / 4);
    for i in (0..m).step_by(2) {
        for j in (0..n).step_by(2) {
            out.push(meas.values[i * n + j]);
        }
    }
    let mut set = MeasurementSet::new(out, (m, n), Architecture::A, meas.stage)?;
    set.i_total = meas.i_total;
    Ok(set)
}

/// Architecture B: `D(i,j) + D(i+1,j) + D(i,j+1) + D(i+1,j+1)` for odd
/// 1-based `i`, `j`.
pub fn downsample_b(meas: &MeasurementSet) -> Result<MeasurementSet> {
    let (m, n) = meas.expect_full()?;
    let v = &meas.values;
    let mut out = Vec::with_capacity(m * n / 4);
    for i in (0..m).step_by(2) {
        for j in (0..n).step_by(2) {
            out.push(v[i * n + j] + v[(i + 1) * n + j] + v[i * n + j + 1] + v[(i + 1) * n + j + 1]);
        }
    }
    let mut set = MeasurementSet::new(out, (m, n), Architecture::B, meas.stage)?;
    set.i_total = meas.i_total;
    Ok(set)
}

pub fn downsample(meas: &MeasurementSet, arch: Architecture) -> Result<MeasurementSet> {
    match arch {
        Architecture::Full => {
            meas.expect_full()?;
            Ok(meas.clone())
        }
        Architecture::A => downsample_a(meas),
        Architecture::B => downsample_b(meas),
    }
}

/// Unmodulated total irradiance recovered from the raw readings:
/// Σ readings / Σ base quadrant. Valid because the quadrant tiling makes
/// every image pixel see the whole base quadrant exactly once across the
/// full detector grid, and B (or the full grid) keeps all of that light.
pub fn i_total_in_band(meas: &MeasurementSet, pattern: &ModulatorPattern) -> Result<f64> {
    if meas.stage != Stage::Raw {
        return Err(Error::WrongMeasurements {
            expected: "raw".into(),
            got: meas.stage.name().into(),
        });
    }
    if meas.architecture == Architecture::A {
        return Err(Error::InBandTotalUnavailable("A"));
    }
    if pattern.base_dims() != meas.image_dims {
        return Err(Error::Dimension(format!(
            "pattern base {:?} vs image {:?}",
            pattern.base_dims(),
            meas.image_dims
        )));
    }
    if !pattern.is_tiled() {
        return Err(Error::InvalidArgument("in-band I_total needs a quadrant-tiled pattern".into()));
    }
    let open = pattern.base_sum();
    if open == 0.0 {
        return Err(Error::InvalidArgument("base quadrant is fully opaque".into()));
    }
    Ok(meas.sum() / open)
}

/// `D = 2 D_raw - g · I_total`, where `g` is the number of full-grid
/// readings summed into each measurement (4 for B, 1 otherwise).
pub fn convert_measurements(meas: &MeasurementSet, i_total: f64) -> Result<MeasurementSet> {
    if meas.stage != Stage::Raw {
        return Err(Error::WrongMeasurements {
            expected: "raw".into(),
            got: meas.stage.name().into(),
        });
    }
    if !(i_total.is_finite() && i_total >= 0.0) {
        return Err(Error::InvalidArgument(format!("I_total must be >= 0, got {i_total}")));
    }
    let offset = meas.architecture.aggregation() as f64 * i_total;
    Ok(MeasurementSet {
        values: meas.values.iter().map(|&v| 2.0 * v - offset).collect(),
        image_dims: meas.image_dims,
        architecture: meas.architecture,
        stage: Stage::Converted,
        i_total: Some(i_total),
    })
}
