//! Measurement files: a text header of `key=value` lines closed by an
//! empty line, followed by the values as little-endian `f64`.
//!
//! ```text
//! shiftcam-measurements 1
//! architecture=B
//! ...
//! count=4096
//!
//! <count * 8 bytes>
//! ```
//!
//! Floating point header values use the shortest representation that reads
//! back to the same bits.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sensing::{Architecture, MeasurementSet, Stage};

pub const MAGIC: &str = "shiftcam-measurements 1";

/// A measurement set with the provenance needed to rebuild its operator.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementArtifact {
    pub measurements: MeasurementSet,
    pub seed: u64,
    pub prng: String,
    /// SHA-256 of the PSF, or `none` without diffraction.
    pub psf_hash: String,
    /// Further provenance, written in key order.
    pub extra: BTreeMap<String, String>,
}

const RESERVED: &[&str] = &["architecture", "stage", "rows", "cols", "seed", "prng", "psf_hash", "i_total", "count"];

impl MeasurementArtifact {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let m = &self.measurements;
        let mut head = format!(
            "{MAGIC}\narchitecture={}\nstage={}\nrows={}\ncols={}\nseed={}\nprng={}\npsf_hash={}\n",
            m.architecture.name(),
            m.stage.name(),
            m.image_dims.0,
            m.image_dims.1,
            self.seed,
            self.prng,
            self.psf_hash
        );
        if let Some(t) = m.i_total {
            head.push_str(&format!("i_total={t:?}\n"));
        }
        for (k, v) in &self.extra {
            if RESERVED.contains(&k.as_str()) || k.contains(['=', '\n']) || v.contains('\n') || k.is_empty() {
                return Err(Error::Artifact(format!("invalid header entry '{k}'")));
            }
            head.push_str(&format!("{k}={v}\n"));
        }
        head.push_str(&format!("count={}\n\n", m.values.len()));
        let mut out = head.into_bytes();
        for v in &m.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |what: String| Error::Artifact(what);
        let end = bytes
            .windows(2)
            .position(|w| w == b"\n\n")
            .ok_or_else(|| bad("header is not terminated by an empty line".into()))?;
        let head = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("header is not UTF-8".into()))?;
        let payload = &bytes[end + 2..];
        let mut lines = head.lines();
        if lines.next() != Some(MAGIC) {
            return Err(bad(format!("missing '{MAGIC}' line")));
        }
        let mut fields = BTreeMap::new();
        for line in lines {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("malformed header line '{line}'")))?;
            if fields.insert(k.to_string(), v.to_string()).is_some() {
                return Err(bad(format!("duplicate header key '{k}'")));
            }
        }
        let mut take = |k: &str| fields.remove(k).ok_or_else(|| bad(format!("header lacks '{k}'")));
        let num = |k: &str, v: String| -> Result<u64> { v.parse().map_err(|_| bad(format!("{k}: bad number '{v}'"))) };
        let architecture: Architecture = take("architecture")?.parse().map_err(|e| bad(format!("{e}")))?;
        let stage: Stage = take("stage")?.parse().map_err(|e| bad(format!("{e}")))?;
        let rows = num("rows", take("rows")?)? as usize;
        let cols = num("cols", take("cols")?)? as usize;
        let seed = num("seed", take("seed")?)?;
        let prng = take("prng")?;
        let psf_hash = take("psf_hash")?;
        let count = num("count", take("count")?)? as usize;
        let i_total = match fields.remove("i_total") {
            Some(v) => Some(v.parse::<f64>().map_err(|_| bad(format!("i_total: bad number '{v}'")))?),
            None => None,
        };
        if payload.len() != count * 8 {
            return Err(bad(format!("payload has {} bytes, header declares {count} values", payload.len())));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite value in payload".into()));
        }
        let mut measurements =
            MeasurementSet::new(values, (rows, cols), architecture, stage).map_err(|e| bad(e.to_string()))?;
        measurements.i_total = i_total;
        Ok(MeasurementArtifact {
            measurements,
            seed,
            prng,
            psf_hash,
            extra: fields,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MeasurementArtifact {
        let mut m = MeasurementSet::new(vec![0.1, -2.5, 1e-300, 7.0], (4, 4), Architecture::B, Stage::Raw).unwrap();
        m.i_total = Some(0.1 + 0.2);
        let mut extra = BTreeMap::new();
        extra.insert("image".to_string(), "phantom:disk".to_string());
        MeasurementArtifact {
            measurements: m,
            seed: 42,
            prng: "chacha8-u64-lsb".into(),
            psf_hash: "none".into(),
            extra,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let a = sample();
        let bytes = a.to_bytes().unwrap();
        let b = MeasurementArtifact::from_bytes(&bytes).unwrap();
        assert_eq!(a, b);
        assert_eq!(b.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = sample().to_bytes().unwrap();
        let text = String::from_utf8_lossy(&bytes).into_owned();
        assert!(MeasurementArtifact::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(MeasurementArtifact::from_bytes(&bytes[1..]).is_err());
        let header_end = text.find("\n\n").unwrap();
        let swapped = text[..header_end].replace("architecture=B", "architecture=Q");
        let mut b2 = swapped.into_bytes();
        b2.extend_from_slice(&bytes[header_end..]);
        assert!(matches!(MeasurementArtifact::from_bytes(&b2), Err(Error::Artifact(_))));
        assert!(MeasurementArtifact::from_bytes(b"shiftcam-measurements 1\nrows=4").is_err());
    }

    #[test]
    fn reserved_extra_keys_rejected() {
        let mut a = sample();
        a.extra.insert("seed".into(), "1".into());
        assert!(a.to_bytes().is_err());
    }
}
