//! Layered `key=value` configuration with dotted section names.
//!
//! Layers apply in order file, environment, command line; later layers
//! override earlier ones. Environment variables are `SHIFTCAM_` followed by
//! the key in upper case with `.` written as `__`, e.g.
//! `SHIFTCAM_OPTICS__WAVELENGTH`. Unknown keys are errors in every layer.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::harness::{Camera, ExperimentConfig, ImageSource, MseResolution};
use crate::optics::OpticsConfig;
use crate::solver::SolverConfig;

pub const ENV_PREFIX: &str = "SHIFTCAM_";

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("optics.wavelength", "wavelength in meters"),
    ("optics.pixel_pitch", "modulator and detector pixel pitch in meters"),
    ("optics.propagation_distance", "modulator to detector distance in meters"),
    ("optics.modulator_side", "modulator side length in meters"),
    ("optics.kernel_radius", "PSF half-width in pixels"),
    ("optics.oversampling", "initial sub-samples per pixel of the PSF quadrature"),
    ("solver.max_outer_iters", "multiplier updates"),
    ("solver.max_inner_iters", "gradient steps per multiplier update"),
    ("solver.penalty_tv", "initial weight of |grad x - w|^2"),
    ("solver.penalty_fidelity", "initial weight of |Ax - b|^2"),
    ("solver.continuation_factor", "penalty growth per continuation step"),
    ("solver.continuation_steps", "outer iterations with penalty growth"),
    ("solver.tol_rel_change", "stop when x changes less than this, relatively"),
    ("solver.tol_residual", "and the relative residual is at most this"),
    ("solver.nonneg", "clamp x at zero"),
    ("experiment.images", "comma-separated image files or phantom:<flat|quadrants|disk>"),
    ("experiment.target_dims", "reconstruction size, e.g. 128x128"),
    ("experiment.trials", "random trials per image and camera"),
    ("experiment.seed_base", "seed of trial 0; trial t uses seed_base + t"),
    ("experiment.cameras", "comma-separated subset of classic_full,classic_half,sequential_ci,parallel_A,parallel_B"),
    ("experiment.budget", "measurements per compressive camera"),
    ("experiment.diffraction", "blur the parallel cameras with the PSF"),
    ("experiment.mse_resolution", "reference or original"),
    ("experiment.record_timing", "fill the wall_ms column"),
    ("io.out_dir", "directory for outputs"),
    ("verbosity", "0 warnings, 1 info, 2 debug"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalConfig {
    pub optics: OpticsConfig,
    pub solver: SolverConfig,
    /// Experiment settings; its `optics` and `solver` are replaced by the
    /// top-level sections in [`GlobalConfig::experiment`].
    pub experiment: ExperimentConfig,
    pub out_dir: PathBuf,
    pub verbosity: u8,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        GlobalConfig {
            optics: OpticsConfig::default(),
            solver: SolverConfig::default(),
            experiment: ExperimentConfig::default(),
            out_dir: PathBuf::from("out"),
            verbosity: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got '{value}'"))),
    }
}

fn parse_dims(key: &str, value: &str) -> Result<(usize, usize)> {
    let v = value.trim();
    let (a, b) = v.split_once(['x', 'X']).unwrap_or((v, v));
    Ok((parse(key, a)?, parse(key, b)?))
}

fn parse_list<T: FromStr<Err = Error>>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e: Error| Error::Config(format!("{key}: {e}"))))
        .collect()
}

fn fmt_list<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl GlobalConfig {
    /// Set one key. `origin` only feeds the debug log.
    pub fn set(&mut self, key: &str, value: &str, origin: &str) -> Result<()> {
        let k = key.trim();
        match k {
            "optics.wavelength" => self.optics.wavelength = parse(k, value)?,
            "optics.pixel_pitch" => self.optics.pixel_pitch = parse(k, value)?,
            "optics.propagation_distance" => self.optics.propagation_distance = parse(k, value)?,
            "optics.modulator_side" => self.optics.modulator_side = parse(k, value)?,
            "optics.kernel_radius" => self.optics.kernel_radius = parse(k, value)?,
            "optics.oversampling" => self.optics.oversampling = parse(k, value)?,
            "solver.max_outer_iters" => self.solver.max_outer_iters = parse(k, value)?,
            "solver.max_inner_iters" => self.solver.max_inner_iters = parse(k, value)?,
            "solver.penalty_tv" => self.solver.penalty_tv = parse(k, value)?,
            "solver.penalty_fidelity" => self.solver.penalty_fidelity = parse(k, value)?,
            "solver.continuation_factor" => self.solver.continuation_factor = parse(k, value)?,
            "solver.continuation_steps" => self.solver.continuation_steps = parse(k, value)?,
            "solver.tol_rel_change" => self.solver.tol_rel_change = parse(k, value)?,
            "solver.tol_residual" => self.solver.tol_residual = parse(k, value)?,
            "solver.nonneg" => self.solver.nonneg = parse_bool(k, value)?,
            "experiment.images" => self.experiment.images = parse_list::<ImageSource>(k, value)?,
            "experiment.target_dims" => self.experiment.target_dims = parse_dims(k, value)?,
            "experiment.trials" => self.experiment.trials = parse(k, value)?,
            "experiment.seed_base" => self.experiment.seed_base = parse(k, value)?,
            "experiment.cameras" => self.experiment.cameras = parse_list::<Camera>(k, value)?,
            "experiment.budget" => self.experiment.budget = parse(k, value)?,
            "experiment.diffraction" => self.experiment.diffraction = parse_bool(k, value)?,
            "experiment.mse_resolution" => {
                self.experiment.mse_resolution =
                    value.trim().parse::<MseResolution>().map_err(|e| Error::Config(format!("{k}: {e}")))?
            }
            "experiment.record_timing" => self.experiment.record_timing = parse_bool(k, value)?,
            "io.out_dir" => self.out_dir = PathBuf::from(value.trim()),
            "verbosity" => self.verbosity = parse(k, value)?,
            _ => return Err(Error::Config(format!("unknown key '{k}' (from {origin})"))),
        }
        log::debug!("{k} = {} (from {origin})", value.trim());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let o = &self.optics;
        let s = &self.solver;
        let e = &self.experiment;
        Some(match key {
            "optics.wavelength" => format!("{:?}", o.wavelength),
            "optics.pixel_pitch" => format!("{:?}", o.pixel_pitch),
            "optics.propagation_distance" => format!("{:?}", o.propagation_distance),
            "optics.modulator_side" => format!("{:?}", o.modulator_side),
            "optics.kernel_radius" => o.kernel_radius.to_string(),
            "optics.oversampling" => o.oversampling.to_string(),
            "solver.max_outer_iters" => s.max_outer_iters.to_string(),
            "solver.max_inner_iters" => s.max_inner_iters.to_string(),
            "solver.penalty_tv" => format!("{:?}", s.penalty_tv),
            "solver.penalty_fidelity" => format!("{:?}", s.penalty_fidelity),
            "solver.continuation_factor" => format!("{:?}", s.continuation_factor),
            "solver.continuation_steps" => s.continuation_steps.to_string(),
            "solver.tol_rel_change" => format!("{:?}", s.tol_rel_change),
            "solver.tol_residual" => format!("{:?}", s.tol_residual),
            "solver.nonneg" => s.nonneg.to_string(),
            "experiment.images" => fmt_list(&e.images),
            "experiment.target_dims" => format!("{}x{}", e.target_dims.0, e.target_dims.1),
            "experiment.trials" => e.trials.to_string(),
            "experiment.seed_base" => e.seed_base.to_string(),
            "experiment.cameras" => fmt_list(&e.cameras),
            "experiment.budget" => e.budget.to_string(),
            "experiment.diffraction" => e.diffraction.to_string(),
            "experiment.mse_resolution" => e.mse_resolution.name().to_string(),
            "experiment.record_timing" => e.record_timing.to_string(),
            "io.out_dir" => self.out_dir.display().to_string(),
            "verbosity" => self.verbosity.to_string(),
            _ => return None,
        })
    }

    /// All keys with their current values, one `key=value` per line, in the
    /// file format accepted by [`GlobalConfig::apply_text`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, _) in KEYS {
            let _ = writeln!(s, "{k}={}", self.get(k).unwrap_or_default());
        }
        s
    }

    /// Apply `key=value` lines. `#` starts a comment; blank lines are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{origin}:{}: expected key=value", no + 1)))?;
            self.set(k, v, &format!("{origin}:{}", no + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Apply `SHIFTCAM_*` variables from `vars`, in sorted order.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<()> {
        let mut found: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|rest| (rest.to_string(), v)))
            .collect();
        found.sort();
        for (rest, v) in found {
            let key = rest.to_ascii_lowercase().replace("__", ".");
            self.set(&key, &v, &format!("environment {ENV_PREFIX}{rest}"))?;
        }
        Ok(())
    }

    /// Experiment settings with the top-level optics and solver sections.
    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            optics: self.optics.clone(),
            solver: self.solver.clone(),
            ..self.experiment.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.optics.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.solver.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

/// Environment key for a dotted config key.
pub fn env_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.to_ascii_uppercase().replace('.', "__"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_round_trips() {
        let cfg = GlobalConfig::default();
        for (k, _) in KEYS {
            let v = cfg.get(k).unwrap_or_else(|| panic!("no getter for {k}"));
            let mut c2 = GlobalConfig::default();
            c2.set(k, &v, "test").unwrap_or_else(|e| panic!("{k}={v}: {e}"));
            assert_eq!(c2, cfg, "{k}");
        }
        let mut c3 = GlobalConfig::default();
        c3.apply_text(&cfg.to_text(), "text").unwrap();
        assert_eq!(c3, cfg);
    }

    #[test]
    fn unknown_keys_and_bad_values_fail() {
        let mut c = GlobalConfig::default();
        assert!(matches!(c.set("optics.wavelenght", "1", "t"), Err(Error::Config(_))));
        assert!(c.set("solver.nonneg", "maybe", "t").is_err());
        assert!(c.set("solver.max_outer_iters", "-3", "t").is_err());
        assert!(c.apply_text("no equals sign", "t").is_err());
        assert!(c.apply_env([("SHIFTCAM_BOGUS".to_string(), "1".to_string())]).is_err());
        assert!(c.set("experiment.cameras", "classic_full,nope", "t").is_err());
    }

    #[test]
    fn layers_apply_in_order() {
        let mut c = GlobalConfig::default();
        c.apply_text("solver.max_outer_iters = 7 # file\noptics.kernel_radius=3\n\n", "file").unwrap();
        c.apply_env([
            (env_name("solver.max_outer_iters"), "9".to_string()),
            ("PATH".to_string(), "/bin".to_string()),
        ])
        .unwrap();
        assert_eq!(c.solver.max_outer_iters, 9);
        assert_eq!(c.optics.kernel_radius, 3);
        c.set("solver.max_outer_iters", "11", "flag").unwrap();
        assert_eq!(c.solver.max_outer_iters, 11);
        assert_eq!(c.experiment().solver.max_outer_iters, 11);
    }

    #[test]
    fn lists_and_dims() {
        let mut c = GlobalConfig::default();
        c.set("experiment.images", "a.pgm, phantom:disk", "t").unwrap();
        assert_eq!(c.experiment.images.len(), 2);
        c.set("experiment.target_dims", "64", "t").unwrap();
        assert_eq!(c.experiment.target_dims, (64, 64));
        c.set("experiment.cameras", "parallel_B,classic_full", "t").unwrap();
        assert_eq!(c.experiment.cameras, vec![Camera::ParallelB, Camera::ClassicFull]);
        assert_eq!(env_name("optics.kernel_radius"), "SHIFTCAM_OPTICS__KERNEL_RADIUS");
    }
}
