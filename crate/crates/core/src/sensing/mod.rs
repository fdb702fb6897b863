//! Tiled modulator patterns, the shift-based sensing operator, detector
//! read-out architectures and the 0/1 to ±1 measurement conversion.

mod correlate;
pub mod explicit;
pub mod measurement;
pub mod operator;
pub mod pattern;

pub use explicit::{build_explicit_matrix, EXPLICIT_MAX_PIXELS};
pub use measurement::{
    convert_measurements, downsample, downsample_a, downsample_b, i_total_in_band, Architecture,
    MeasurementSet, Stage,
};
pub use operator::{
    acquire_raw, conversion_operator, correlate_valid, ideal_detector_plane, make_operator, open_shot_total, Mode,
    SensingOperator,
};
pub use pattern::{ModulatorPattern, PRNG_NAME};
