//! One-shot parallel compressive imaging: tiled random modulator patterns,
//! shift-based sensing with diffraction blur, 0/1 to ±1 measurement
//! conversion, total-variation reconstruction and the camera comparison
//! experiment.

pub mod artifact;
pub mod config;
pub mod error;
pub mod grid;
pub mod harness;
pub mod image_io;
pub mod linop;
pub mod optics;
pub mod sensing;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{Grid, ImagePlane};
pub use image_io::{block_average, load_image, make_phantom, save_image, PhantomKind};
pub use linop::{DenseMatrix, LinearOperator, SignMatrix};
pub use optics::{blur_pattern, compute_psf, OpticsConfig, Psf, PsfReport};
pub use sensing::{
    acquire_raw, build_explicit_matrix, convert_measurements, downsample_a, downsample_b,
    i_total_in_band, make_operator, Architecture, MeasurementSet, Mode, ModulatorPattern,
    SensingOperator, Stage,
};
pub use solver::{reconstruct, solve_tv, tv_norm, ReconResult, SolverConfig};
