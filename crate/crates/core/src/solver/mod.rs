//! Total-variation reconstruction.

mod reconstruct;
pub mod tv;

pub use reconstruct::{
    operator_norm, reconstruct, solve_tv, ReconResult, SolverConfig, TraceEntry,
};
pub use tv::{div, grad, shrink2, tv_norm};
