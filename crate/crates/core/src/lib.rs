//! Sparse identification of second-order pressure dynamics from paired
//! pressure/velocity time series.
//!
//! The pipeline runs ingest → preprocess → differentiate → candidate library →
//! sequentially thresholded least squares → forward simulation and validation
//! → softmax classification of the identified `(a, b, ε)` parameters.

pub mod classify;
pub mod cli;
mod error;
pub mod library;
mod linalg;
pub mod signal;
pub mod sim;
pub mod stls;
pub mod synth;

pub use error::{Error, Result};
pub use library::{
    build_design_matrix, default_library, linear_library, DesignMatrix, LibrarySpec, TermSpec,
};
pub use signal::{
    differentiate, lowpass_filter, subtract_mean, ClassLabel, DerivativeSet, SignalPair,
    SurgeryPhase, TimeSeries,
};
pub use sim::{rmse, simulate, SimResult};
pub use stls::{
    extract_linear, identify, least_squares, stls_fit, threshold_sweep, FitConfig, LinearParams,
    SparseModel, StlsOptions,
};
pub use synth::{generate, Forcing, GeneratorModel, GeneratorSpec};
