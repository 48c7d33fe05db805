//! Multiclass kernel SVM on extracted feature vectors.

mod features;
mod kernel;
mod multiclass;
mod smo;

pub use features::{
    decode_features, encode_features, read_features, write_features, FeatureMatrix, FEATURE_MAGIC,
    FEATURE_VERSION,
};
pub use kernel::{kernel_eval, KernelKind, KernelSpec};
pub use multiclass::{
    benchmark_csv, benchmark_kernels, default_gamma, parse_benchmark_csv, resolve_votes,
    train_multiclass, KernelScore, Standardizer, SvmModel,
};
pub use smo::{
    dual_objective_full, kkt_violations, smo_train_binary, BinarySvm, SmoConfig, DEFAULT_TOL,
};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("SMO did not converge after {iterations} updates: {violations} KKT violations remain")]
    Convergence { violations: usize, iterations: usize },
    #[error("invalid SVM setting: {0}")]
    Config(String),
    #[error("label {0} outside the 11-class vocabulary")]
    Label(usize),
    #[error("feature format error: {0}")]
    Format(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}
