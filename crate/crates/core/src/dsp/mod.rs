//! Preprocessing chain from raw microvolts to per-epoch STFT features.

mod epoch;
mod features_io;
mod filter;
mod ica;
mod pipeline;
mod stft;

pub use epoch::{normalize_epoch, segment_epochs, Epoch, Segmentation, NORMALIZE_EPS};
pub use features_io::{
    load_features, read_features, save_features, write_features, FEAT_MAGIC, FEAT_VERSION, UNLABELED,
};
pub use filter::{apply_filter, design_bandpass, filtfilt, Biquad, FilterSpec, SosCascade, SosState};
pub use ica::{
    correlation, excess_kurtosis, fit_ica, flag_components, remove_artifact_components, remove_components,
    ArtifactPolicy, IcaConfig, IcaModel,
};
pub use pipeline::{preprocess_session, IcaSummary, PreprocessConfig, Preprocessed, Preprocessor};
pub use stft::{stft_features, FeatureTensor, StftConfig, StftExtractor};

use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("epoch has {got} samples, expected {expected}")]
    BadEpochLength { expected: usize, got: usize },
    #[error("covariance is rank deficient (min eigenvalue {min_eigenvalue:e}, max {max_eigenvalue:e})")]
    RankDeficient { min_eigenvalue: f64, max_eigenvalue: f64 },
    #[error("need at least {needed} samples per channel, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("not a feature file (bad magic)")]
    BadMagic,
    #[error("unsupported feature file version {0}")]
    BadVersion(u16),
    #[error("unknown label id {0}")]
    BadLabel(u8),
    #[error("truncated {0}")]
    Truncated(&'static str),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}
