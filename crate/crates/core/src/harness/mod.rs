//! Per-subject datasets, stratified k-fold cross-validation, the training
//! loop and the architecture ablation.

use std::io;

use thiserror::Error;

use crate::dsp::DspError;
use crate::nn::NnError;
use crate::sim::SimError;

mod dataset;
mod folds;
mod report;
mod train;

pub use dataset::{
    build_subject, build_synthetic_dataset, class_counts, permute_labels, to_batch, Dataset, DatasetConfig, Provenance,
};
pub use folds::{kfold_split, FoldPlan};
pub use report::{mean_std, AblationReport, Confusion, EvalReport, SubjectSummary};
pub use train::{ablation_study, config_echo, cross_validate, evaluate, train_fold, FoldResult, TrainConfig};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("invalid harness configuration: {0}")]
    InvalidConfig(String),
    #[error("sample {0} has no label")]
    Unlabeled(usize),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] io::Error),
}
