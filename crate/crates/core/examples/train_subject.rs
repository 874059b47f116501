//! Build a small synthetic subject and cross-validate a compact model on it.
//!
//! Takes a few minutes in release mode: `cargo run --release --example train_subject`.

use acpa_eeg::harness::{build_subject, cross_validate, DatasetConfig, TrainConfig};
use acpa_eeg::nn::ModelConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dcfg = DatasetConfig {
        per_subject: 200,
        ..DatasetConfig::default()
    };
    let ds = build_subject(0, 5, &dcfg)?;
    println!("{} samples of shape {:?}", ds.len(), ds.samples[0].shape());

    let model = ModelConfig {
        stem_channels: 8,
        stages: vec![(8, 1), (16, 1)],
        cbam_reduction: 4,
        fc_hidden: 32,
        ..ModelConfig::default()
    };
    let train = TrainConfig {
        epochs: 6,
        verbose: true,
        ..TrainConfig::default()
    };
    let report = cross_validate(&model, &ds, 5, &train, 0)?;
    print!("{}", report.to_text());
    Ok(())
}
