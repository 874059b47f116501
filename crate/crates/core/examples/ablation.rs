//! Cross-validate the full model, the model without attention and the
//! post-activation variant on one subject with uneven channel noise.
//!
//! Slow; run in release mode.

use acpa_eeg::harness::{ablation_study, build_subject, DatasetConfig, TrainConfig};
use acpa_eeg::nn::ModelConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dcfg = DatasetConfig {
        per_subject: 160,
        ..DatasetConfig::heterogeneous()
    };
    let ds = build_subject(1, 9, &dcfg)?;
    let model = ModelConfig {
        stem_channels: 8,
        stages: vec![(8, 1), (16, 1)],
        cbam_reduction: 4,
        fc_hidden: 32,
        ..ModelConfig::default()
    };
    let train = TrainConfig {
        epochs: 5,
        verbose: true,
        ..TrainConfig::default()
    };
    let report = ablation_study(&model, &ds, 4, &train, 0)?;
    print!("{}", report.to_text());
    Ok(())
}
