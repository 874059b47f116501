//! Session-level preprocessing: ICA cleanup, band-pass, segmentation,
//! z-scoring and STFT features.
//!
//! ICA is fitted on the unfiltered session. The band-pass strips most of a
//! blink's energy (it sits below 5 Hz) and with it the sparsity that the
//! kurtosis rule keys on. Both steps are linear (one spatial, one per-channel
//! and identical across channels) so they commute; only where the model is
//! fitted changes.

use crate::signal::Signal;
use crate::sim::EmotionLabel;

use super::epoch::{normalize_epoch, segment_epochs};
use super::filter::{apply_filter, design_bandpass, filtfilt, FilterSpec, SosCascade};
use super::ica::{fit_ica, remove_artifact_components, ArtifactPolicy, IcaConfig};
use super::stft::{FeatureTensor, StftConfig, StftExtractor};
use super::DspError;

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub filter: FilterSpec,
    /// Forward-backward filtering instead of the causal default.
    pub zero_phase: bool,
    /// `None` skips artifact removal.
    pub ica: Option<IcaConfig>,
    pub artifact: ArtifactPolicy,
    pub normalize: bool,
    pub stft: StftConfig,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            filter: FilterSpec::default(),
            zero_phase: false,
            ica: Some(IcaConfig::default()),
            artifact: ArtifactPolicy::default(),
            normalize: true,
            stft: StftConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcaSummary {
    pub removed: Vec<usize>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub features: Vec<FeatureTensor>,
    pub skipped: Vec<(usize, EmotionLabel)>,
    pub ica: Option<IcaSummary>,
}

/// Designed filter plus FFT plan, reusable across sessions.
pub struct Preprocessor {
    cfg: PreprocessConfig,
    sos: SosCascade,
    stft: StftExtractor,
}

impl Preprocessor {
    pub fn new(cfg: PreprocessConfig) -> Result<Self, DspError> {
        let sos = design_bandpass(&cfg.filter)?;
        let stft = StftExtractor::new(cfg.stft)?;
        Ok(Self { cfg, sos, stft })
    }

    pub fn config(&self) -> &PreprocessConfig {
        &self.cfg
    }

    pub fn sos(&self) -> &SosCascade {
        &self.sos
    }

    /// ICA artifact removal over the whole session (if enabled), then band-pass.
    pub fn clean(&self, signal: &Signal) -> Result<(Signal, Option<IcaSummary>), DspError> {
        let (cleaned, summary) = match &self.cfg.ica {
            None => (signal.data.clone(), None),
            Some(ica_cfg) => {
                let model = fit_ica(&signal.data, ica_cfg)?;
                let (cleaned, removed) = remove_artifact_components(&model, &signal.data, &self.cfg.artifact);
                let summary = IcaSummary {
                    removed,
                    converged: model.converged,
                    iterations: model.iterations,
                };
                (cleaned, Some(summary))
            }
        };
        let filtered = if self.cfg.zero_phase {
            filtfilt(&self.sos, &cleaned)
        } else {
            apply_filter(&self.sos, &cleaned)
        };
        Ok((Signal { fs: signal.fs, data: filtered }, summary))
    }

    pub fn run(&self, signal: &Signal, events: &[(usize, EmotionLabel)]) -> Result<Preprocessed, DspError> {
        let (cleaned, ica) = self.clean(signal)?;
        let seg = segment_epochs(&cleaned, events, self.cfg.stft.epoch_len());
        let features = seg
            .epochs
            .iter()
            .map(|e| {
                if self.cfg.normalize {
                    self.stft.features(&normalize_epoch(e))
                } else {
                    self.stft.features(e)
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(Preprocessed {
            features,
            skipped: seg.skipped,
            ica,
        })
    }
}

pub fn preprocess_session(
    signal: &Signal,
    events: &[(usize, EmotionLabel)],
    cfg: &PreprocessConfig,
) -> Result<Preprocessed, DspError> {
    Preprocessor::new(cfg.clone())?.run(signal, events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_session, session_events, SimConfig};

    #[test]
    fn session_to_features() {
        let cfg = SimConfig::for_class(EmotionLabel::Sorrow, 3, 30.0);
        let (signal, _) = generate_session(&cfg);
        let events = session_events(signal.len(), 500, 2240, EmotionLabel::Sorrow);
        let out = preprocess_session(&signal, &events, &PreprocessConfig::default()).unwrap();
        assert_eq!(out.features.len(), events.len());
        for t in &out.features {
            assert_eq!(t.shape(), [8, 16, 63]);
            assert!(t.is_finite());
            assert_eq!(t.label, Some(EmotionLabel::Sorrow));
        }
        let again = preprocess_session(&signal, &events, &PreprocessConfig::default()).unwrap();
        assert_eq!(out, again);
    }
}
