use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::HarnessError;
use crate::codec::AdcConfig;
use crate::dsp::{FeatureTensor, PreprocessConfig, Preprocessor};
use crate::nn::Tensor;
use crate::sim::{generate_session, quantize_through_codec, session_events, to_recording, EmotionLabel, SimConfig};

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Synthetic { seed: u64, config: DatasetConfig },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<FeatureTensor>,
    pub subject_id: usize,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Result<Vec<usize>, HarnessError> {
        self.samples
            .iter()
            .enumerate()
            .map(|(i, s)| s.label.map(|l| l.id() as usize).ok_or(HarnessError::Unlabeled(i)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub per_subject: usize,
    /// Epochs cut from each simulated recording session. Sessions have their
    /// own seeds, so samples vary between sessions as well as within them.
    pub epochs_per_session: usize,
    /// Seconds of signal before the first event.
    pub lead_in: f64,
    /// Each subject scales every class's alpha and beta power by its own
    /// factor drawn from `1 +- profile_jitter`.
    pub profile_jitter: f64,
    /// Per-subject, per-channel sensor noise gains are drawn log-uniformly
    /// from this range. `(1, 1)` gives homogeneous noise.
    pub noise_gain_range: (f64, f64),
    /// Base simulator settings; label, powers, seed, duration and noise gains
    /// are overwritten per session.
    pub sim: SimConfig,
    pub preprocess: PreprocessConfig,
    /// Pass the simulated signal through the 24-bit frame codec first.
    pub quantize: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            per_subject: 950,
            epochs_per_session: 10,
            lead_in: 2.0,
            profile_jitter: 0.2,
            noise_gain_range: (1.0, 1.0),
            sim: SimConfig::default(),
            preprocess: PreprocessConfig::default(),
            quantize: true,
        }
    }
}

impl DatasetConfig {
    /// Channel-heterogeneous sensor noise, gains spread over 1..16.
    pub fn heterogeneous() -> Self {
        Self {
            noise_gain_range: (1.0, 16.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let (lo, hi) = self.noise_gain_range;
        if self.epochs_per_session == 0 || !(0.0..1.0).contains(&self.profile_jitter) || !(lo > 0.0 && lo <= hi) {
            return Err(HarnessError::InvalidConfig(format!(
                "epochs_per_session {}, profile_jitter {}, noise_gain_range {:?}",
                self.epochs_per_session, self.profile_jitter, self.noise_gain_range
            )));
        }
        Ok(())
    }
}

/// `total` split over 4 classes, the first `total % 4` classes one larger.
pub fn class_counts(total: usize) -> [usize; 4] {
    std::array::from_fn(|c| total / 4 + usize::from(c < total % 4))
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 over the three words
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One subject: per-class sessions through the simulator, the codec and the
/// preprocessing chain. Samples are ordered by class, then session.
pub fn build_subject(subject: usize, seed: u64, cfg: &DatasetConfig) -> Result<Dataset, HarnessError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, subject as u64, 0));
    let j = cfg.profile_jitter;
    let jitter: Vec<(f64, f64)> = (0..4)
        .map(|_| (rng.random_range(1.0 - j..=1.0 + j), rng.random_range(1.0 - j..=1.0 + j)))
        .collect();
    let (lo, hi) = cfg.noise_gain_range;
    let gains: [f64; 8] = std::array::from_fn(|_| {
        if lo == hi {
            lo
        } else {
            (rng.random_range(lo.ln()..hi.ln())).exp()
        }
    });

    let pre = Preprocessor::new(cfg.preprocess.clone())?;
    let epoch_len = cfg.preprocess.stft.epoch_len();
    let adc = AdcConfig::default();
    let mut samples = Vec::with_capacity(cfg.per_subject);
    for (c, label) in EmotionLabel::ALL.into_iter().enumerate() {
        let want = class_counts(cfg.per_subject)[c];
        let mut got = 0;
        let mut session = 0u64;
        while got < want {
            let n_epochs = cfg.epochs_per_session.min(want - got);
            let (alpha, beta) = label.default_profile();
            let mut sim = cfg.sim.clone();
            sim.class_label = label;
            sim.alpha_band_power = alpha * jitter[c].0;
            sim.beta_band_power = beta * jitter[c].1;
            sim.channel_noise_gain = gains;
            sim.seed = mix(seed, subject as u64 + 1, (c as u64) << 32 | session);
            let lead_in = (cfg.lead_in * sim.fs).round() as usize;
            sim.duration = (lead_in + n_epochs * epoch_len + 1) as f64 / sim.fs;
            let (mut signal, _) = generate_session(&sim);
            if cfg.quantize {
                signal = to_recording(&quantize_through_codec(&signal, &adc)?, sim.fs).to_signal();
            }
            let mut events = session_events(signal.len(), lead_in, epoch_len, label);
            events.truncate(n_epochs);
            let out = pre.run(&signal, &events)?;
            got += out.features.len();
            samples.extend(out.features);
            session += 1;
        }
    }
    Ok(Dataset {
        samples,
        subject_id: subject,
        provenance: Provenance::Synthetic {
            seed,
            config: cfg.clone(),
        },
    })
}

/// `n_subjects` independent subjects.
pub fn build_synthetic_dataset(n_subjects: usize, seed: u64, cfg: &DatasetConfig) -> Result<Vec<Dataset>, HarnessError> {
    (0..n_subjects).map(|s| build_subject(s, seed, cfg)).collect()
}

/// Same samples with labels shuffled among them: the chance-level control.
pub fn permute_labels(ds: &Dataset, seed: u64) -> Dataset {
    let mut labels: Vec<Option<EmotionLabel>> = ds.samples.iter().map(|s| s.label).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = ds.clone();
    for (s, l) in out.samples.iter_mut().zip(labels) {
        s.label = l;
    }
    out
}

/// Stacks the selected samples into a `(B, C, bins, frames)` tensor.
pub fn to_batch(samples: &[FeatureTensor], idx: &[usize]) -> Result<Tensor, HarnessError> {
    let Some(first) = idx.first().map(|&i| &samples[i]) else {
        return Err(HarnessError::TooFewSamples { needed: 1, got: 0 });
    };
    let shape = first.shape();
    let mut data = Vec::with_capacity(idx.len() * first.data.len());
    for &i in idx {
        let s = &samples[i];
        if s.shape() != shape {
            return Err(HarnessError::InvalidConfig(format!(
                "sample {i} has shape {:?}, expected {shape:?}",
                s.shape()
            )));
        }
        data.extend(s.data.iter().map(|&v| v as f64));
    }
    Ok(Tensor::from_vec(&[idx.len(), shape[0], shape[1], shape[2]], data)?)
}
