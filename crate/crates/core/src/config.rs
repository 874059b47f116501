//! Run configuration for the command-line tool.
//!
//! A flat `key = value` file. Every key has a default listed in [`KEYS`];
//! unknown keys are rejected. Values are layered: built-in defaults, then the
//! config file, then command-line flags.

use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Duration;

use thiserror::Error;

use crate::codec::{AdcConfig, CodecError};
use crate::dsp::{ArtifactPolicy, FilterSpec, IcaConfig, PreprocessConfig, StftConfig};
use crate::harness::{DatasetConfig, TrainConfig};
use crate::kv::{KvDoc, KvError};
use crate::nn::{parse_stages, ModelConfig, NnError};
use crate::sim::{EmotionLabel, SimConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: {reason}")]
    BadValue { key: String, reason: String },
    #[error("expected KEY=VALUE, got `{0}`")]
    BadOverride(String),
    #[error("config file: {0}")]
    Kv(#[from] KvError),
    #[error("config file: {0}")]
    Io(#[from] std::io::Error),
}

/// `(key, default, description)`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "master seed for simulation, fold assignment and initialisation"),
    ("sim.fs", "250", "sample rate in Hz"),
    ("sim.duration", "60", "session length in seconds"),
    ("sim.class", "calmness", "simulated emotion class"),
    ("sim.alpha_band_power", "auto", "uV^2 in 8-13 Hz; auto uses the class profile"),
    ("sim.beta_band_power", "auto", "uV^2 in 13-18 Hz; auto uses the class profile"),
    ("sim.pink_noise_rms", "5", "background pink noise rms in uV"),
    ("sim.sensor_noise_rms", "0.5", "independent per-electrode noise rms in uV"),
    ("sim.mains_freq", "50", "mains frequency in Hz"),
    ("sim.mains_amp", "10", "mains amplitude in uV"),
    ("sim.blink_rate", "12", "blinks per minute"),
    ("sim.blink_amp", "150", "blink peak in uV"),
    ("sim.amplitude_scale", "1", "multiplier on oscillation amplitudes"),
    ("sim.channel_noise_gain", "1,1,1,1,1,1,1,1", "per-channel sensor noise gain"),
    ("sim.lead_in", "2", "seconds before the first epoch marker"),
    ("adc.vref", "4.5", "ADC reference voltage"),
    ("adc.gain", "24", "PGA gain (1, 2, 4, 6, 8, 12 or 24)"),
    ("filter.prototype_order", "11", "low-pass prototype order"),
    ("filter.order_is_overall", "false", "halve prototype_order to get the prototype"),
    ("filter.low_cut", "5", "lower -3 dB edge in Hz"),
    ("filter.high_cut", "18", "upper -3 dB edge in Hz"),
    ("filter.zero_phase", "false", "forward-backward filtering"),
    ("ica.enabled", "true", "run ICA artifact removal"),
    ("ica.max_iter", "200", "FastICA iteration cap"),
    ("ica.tol", "1e-4", "FastICA convergence tolerance"),
    ("ica.seed", "0", "FastICA initialisation seed"),
    ("ica.kurtosis_threshold", "5", "excess kurtosis above which a component is removed"),
    ("stft.window", "256", "window and FFT length"),
    ("stft.hop", "32", "frame hop in samples"),
    ("stft.n_frames", "63", "frames per epoch"),
    ("stft.bin_lo", "5", "first retained bin"),
    ("stft.bin_hi", "20", "last retained bin"),
    ("stft.normalize", "true", "z-score each epoch channel before the STFT"),
    ("model.stem_channels", "32", "stem convolution width"),
    ("model.stages", "32x1,64x1", "stage widths and block counts"),
    ("model.cbam_enabled", "true", "channel and spatial attention per stage"),
    ("model.cbam_reduction", "8", "channel attention reduction ratio"),
    ("model.preactivation", "true", "pre-activation residual blocks"),
    ("model.spatial_kernel", "7", "spatial attention kernel"),
    ("model.fc_hidden", "128", "hidden units of the classifier head"),
    ("model.bn_momentum", "0.1", "batch norm running-stat momentum"),
    ("model.bn_eps", "1e-5", "batch norm epsilon"),
    ("train.epochs", "30", "training epochs per fold"),
    ("train.batch_size", "32", "mini-batch size"),
    ("train.lr", "0.001", "Adam learning rate"),
    ("train.weight_decay", "0", "L2 weight decay"),
    ("train.best_snapshot", "true", "keep the best-validation epoch"),
    ("train.patience", "none", "early-stopping patience in epochs"),
    ("train.threads", "0", "folds trained concurrently; 0 = all cores"),
    ("train.folds", "10", "cross-validation folds"),
    ("dataset.per_subject", "950", "samples per synthetic subject"),
    ("dataset.epochs_per_session", "10", "epochs cut from each simulated session"),
    ("dataset.profile_jitter", "0.2", "per-subject band power jitter"),
    ("dataset.noise_gain_range", "1,1", "log-uniform range of per-channel noise gains"),
    ("dataset.quantize", "true", "pass simulated signals through the frame codec"),
    ("net.host", "127.0.0.1", "UDP destination or bind host"),
    ("net.port", "9530", "UDP port"),
    ("net.batch", "10", "samples per packet"),
    ("net.queue_capacity", "256", "receiver queue depth"),
    ("net.idle_timeout", "2", "receiver stops after this many idle seconds"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Default,
    File,
    Flag,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Default => "default",
            Source::File => "file",
            Source::Flag => "flag",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: Vec<(&'static str, String, Source)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS
                .iter()
                .map(|(k, v, _)| (*k, v.to_string(), Source::Default))
                .collect(),
        }
    }
}

fn bad(key: &str, reason: impl ToString) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        reason: reason.to_string(),
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad(key, format!("`{v}` is not a number list"))))
        .collect()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str, source: Source) -> Result<(), ConfigError> {
        let slot = self
            .values
            .iter_mut()
            .find(|(k, _, _)| *k == key)
            .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
        slot.1 = value.trim().to_string();
        slot.2 = source;
        Ok(())
    }

    pub fn apply_kv(&mut self, doc: &KvDoc, source: Source) -> Result<(), ConfigError> {
        for (k, v) in doc.iter() {
            self.set(k, v, source)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let doc = KvDoc::parse(&fs::read_to_string(path)?)?;
        self.apply_kv(&doc, Source::File)
    }

    /// `KEY=VALUE` from the command line.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| ConfigError::BadOverride(spec.to_string()))?;
        self.set(k.trim(), v, Source::Flag)
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .iter()
            .find(|(k, _, _)| *k == key)
            .map(|(_, v, _)| v.as_str())
            .unwrap_or_else(|| panic!("config key `{key}` is not declared"))
    }

    pub fn source(&self, key: &str) -> Option<Source> {
        self.values.iter().find(|(k, _, _)| *k == key).map(|e| e.2)
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        let v = self.get(key);
        v.parse().map_err(|_| bad(key, format!("cannot parse `{v}`")))
    }

    fn optional<T: std::str::FromStr>(&self, key: &str, none: &str) -> Result<Option<T>, ConfigError> {
        if self.get(key) == none {
            Ok(None)
        } else {
            self.parse(key).map(Some)
        }
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.parse("seed")
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut d = KvDoc::new();
        for (k, v, _) in &self.values {
            d.set(k, v);
        }
        d
    }

    /// Effective values annotated with where each came from.
    pub fn show(&self) -> String {
        let width = KEYS.iter().map(|k| k.0.len()).max().unwrap_or(0);
        let mut out = String::from("# precedence: default < file < flag\n");
        for (k, v, s) in &self.values {
            out.push_str(&format!("{k:<width$} = {v}  # {s}\n"));
        }
        out
    }

    pub fn sim_config(&self) -> Result<SimConfig, ConfigError> {
        let class: EmotionLabel = self
            .get("sim.class")
            .parse()
            .map_err(|e: crate::sim::SimError| bad("sim.class", e))?;
        let mut cfg = SimConfig::for_class(class, self.seed()?, self.parse("sim.duration")?);
        cfg.fs = self.parse("sim.fs")?;
        if let Some(p) = self.optional("sim.alpha_band_power", "auto")? {
            cfg.alpha_band_power = p;
        }
        if let Some(p) = self.optional("sim.beta_band_power", "auto")? {
            cfg.beta_band_power = p;
        }
        cfg.pink_noise_rms = self.parse("sim.pink_noise_rms")?;
        cfg.sensor_noise_rms = self.parse("sim.sensor_noise_rms")?;
        cfg.mains_freq = self.parse("sim.mains_freq")?;
        cfg.mains_amp = self.parse("sim.mains_amp")?;
        cfg.blink_rate = self.parse("sim.blink_rate")?;
        cfg.blink_amp = self.parse("sim.blink_amp")?;
        cfg.amplitude_scale = self.parse("sim.amplitude_scale")?;
        let gains = parse_list("sim.channel_noise_gain", self.get("sim.channel_noise_gain"))?;
        cfg.channel_noise_gain = gains
            .try_into()
            .map_err(|_| bad("sim.channel_noise_gain", "needs 8 values"))?;
        cfg.validate().map_err(|e| bad("sim", e))?;
        Ok(cfg)
    }

    /// Lead-in in samples at the configured rate.
    pub fn lead_in_samples(&self) -> Result<usize, ConfigError> {
        let lead: f64 = self.parse("sim.lead_in")?;
        let fs: f64 = self.parse("sim.fs")?;
        if !(lead >= 0.0) {
            return Err(bad("sim.lead_in", "must be >= 0"));
        }
        Ok((lead * fs).round() as usize)
    }

    pub fn adc_config(&self) -> Result<AdcConfig, ConfigError> {
        AdcConfig::new(self.parse("adc.vref")?, self.parse("adc.gain")?, self.parse("sim.fs")?)
            .map_err(|e: CodecError| bad("adc", e))
    }

    pub fn preprocess_config(&self) -> Result<PreprocessConfig, ConfigError> {
        let filter = FilterSpec {
            prototype_order: self.parse("filter.prototype_order")?,
            low_cut: self.parse("filter.low_cut")?,
            high_cut: self.parse("filter.high_cut")?,
            fs: self.parse("sim.fs")?,
            order_is_overall: self.parse("filter.order_is_overall")?,
        };
        let ica = if self.parse("ica.enabled")? {
            Some(IcaConfig {
                max_iter: self.parse("ica.max_iter")?,
                tol: self.parse("ica.tol")?,
                seed: self.parse("ica.seed")?,
            })
        } else {
            None
        };
        let stft = StftConfig {
            window: self.parse("stft.window")?,
            hop: self.parse("stft.hop")?,
            n_frames: self.parse("stft.n_frames")?,
            bin_lo: self.parse("stft.bin_lo")?,
            bin_hi: self.parse("stft.bin_hi")?,
        };
        stft.validate().map_err(|e| bad("stft", e))?;
        Ok(PreprocessConfig {
            filter,
            zero_phase: self.parse("filter.zero_phase")?,
            ica,
            artifact: ArtifactPolicy {
                kurtosis_threshold: self.parse("ica.kurtosis_threshold")?,
                ..ArtifactPolicy::default()
            },
            normalize: self.parse("stft.normalize")?,
            stft,
        })
    }

    pub fn model_config(&self) -> Result<ModelConfig, ConfigError> {
        let cfg = ModelConfig {
            stem_channels: self.parse("model.stem_channels")?,
            stages: parse_stages(self.get("model.stages")).map_err(|e| bad("model.stages", e))?,
            cbam_enabled: self.parse("model.cbam_enabled")?,
            cbam_reduction: self.parse("model.cbam_reduction")?,
            preactivation: self.parse("model.preactivation")?,
            spatial_kernel: self.parse("model.spatial_kernel")?,
            fc_hidden: self.parse("model.fc_hidden")?,
            bn_momentum: self.parse("model.bn_momentum")?,
            bn_eps: self.parse("model.bn_eps")?,
            ..ModelConfig::default()
        };
        cfg.validate().map_err(|e: NnError| bad("model", e))?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig, ConfigError> {
        let cfg = TrainConfig {
            epochs: self.parse("train.epochs")?,
            batch_size: self.parse("train.batch_size")?,
            lr: self.parse("train.lr")?,
            weight_decay: self.parse("train.weight_decay")?,
            best_snapshot: self.parse("train.best_snapshot")?,
            patience: self.optional("train.patience", "none")?,
            threads: self.parse("train.threads")?,
            verbose: false,
        };
        if cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.lr > 0.0) {
            return Err(bad("train", "epochs, batch_size and lr must be positive"));
        }
        Ok(cfg)
    }

    pub fn folds(&self) -> Result<usize, ConfigError> {
        let k: usize = self.parse("train.folds")?;
        if k < 2 {
            return Err(bad("train.folds", "need at least 2 folds"));
        }
        Ok(k)
    }

    pub fn dataset_config(&self) -> Result<DatasetConfig, ConfigError> {
        let range = parse_list("dataset.noise_gain_range", self.get("dataset.noise_gain_range"))?;
        let [lo, hi] = range[..] else {
            return Err(bad("dataset.noise_gain_range", "needs two values"));
        };
        let cfg = DatasetConfig {
            per_subject: self.parse("dataset.per_subject")?,
            epochs_per_session: self.parse("dataset.epochs_per_session")?,
            lead_in: self.parse("sim.lead_in")?,
            profile_jitter: self.parse("dataset.profile_jitter")?,
            noise_gain_range: (lo, hi),
            sim: self.sim_config()?,
            preprocess: self.preprocess_config()?,
            quantize: self.parse("dataset.quantize")?,
        };
        cfg.validate().map_err(|e| bad("dataset", e))?;
        Ok(cfg)
    }

    pub fn host(&self) -> &str {
        self.get("net.host")
    }

    pub fn port(&self) -> Result<u16, ConfigError> {
        self.parse("net.port")
    }

    pub fn batch(&self) -> Result<usize, ConfigError> {
        self.parse("net.batch")
    }

    pub fn idle_timeout(&self) -> Result<Duration, ConfigError> {
        let s: f64 = self.parse("net.idle_timeout")?;
        Duration::try_from_secs_f64(s).map_err(|e| bad("net.idle_timeout", e))
    }

    /// Builds every section once so that bad values surface before any work.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.dataset_config()?;
        self.adc_config()?;
        self.model_config()?;
        self.train_config()?;
        self.folds()?;
        self.lead_in_samples()?;
        self.port()?;
        self.batch()?;
        self.idle_timeout()?;
        self.parse::<usize>("net.queue_capacity")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_module_defaults() {
        let rc = RunConfig::default();
        rc.validate().unwrap();
        assert_eq!(rc.preprocess_config().unwrap(), PreprocessConfig::default());
        assert_eq!(rc.model_config().unwrap(), ModelConfig::default());
        assert_eq!(rc.train_config().unwrap(), TrainConfig::default());
        assert_eq!(rc.dataset_config().unwrap().sim, SimConfig::default());
        assert_eq!(rc.adc_config().unwrap(), AdcConfig::default());
        let ds = rc.dataset_config().unwrap();
        let def = DatasetConfig::default();
        assert_eq!(
            (ds.per_subject, ds.epochs_per_session, ds.lead_in, ds.profile_jitter, ds.noise_gain_range, ds.quantize),
            (def.per_subject, def.epochs_per_session, def.lead_in, def.profile_jitter, def.noise_gain_range, def.quantize)
        );
    }

    #[test]
    fn keys_unique() {
        let mut names: Vec<_> = KEYS.iter().map(|k| k.0).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), KEYS.len());
    }

    #[test]
    fn precedence() {
        let mut rc = RunConfig::default();
        let file = KvDoc::parse("seed = 5\ntrain.epochs = 3 # short\n").unwrap();
        rc.apply_kv(&file, Source::File).unwrap();
        rc.apply_override("seed=9").unwrap();
        assert_eq!(rc.seed().unwrap(), 9);
        assert_eq!(rc.source("seed"), Some(Source::Flag));
        assert_eq!(rc.train_config().unwrap().epochs, 3);
        assert_eq!(rc.source("train.epochs"), Some(Source::File));
        assert_eq!(rc.source("train.lr"), Some(Source::Default));
        assert!(rc.show().contains("seed"));
    }

    #[test]
    fn rejects_unknown_and_bad() {
        let mut rc = RunConfig::default();
        assert!(matches!(rc.apply_override("train.epoch=3"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(rc.apply_override("seed"), Err(ConfigError::BadOverride(_))));
        rc.apply_override("sim.class=joy").unwrap();
        assert!(rc.sim_config().is_err());
        rc.apply_override("sim.class=sorrow").unwrap();
        rc.apply_override("sim.alpha_band_power=3").unwrap();
        let s = rc.sim_config().unwrap();
        assert_eq!((s.alpha_band_power, s.beta_band_power), (3.0, 20.0));
        rc.apply_override("model.stages=32x").unwrap();
        assert!(rc.model_config().is_err());
    }
}
