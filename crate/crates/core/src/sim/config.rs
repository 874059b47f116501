use std::fmt;
use std::str::FromStr;

use crate::codec::N_CHANNELS;

use super::SimError;

/// The four emotion classes, with stable integer ids.
///
/// Class 1 is also called "distress" and class 3 "tranquility" in some
/// descriptions of the protocol; [`FromStr`] accepts both spellings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EmotionLabel {
    Happiness = 0,
    Sorrow = 1,
    Sadness = 2,
    Calmness = 3,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; 4] = [
        EmotionLabel::Happiness,
        EmotionLabel::Sorrow,
        EmotionLabel::Sadness,
        EmotionLabel::Calmness,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionLabel::Happiness => "happiness",
            EmotionLabel::Sorrow => "sorrow",
            EmotionLabel::Sadness => "sadness",
            EmotionLabel::Calmness => "calmness",
        }
    }

    /// Default `(alpha, beta)` band powers in uV^2 at unit spatial weight.
    ///
    /// These are synthetic signatures chosen so that the 8-13 Hz / 13-18 Hz
    /// power ratio differs by at least 3 dB between any two classes. They are
    /// not physiological claims.
    pub fn default_profile(self) -> (f64, f64) {
        match self {
            EmotionLabel::Happiness => (6.0, 40.0),
            EmotionLabel::Sorrow => (20.0, 20.0),
            EmotionLabel::Sadness => (8.0, 2.0),
            EmotionLabel::Calmness => (50.0, 5.0),
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmotionLabel {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "happiness" | "happy" | "0" => Ok(EmotionLabel::Happiness),
            "sorrow" | "distress" | "1" => Ok(EmotionLabel::Sorrow),
            "sadness" | "sad" | "2" => Ok(EmotionLabel::Sadness),
            "calmness" | "calm" | "tranquility" | "3" => Ok(EmotionLabel::Calmness),
            other => Err(SimError::UnknownLabel(other.to_string())),
        }
    }
}

/// Alpha (8-13 Hz) spatial weights: occipital-dominant.
pub const ALPHA_WEIGHTS: [f64; N_CHANNELS] = [0.8, 0.9, 0.8, 1.0, 1.0, 1.0, 0.6, 0.6];
/// Beta (13-18 Hz) spatial weights: temporal/parietal-dominant.
pub const BETA_WEIGHTS: [f64; N_CHANNELS] = [0.9, 0.8, 0.9, 0.7, 0.6, 0.7, 1.0, 1.0];
/// Blink projection, largest on T5/T6. Fixed so the artifact is rank one.
pub const BLINK_WEIGHTS: [f64; N_CHANNELS] = [0.35, 0.3, 0.35, 0.2, 0.15, 0.2, 1.0, 0.95];
/// Mains pickup per electrode.
pub const MAINS_WEIGHTS: [f64; N_CHANNELS] = [1.0, 0.9, 1.0, 0.8, 0.85, 0.8, 1.1, 1.1];

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub fs: f64,
    /// Seconds.
    pub duration: f64,
    pub seed: u64,
    pub class_label: EmotionLabel,
    /// uV^2 in 8-13 Hz at unit spatial weight.
    pub alpha_band_power: f64,
    /// uV^2 in 13-18 Hz at unit spatial weight.
    pub beta_band_power: f64,
    /// Background pink noise carried by the latent sources.
    pub pink_noise_rms: f64,
    /// Independent per-electrode noise.
    pub sensor_noise_rms: f64,
    pub mains_freq: f64,
    pub mains_amp: f64,
    /// Events per minute.
    pub blink_rate: f64,
    pub blink_amp: f64,
    /// Multiplies the oscillation amplitudes.
    pub amplitude_scale: f64,
    /// Per-channel multiplier on the sensor noise level.
    pub channel_noise_gain: [f64; N_CHANNELS],
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::for_class(EmotionLabel::Calmness, 0, 60.0)
    }
}

impl SimConfig {
    pub fn for_class(label: EmotionLabel, seed: u64, duration: f64) -> Self {
        let (alpha, beta) = label.default_profile();
        Self {
            fs: 250.0,
            duration,
            seed,
            class_label: label,
            alpha_band_power: alpha,
            beta_band_power: beta,
            pink_noise_rms: 5.0,
            sensor_noise_rms: 0.5,
            mains_freq: 50.0,
            mains_amp: 10.0,
            blink_rate: 12.0,
            blink_amp: 150.0,
            amplitude_scale: 1.0,
            channel_noise_gain: [1.0; N_CHANNELS],
        }
    }

    /// All sources off; useful as a base for single-component experiments.
    pub fn silent(fs: f64, duration: f64, seed: u64) -> Self {
        Self {
            fs,
            duration,
            seed,
            class_label: EmotionLabel::Calmness,
            alpha_band_power: 0.0,
            beta_band_power: 0.0,
            pink_noise_rms: 0.0,
            sensor_noise_rms: 0.0,
            mains_freq: 50.0,
            mains_amp: 0.0,
            blink_rate: 0.0,
            blink_amp: 0.0,
            amplitude_scale: 1.0,
            channel_noise_gain: [1.0; N_CHANNELS],
        }
    }

    pub fn n_samples(&self) -> usize {
        (self.fs * self.duration).round() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return bad(format!("fs must be positive, got {}", self.fs));
        }
        if self.fs <= 2.0 * self.mains_freq {
            return bad(format!(
                "fs {} must exceed twice the mains frequency {}",
                self.fs, self.mains_freq
            ));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        let amplitudes = [
            ("alpha_band_power", self.alpha_band_power),
            ("beta_band_power", self.beta_band_power),
            ("pink_noise_rms", self.pink_noise_rms),
            ("sensor_noise_rms", self.sensor_noise_rms),
            ("mains_amp", self.mains_amp),
            ("blink_rate", self.blink_rate),
            ("blink_amp", self.blink_amp),
            ("amplitude_scale", self.amplitude_scale),
        ];
        for (name, v) in amplitudes {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        if self.channel_noise_gain.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return bad("channel_noise_gain entries must be >= 0".into());
        }
        Ok(())
    }
}
