//! Short-time Fourier features: Hann-windowed frames, magnitude, a fixed band
//! of bins, `log(1 + m)`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::epoch::Epoch;
use super::DspError;
use crate::sim::EmotionLabel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    /// Window and FFT length.
    pub window: usize,
    pub hop: usize,
    pub n_frames: usize,
    /// First retained bin.
    pub bin_lo: usize,
    /// Last retained bin, inclusive.
    pub bin_hi: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window: 256,
            hop: 32,
            n_frames: 63,
            bin_lo: 5,
            bin_hi: 20,
        }
    }
}

impl StftConfig {
    /// Samples per epoch this configuration consumes.
    pub fn epoch_len(&self) -> usize {
        self.window + (self.n_frames - 1) * self.hop
    }

    pub fn n_bins(&self) -> usize {
        self.bin_hi + 1 - self.bin_lo
    }

    pub fn bin_frequency(&self, bin: usize, fs: f64) -> f64 {
        bin as f64 * fs / self.window as f64
    }

    pub fn validate(&self) -> Result<(), DspError> {
        let ok = self.window >= 2
            && self.hop >= 1
            && self.n_frames >= 1
            && self.bin_lo <= self.bin_hi
            && self.bin_hi <= self.window / 2;
        if ok {
            Ok(())
        } else {
            Err(DspError::InvalidSpec(format!("bad STFT parameters {self:?}")))
        }
    }
}

/// Channel-major `channels x bins x frames` feature block.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub channels: usize,
    pub bins: usize,
    pub frames: usize,
    pub data: Vec<f32>,
    pub label: Option<EmotionLabel>,
}

impl FeatureTensor {
    pub fn zeros(channels: usize, bins: usize, frames: usize) -> Self {
        Self {
            channels,
            bins,
            frames,
            data: vec![0.0; channels * bins * frames],
            label: None,
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.bins, self.frames]
    }

    #[inline]
    pub fn get(&self, c: usize, b: usize, f: usize) -> f32 {
        self.data[(c * self.bins + b) * self.frames + f]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Reusable FFT plan and window.
pub struct StftExtractor {
    cfg: StftConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl StftExtractor {
    pub fn new(cfg: StftConfig) -> Result<Self, DspError> {
        cfg.validate()?;
        let n = cfg.window;
        // periodic Hann
        let window = (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(n);
        Ok(Self { cfg, window, fft })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    /// Raw magnitudes `|X[bin, frame]|` for one channel, retained bins only,
    /// bin-major.
    pub fn magnitudes(&self, x: &[f64]) -> Result<Vec<f64>, DspError> {
        let cfg = &self.cfg;
        if x.len() != cfg.epoch_len() {
            return Err(DspError::BadEpochLength {
                expected: cfg.epoch_len(),
                got: x.len(),
            });
        }
        let (bins, frames) = (cfg.n_bins(), cfg.n_frames);
        let mut out = vec![0.0; bins * frames];
        let mut buf = vec![Complex64::default(); cfg.window];
        let mut scratch = vec![Complex64::default(); self.fft.get_inplace_scratch_len()];
        for f in 0..frames {
            let start = f * cfg.hop;
            for (b, (s, w)) in buf.iter_mut().zip(x[start..start + cfg.window].iter().zip(&self.window)) {
                *b = Complex64::new(s * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for b in 0..bins {
                out[b * frames + f] = buf[cfg.bin_lo + b].norm();
            }
        }
        Ok(out)
    }

    pub fn features(&self, e: &Epoch) -> Result<FeatureTensor, DspError> {
        let (bins, frames) = (self.cfg.n_bins(), self.cfg.n_frames);
        let mut t = FeatureTensor::zeros(e.n_channels(), bins, frames);
        for (c, row) in e.data.iter().enumerate() {
            let m = self.magnitudes(row)?;
            let dst = &mut t.data[c * bins * frames..(c + 1) * bins * frames];
            for (d, v) in dst.iter_mut().zip(m) {
                *d = v.ln_1p() as f32;
            }
        }
        t.label = e.label;
        Ok(t)
    }
}

/// One-shot feature extraction with the default parameters.
pub fn stft_features(e: &Epoch) -> Result<FeatureTensor, DspError> {
    StftExtractor::new(StftConfig::default())?.features(e)
}
