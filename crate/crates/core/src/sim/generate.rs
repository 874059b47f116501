use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::codec::N_CHANNELS;
use crate::signal::Signal;

use super::artifacts::inject_artifacts;
use super::config::{EmotionLabel, SimConfig, ALPHA_WEIGHTS, BETA_WEIGHTS, MAINS_WEIGHTS};

/// Sinusoids summed per band per channel.
const COMPONENTS_PER_BAND: usize = 12;
/// Independent latent cortical sources per band. With blink and mains this
/// gives eight spatially distinct sources for eight electrodes.
pub const LATENT_PER_BAND: usize = 3;
const LEAD_FIELD_SEED: u64 = 0x1EAD_F1E1D;
/// Octave rows in the Voss pink-noise generator.
const PINK_ROWS: usize = 16;

pub const ALPHA_BAND: (f64, f64) = (8.0, 13.0);
pub const BETA_BAND: (f64, f64) = (13.0, 18.0);

// Independent RNG streams so that switching one source off leaves the others intact.
const STREAM_ALPHA: u64 = 0xA1FA;
const STREAM_BETA: u64 = 0xBE7A;
const STREAM_BACKGROUND: u64 = 0x9119;
const STREAM_SENSOR: u64 = 0x5E45;
const STREAM_MAINS: u64 = 0x5050;
pub(super) const STREAM_BLINK: u64 = 0xB1E5;

pub(super) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// What was added on top of the clean signal, kept for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub clean_signal: Signal,
    pub artifact_waveform: Signal,
    pub mains: Signal,
    /// Blink onsets in samples.
    pub blink_times: Vec<usize>,
    pub label: EmotionLabel,
}

/// Synthesizes one session.
///
/// The emitted signal is `clean + artifact + mains`, summed in that order per
/// sample. `clean` is a spatial mixture of latent sources (band oscillations
/// carrying pink background, see [`lead_field`]) plus independent per-channel
/// sensor noise. Output is a pure function of `cfg`.
pub fn generate_session(cfg: &SimConfig) -> (Signal, GroundTruth) {
    let n = cfg.n_samples();
    let fs = cfg.fs;
    let mut clean = Signal::zeros(N_CHANNELS, n, fs);

    let scale = cfg.amplitude_scale;
    let bands = [
        (ALPHA_BAND, cfg.alpha_band_power, &ALPHA_WEIGHTS, STREAM_ALPHA),
        (BETA_BAND, cfg.beta_band_power, &BETA_WEIGHTS, STREAM_BETA),
    ];
    for (b, (band, power, weights, stream)) in bands.into_iter().enumerate() {
        let mixing = lead_field(weights, stream);
        let mut osc_rng = stream_rng(cfg.seed, stream);
        let mut bg_rng = stream_rng(cfg.seed, STREAM_BACKGROUND + b as u64);
        for k in 0..LATENT_PER_BAND {
            let mut source = vec![0.0; n];
            add_band(&mut source, band, power * scale * scale, fs, &mut osc_rng);
            if cfg.pink_noise_rms > 0.0 {
                let bg = pink_noise(n, cfg.pink_noise_rms / 2f64.sqrt(), &mut bg_rng);
                for (x, v) in source.iter_mut().zip(bg) {
                    *x += v;
                }
            }
            for (row, m) in clean.data.iter_mut().zip(&mixing) {
                for (x, v) in row.iter_mut().zip(&source) {
                    *x += m[k] * v;
                }
            }
        }
    }
    if cfg.sensor_noise_rms > 0.0 {
        let mut rng = stream_rng(cfg.seed, STREAM_SENSOR);
        for (row, gain) in clean.data.iter_mut().zip(cfg.channel_noise_gain) {
            let noise = pink_noise(n, cfg.sensor_noise_rms * gain, &mut rng);
            for (x, v) in row.iter_mut().zip(noise) {
                *x += v;
            }
        }
    }

    let mains = mains_interference(cfg, n);
    let (_, blinks) = inject_artifacts(&clean, cfg);
    let artifact = blinks.waveform;
    let blink_times = blinks.times;

    let mut emitted = Signal::zeros(N_CHANNELS, n, fs);
    for ch in 0..N_CHANNELS {
        for i in 0..n {
            emitted.data[ch][i] = clean.data[ch][i] + artifact.data[ch][i] + mains.data[ch][i];
        }
    }
    let truth = GroundTruth {
        clean_signal: clean,
        artifact_waveform: artifact,
        mains,
        blink_times,
        label: cfg.class_label,
    };
    (emitted, truth)
}

/// Fixed 8 x 3 projection of one band's latent sources onto the electrodes.
/// Row `ch` has norm `weights[ch]`, so latent sources of power `P` give
/// channel `ch` a band power of `P * weights[ch]^2`.
pub fn lead_field(weights: &[f64; N_CHANNELS], stream: u64) -> [[f64; LATENT_PER_BAND]; N_CHANNELS] {
    let mut rng = stream_rng(LEAD_FIELD_SEED, stream);
    let mut out = [[0.0; LATENT_PER_BAND]; N_CHANNELS];
    for (row, w) in out.iter_mut().zip(weights) {
        let mut norm = 0.0f64;
        for v in row.iter_mut() {
            // positive-leaning so neighbouring electrodes correlate
            *v = 1.0 + rng.random_range(-1.5..1.5);
            norm += *v * *v;
        }
        for v in row.iter_mut() {
            *v *= w / norm.sqrt();
        }
    }
    out
}

/// Sum of sinusoids on a jittered frequency grid inside `band` with random
/// phases and total power `power`. Grid spacing keeps any two components at
/// least half a slot apart so their beating averages out within an epoch.
fn add_band(row: &mut [f64], band: (f64, f64), power: f64, fs: f64, rng: &mut ChaCha8Rng) {
    if power <= 0.0 {
        return;
    }
    let amp = (2.0 * power / COMPONENTS_PER_BAND as f64).sqrt();
    let slot = (band.1 - band.0) / COMPONENTS_PER_BAND as f64;
    for k in 0..COMPONENTS_PER_BAND {
        let center = band.0 + (k as f64 + 0.5) * slot;
        let freq = center + rng.random_range(-0.25..0.25) * slot;
        let phase = rng.random_range(0.0..2.0 * PI);
        add_sinusoid(row, amp, freq, phase, fs);
    }
}

/// `row[i] += amp * sin(2 pi f i / fs + phase)` via phasor rotation.
fn add_sinusoid(row: &mut [f64], amp: f64, freq: f64, phase: f64, fs: f64) {
    let step = Complex64::from_polar(1.0, 2.0 * PI * freq / fs);
    let mut z = Complex64::from_polar(amp, phase);
    for (i, x) in row.iter_mut().enumerate() {
        // re-anchor periodically to bound drift
        if i % 4096 == 0 {
            z = Complex64::from_polar(amp, 2.0 * PI * freq * i as f64 / fs + phase);
        }
        *x += z.im;
        z *= step;
    }
}

/// Voss-McCartney pink noise scaled to the requested RMS.
pub fn pink_noise(n: usize, rms: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut rows = [0.0f64; PINK_ROWS];
    for r in rows.iter_mut() {
        *r = StandardNormal.sample(rng);
    }
    let mut running: f64 = rows.iter().sum();
    let norm = rms / ((PINK_ROWS + 1) as f64).sqrt();
    (0..n)
        .map(|i| {
            if i > 0 {
                let k = (i.trailing_zeros() as usize).min(PINK_ROWS - 1);
                let fresh: f64 = StandardNormal.sample(rng);
                running += fresh - rows[k];
                rows[k] = fresh;
            }
            let white: f64 = StandardNormal.sample(rng);
            (running + white) * norm
        })
        .collect()
}

fn mains_interference(cfg: &SimConfig, n: usize) -> Signal {
    let mut mains = Signal::zeros(N_CHANNELS, n, cfg.fs);
    if cfg.mains_amp <= 0.0 {
        return mains;
    }
    let phase = stream_rng(cfg.seed, STREAM_MAINS).random_range(0.0..2.0 * PI);
    for (row, w) in mains.data.iter_mut().zip(MAINS_WEIGHTS) {
        add_sinusoid(row, cfg.mains_amp * w, cfg.mains_freq, phase, cfg.fs);
    }
    mains
}
