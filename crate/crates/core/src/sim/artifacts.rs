use std::f64::consts::PI;

use rand_distr::{Distribution, Exp};

use crate::signal::Signal;

use super::config::{SimConfig, BLINK_WEIGHTS};
use super::generate::{stream_rng, STREAM_BLINK};

pub const BLINK_SECONDS: f64 = 0.3;

/// Blinks that were added to a signal.
#[derive(Debug, Clone, PartialEq)]
pub struct BlinkRecord {
    /// Onset sample of each blink.
    pub times: Vec<usize>,
    /// Exactly what was added, per channel.
    pub waveform: Signal,
}

/// Raised-cosine pulse of 300 ms with unit peak.
pub fn blink_template(fs: f64) -> Vec<f64> {
    let len = ((BLINK_SECONDS * fs).round() as usize).max(3);
    (0..len)
        .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / (len - 1) as f64).cos()))
        .collect()
}

/// Poisson-process onsets at `blink_rate` per minute over the session.
pub fn blink_onsets(cfg: &SimConfig) -> Vec<usize> {
    if cfg.blink_rate <= 0.0 || cfg.blink_amp <= 0.0 {
        return Vec::new();
    }
    let n = cfg.n_samples();
    let gap = Exp::new(cfg.blink_rate / 60.0).expect("rate checked positive");
    let mut rng = stream_rng(cfg.seed, STREAM_BLINK);
    let mut onsets = Vec::new();
    let mut t = gap.sample(&mut rng);
    while t * cfg.fs < n as f64 {
        onsets.push((t * cfg.fs) as usize);
        t += gap.sample(&mut rng);
    }
    onsets
}

/// Adds the blink template at each onset, scaled by `amp` and the fixed
/// spatial projection. Pulses running past the end are truncated.
pub fn inject_blinks_at(signal: &Signal, onsets: &[usize], amp: f64) -> (Signal, BlinkRecord) {
    let n = signal.len();
    let template = blink_template(signal.fs);
    let mut waveform = Signal::zeros(signal.n_channels(), n, signal.fs);
    for &onset in onsets {
        for (k, t) in template.iter().enumerate() {
            let i = onset + k;
            if i >= n {
                break;
            }
            for (row, w) in waveform.data.iter_mut().zip(BLINK_WEIGHTS) {
                row[i] += amp * w * t;
            }
        }
    }
    let mut out = signal.clone();
    for (row, add) in out.data.iter_mut().zip(&waveform.data) {
        for (x, a) in row.iter_mut().zip(add) {
            *x += a;
        }
    }
    (
        out,
        BlinkRecord {
            times: onsets.to_vec(),
            waveform,
        },
    )
}

pub fn inject_artifacts(signal: &Signal, cfg: &SimConfig) -> (Signal, BlinkRecord) {
    inject_blinks_at(signal, &blink_onsets(cfg), cfg.blink_amp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_shape() {
        let t = blink_template(250.0);
        assert_eq!(t.len(), 75);
        assert_eq!(t[0], 0.0);
        assert!(t[74].abs() < 1e-15);
        assert!((t[37] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rate_leaves_signal() {
        let mut cfg = SimConfig::silent(250.0, 10.0, 0);
        cfg.blink_amp = 100.0;
        let s = Signal {
            fs: 250.0,
            data: vec![(0..2500).map(|i| i as f64).collect(); 8],
        };
        let (out, rec) = inject_artifacts(&s, &cfg);
        assert_eq!(out, s);
        assert!(rec.times.is_empty());
    }

    #[test]
    fn forced_blink_is_template() {
        let s = Signal {
            fs: 250.0,
            data: vec![(0..3000).map(|i| (i as f64 * 0.1).sin()).collect(); 8],
        };
        let (out, rec) = inject_blinks_at(&s, &[1000], 100.0);
        let t = blink_template(250.0);
        for ch in 0..8 {
            for i in 0..3000 {
                let expected = if (1000..1000 + t.len()).contains(&i) {
                    100.0 * BLINK_WEIGHTS[ch] * t[i - 1000]
                } else {
                    0.0
                };
                assert_eq!(rec.waveform.data[ch][i], expected);
                assert_eq!(out.data[ch][i], s.data[ch][i] + expected);
            }
        }
        // T5 carries the largest deflection
        let peak = |ch: usize| rec.waveform.data[ch].iter().cloned().fold(0.0, f64::max);
        assert!((0..6).all(|ch| peak(ch) < peak(6)));
    }

    #[test]
    fn poisson_count_reproducible() {
        let mut cfg = SimConfig::silent(250.0, 60.0, 11);
        cfg.blink_rate = 12.0;
        cfg.blink_amp = 100.0;
        let a = blink_onsets(&cfg);
        assert_eq!(a, blink_onsets(&cfg));
        assert!((4..=24).contains(&a.len()), "{} blinks", a.len());
        assert!(a.windows(2).all(|w| w[0] <= w[1]));
    }
}
