//! Generate one labelled session and summarise what went into it.

use acpa_eeg::sim::{generate_session, EmotionLabel, SimConfig};

fn main() {
    let label = std::env::args()
        .nth(1)
        .and_then(|s| EmotionLabel::ALL.into_iter().find(|l| l.name() == s))
        .unwrap_or(EmotionLabel::Calmness);
    let cfg = SimConfig::for_class(label, 11, 30.0);
    let (signal, truth) = generate_session(&cfg);

    println!("class {}  fs {} Hz  {} samples x {} channels", label.name(), signal.fs, signal.len(), signal.n_channels());
    println!("blinks at {:?}", truth.blink_times.iter().map(|&t| t as f64 / signal.fs).collect::<Vec<_>>());
    println!("rms  total {:.2}  clean {:.2}  artifact {:.2}  mains {:.2} uV",
        signal.rms(), truth.clean_signal.rms(), truth.artifact_waveform.rms(), truth.mains.rms());
    for ch in 0..signal.n_channels() {
        let x = &signal.data[ch];
        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        println!("ch{ch}  peak {peak:8.2} uV");
    }
}
