//! Fit FastICA to a session with eye blinks, drop the spiky components and
//! measure how much of the blink energy is gone.

use acpa_eeg::dsp::{excess_kurtosis, fit_ica, remove_artifact_components, ArtifactPolicy, IcaConfig};
use acpa_eeg::signal::Signal;
use acpa_eeg::sim::{generate_session, EmotionLabel, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SimConfig::for_class(EmotionLabel::Sorrow, 4, 30.0);
    let (x, truth) = generate_session(&cfg);
    let model = fit_ica(&x.data, &IcaConfig::default())?;
    println!("converged {}  iterations {}", model.converged, model.iterations);

    let sources = model.sources(&x.data);
    for (k, row) in sources.row_iter().enumerate() {
        let s: Vec<f64> = row.iter().copied().collect();
        println!("component {k}  excess kurtosis {:7.2}", excess_kurtosis(&s));
    }

    let (cleaned, removed) = remove_artifact_components(&model, &x.data, &ArtifactPolicy::default());
    let reference = truth.clean_signal.data.iter().zip(&truth.mains.data);
    let target = Signal {
        fs: x.fs,
        data: reference.map(|(c, m)| c.iter().zip(m).map(|(a, b)| a + b).collect()).collect(),
    };
    let before = x.sub(&target).rms();
    let after = Signal { fs: x.fs, data: cleaned }.sub(&target).rms();
    println!("removed {removed:?}  residual artifact rms {before:.2} -> {after:.2} uV");
    Ok(())
}
