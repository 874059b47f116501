//! Turn one preprocessed session into STFT feature tensors.

use acpa_eeg::dsp::{PreprocessConfig, Preprocessor};
use acpa_eeg::sim::{generate_session, session_events, EmotionLabel, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SimConfig::for_class(EmotionLabel::Happiness, 2, 40.0);
    let (signal, _) = generate_session(&cfg);
    let pre = Preprocessor::new(PreprocessConfig::default())?;
    let stft = &pre.config().stft;
    let events = session_events(signal.len(), 500, stft.epoch_len(), cfg.class_label);
    let out = pre.run(&signal, &events)?;

    println!(
        "{} epochs of {} samples, bins {:.2}-{:.2} Hz",
        out.features.len(),
        stft.epoch_len(),
        stft.bin_frequency(stft.bin_lo, signal.fs),
        stft.bin_frequency(stft.bin_hi - 1, signal.fs)
    );
    let f = &out.features[0];
    println!("tensor shape {:?}  label {:?}", f.shape(), f.label.map(|l| l.name()));
    let [c, b, t] = f.shape();
    for bin in 0..b {
        let mean: f32 = (0..c).flat_map(|ch| (0..t).map(move |fr| (ch, fr))).map(|(ch, fr)| f.get(ch, bin, fr)).sum::<f32>()
            / (c * t) as f32;
        println!("{:6.2} Hz  mean log-magnitude {mean:7.3}", stft.bin_frequency(stft.bin_lo + bin, signal.fs));
    }
    Ok(())
}
