//! Front-end composability: the file and codec path lands within quantization
//! of the in-process signal, and the features follow.

use acpa_eeg::codec::AdcConfig;
use acpa_eeg::dsp::{load_features, save_features, PreprocessConfig, Preprocessor};
use acpa_eeg::sim::{
    generate_session, load_truth, session_events, sidecar_path, stream_session, truth_to_kv, EmotionLabel,
    RawRecording, SessionSink, SimConfig,
};

#[test]
fn raw_file_within_half_lsb_of_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.raw");
    let cfg = SimConfig::for_class(EmotionLabel::Sorrow, 21, 20.0);
    let adc = AdcConfig::default();
    stream_session(&cfg, &adc, SessionSink::File(&path)).unwrap();
    let (signal, _) = generate_session(&cfg);
    let rec = RawRecording::load(&path).unwrap();
    assert_eq!(rec.len(), signal.len());
    let half = adc.lsb_microvolts() / 2.0;
    for (i, s) in rec.samples.iter().enumerate() {
        for ch in 0..8 {
            let x = signal.data[ch][i];
            // f32 storage adds at most half an f32 ulp on top of the code step.
            let slack = (x.abs() + half) * f32::EPSILON as f64;
            assert!((s[ch] as f64 - x).abs() <= half + slack, "sample {i} ch {ch}");
        }
    }
}

#[test]
fn features_from_file_match_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("s.raw");
    let cfg = SimConfig::for_class(EmotionLabel::Calmness, 5, 30.0);
    let report = stream_session(&cfg, &AdcConfig::default(), SessionSink::File(&raw)).unwrap();
    let events = session_events(report.samples, 500, 2240, cfg.class_label);
    std::fs::write(sidecar_path(&raw), truth_to_kv(&cfg, &report.truth, &events).to_text()).unwrap();

    let (signal, _) = generate_session(&cfg);
    let truth = load_truth(&sidecar_path(&raw)).unwrap();
    assert_eq!(truth.events, events);
    let loaded = RawRecording::load(&raw).unwrap().to_signal();

    // ICA stops at its iteration cap on these sessions, so the unmixing moves
    // with sub-LSB input changes. Only the flagged set has to agree.
    let with_ica = Preprocessor::new(PreprocessConfig::default()).unwrap();
    let a = with_ica.run(&signal, &events).unwrap();
    let b = with_ica.run(&loaded, &truth.events).unwrap();
    assert_eq!(a.ica.unwrap().removed, b.ica.unwrap().removed);

    let plain = Preprocessor::new(PreprocessConfig {
        ica: None,
        ..PreprocessConfig::default()
    })
    .unwrap();
    let direct = plain.run(&signal, &events).unwrap();
    let from_file = plain.run(&loaded, &truth.events).unwrap();
    assert_eq!(direct.features.len(), from_file.features.len());
    for (a, b) in direct.features.iter().zip(&from_file.features) {
        assert_eq!(a.label, b.label);
        // Quantization noise is about 3e-3 uV rms; it only shows in the
        // weakest bins, so bound the mean tightly and the worst loosely.
        let diffs: Vec<f32> = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).collect();
        let worst = diffs.iter().copied().fold(0.0f32, f32::max);
        let mean = diffs.iter().sum::<f32>() / diffs.len() as f32;
        assert!(worst < 5e-2 && mean < 1e-3, "log-magnitude differs by {worst} (mean {mean})");
    }

    let feat = dir.path().join("s.feat");
    save_features(&feat, &from_file.features).unwrap();
    assert_eq!(load_features(&feat).unwrap(), from_file.features);
}
