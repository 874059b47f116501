//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if a gated criterion fails. Criterion 9 is reported but not gated.
//!
//! Run alone with `cargo test --test acceptance`.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::net::UdpSocket;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use acpa_eeg::codec::{decode_frame, encode_frame, AdcConfig, Code24, DecodedSample, RawFrame, StatusFlags};
use acpa_eeg::dsp::{
    design_bandpass, fit_ica, remove_artifact_components, ArtifactPolicy, FilterSpec, IcaConfig, PreprocessConfig,
    Preprocessor, StftConfig, StftExtractor,
};
use acpa_eeg::harness::{build_subject, cross_validate, permute_labels, ablation_study, DatasetConfig, TrainConfig};
use acpa_eeg::net::{parse_packet, serialize_packet, LossTracker, Pacing, Receiver, ReceiverConfig, SendConfig, StreamPacket};
use acpa_eeg::nn::gradcheck::{check_layers, check_model};
use acpa_eeg::nn::{
    cross_entropy, softmax, GradCheckConfig, Mode, Model, ModelConfig, ParmBlock, Tensor,
};
use acpa_eeg::sim::{generate_session, session_events, stream_session, EmotionLabel, SessionSink, SimConfig};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Model used for the learning criteria. The default width is 5-7x slower
/// per epoch; this one keeps ten-fold CV inside the time budget on one core.
fn compact_model() -> ModelConfig {
    ModelConfig {
        stem_channels: 8,
        stages: vec![(8, 1), (16, 1)],
        cbam_reduction: 4,
        fc_hidden: 32,
        ..ModelConfig::default()
    }
}

/// Last-epoch weights: the test fold plays no part in model selection.
fn cv_training() -> TrainConfig {
    TrainConfig {
        epochs: 8,
        best_snapshot: false,
        threads: 0,
        ..TrainConfig::default()
    }
}

fn golden(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn data_lines(text: &str) -> impl Iterator<Item = Vec<&str>> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| l.split('|').map(str::trim).collect())
}

fn unhex(s: &str) -> Vec<u8> {
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap())
        .collect()
}

fn mask_bits(mask: u8) -> [bool; 8] {
    std::array::from_fn(|ch| mask & (0x80 >> ch) != 0)
}

fn criterion_codec() -> Outcome {
    let start = Instant::now();
    let adc = AdcConfig::default();
    let lsb = adc.lsb_microvolts();
    let fs_uv = adc.full_scale_microvolts();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut max_err = 0.0f64;
    for _ in 0..125_000 {
        let uv: [f64; 8] = std::array::from_fn(|_| rng.random_range(-fs_uv..=fs_uv - lsb / 2.0));
        let back = decode_frame(&encode_frame(&DecodedSample::new(uv), &adc), &adc).unwrap();
        for (a, b) in uv.iter().zip(back.microvolts) {
            max_err = max_err.max((a - b).abs());
        }
    }
    // One ulp of slack for the product code * lsb.
    let roundtrip_ok = max_err <= lsb / 2.0 * (1.0 + 1e-12);

    let mut golden_ok = 0;
    let mut golden_bad = Vec::new();
    for row in data_lines(&golden("frames.golden")) {
        let (kind, rest) = row[0].split_once(' ').unwrap();
        let ok = match kind {
            "codes" => {
                let bytes = unhex(rest);
                let codes: Vec<i32> = row[1].split_whitespace().map(|v| v.parse().unwrap()).collect();
                let (p, n) = (u8::from_str_radix(row[2], 16).unwrap(), u8::from_str_radix(row[3], 16).unwrap());
                let g = u8::from_str_radix(row[4], 16).unwrap();
                let flags = StatusFlags {
                    loff_p: mask_bits(p),
                    loff_n: mask_bits(n),
                    gpio: std::array::from_fn(|i| g & (1 << i) != 0),
                };
                let parsed = RawFrame::parse(&bytes).unwrap();
                let want: [Code24; 8] = std::array::from_fn(|i| Code24::new(codes[i]).unwrap());
                let built = RawFrame::from_flags(&flags, want);
                let decoded = decode_frame(&bytes, &adc).unwrap();
                parsed.channel_codes == want
                    && parsed.flags() == flags
                    && built.to_bytes().as_slice() == bytes.as_slice()
                    && encode_frame(&decoded, &adc).as_slice() == bytes.as_slice()
                    && decoded.microvolts.iter().zip(&codes).all(|(v, c)| *v == *c as f64 * lsb)
            }
            "uv" => {
                let vals: Vec<f64> = rest.split_whitespace().map(|v| v.parse().unwrap()).collect();
                let uv: [f64; 8] = vals.try_into().unwrap();
                encode_frame(&DecodedSample::new(uv), &adc).as_slice() == unhex(row[1]).as_slice()
            }
            other => panic!("unknown golden row kind {other}"),
        };
        if ok {
            golden_ok += 1;
        } else {
            golden_bad.push(row[0].to_string());
        }
    }
    for row in data_lines(&golden("packets.golden")) {
        let samples: Vec<[f32; 8]> = if row[2].is_empty() {
            Vec::new()
        } else {
            row[2]
                .split(';')
                .map(|s| {
                    let v: Vec<f32> = s.split_whitespace().map(|x| x.parse().unwrap()).collect();
                    v.try_into().unwrap()
                })
                .collect()
        };
        let packet = StreamPacket::new(row[0].parse().unwrap(), row[1].parse().unwrap(), samples);
        let wire = unhex(row[3]);
        let parsed = parse_packet(&wire).unwrap();
        let same_bits = parsed.samples.len() == packet.samples.len()
            && parsed
                .samples
                .iter()
                .flatten()
                .zip(packet.samples.iter().flatten())
                .all(|(a, b)| a.to_bits() == b.to_bits());
        if serialize_packet(&packet).unwrap() == wire
            && parsed.seq == packet.seq
            && parsed.timestamp_us == packet.timestamp_us
            && same_bits
        {
            golden_ok += 1;
        } else {
            golden_bad.push(format!("packet {}", row[0]));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        roundtrip_ok && golden_bad.is_empty() && elapsed < Duration::from_secs(5),
        format!(
            "max |err| {max_err:.6e} uV vs LSB/2 {:.6e}; golden vectors {golden_ok} ok, mismatched {golden_bad:?}; {:.2} s",
            lsb / 2.0,
            elapsed.as_secs_f64()
        ),
    )
}

/// Brute-force scorer: counts straight from the arrival list.
fn reference_stats(n: u32, arrivals: &[u32]) -> (u64, u64, u64, u64) {
    let mut seen = HashSet::new();
    let (mut dup, mut reord) = (0, 0);
    let mut high: Option<u32> = None;
    for &s in arrivals {
        if !seen.insert(s) {
            dup += 1;
            continue;
        }
        if high.is_some_and(|h| s < h) {
            reord += 1;
        }
        high = Some(high.map_or(s, |h| h.max(s)));
    }
    let received = seen.len() as u64;
    (received, n as u64 - received, reord, dup)
}

fn criterion_transport() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..300u32);
        let mut arrivals: Vec<u32> = (0..n).filter(|_| rng.random_bool(0.85)).collect();
        let dups: Vec<u32> = arrivals.iter().copied().filter(|_| rng.random_bool(0.05)).collect();
        arrivals.extend(dups);
        // Local shuffles (bounded displacement) and the occasional full shuffle.
        if rng.random_bool(0.2) {
            arrivals.shuffle(&mut rng);
        } else {
            for i in 1..arrivals.len() {
                if rng.random_bool(0.1) {
                    let j = i.saturating_sub(rng.random_range(1..=5usize.min(i)));
                    arrivals.swap(i, j);
                }
            }
        }
        let mut t = LossTracker::default();
        for &s in &arrivals {
            t.observe(s);
        }
        t.settle(n as u64);
        let got = (t.stats.received, t.stats.lost, t.stats.reordered, t.stats.duplicated);
        if got != reference_stats(n, &arrivals) {
            mismatches += 1;
        }
    }

    let receiver = Receiver::bind(ReceiverConfig {
        bind: "127.0.0.1:0".parse().unwrap(),
        expected_packets: Some(1500),
        idle_timeout: Some(Duration::from_secs(5)),
        ..ReceiverConfig::default()
    })
    .unwrap();
    let dest = receiver.local_addr().unwrap();
    let sender = std::thread::spawn(move || {
        let socket = UdpSocket::bind("127.0.0.1:0").unwrap();
        let cfg = SimConfig::for_class(EmotionLabel::Calmness, 7, 60.0);
        let send = SendConfig {
            batch: 10,
            pacing: Pacing::Realtime { fs: 250.0 },
        };
        stream_session(&cfg, &AdcConfig::default(), SessionSink::Udp { socket: &socket, dest, send }).unwrap()
    });
    let stats = receiver.run(|_| {}).unwrap();
    let sent = sender.join().unwrap().send.unwrap();
    let live_ok = stats.received == 1500 && stats.lost == 0 && stats.duplicated == 0 && stats.latency_mean_us < 1000.0;
    outcome(
        mismatches == 0 && live_ok && sent.packets == 1500,
        format!(
            "60 s loopback: sent {} received {} lost {} duplicated {} latency mean {:.1} us max {:.1} us; scorer mismatches {mismatches}/1000",
            sent.packets, stats.received, stats.lost, stats.duplicated, stats.latency_mean_us, stats.latency_max_us
        ),
    )
}

fn criterion_filter() -> Outcome {
    let sos = design_bandpass(&FilterSpec::default()).unwrap();
    let fs = 250.0;
    // Evaluate the cascade from its coefficients.
    let mag_db = |f: f64| {
        let w = 2.0 * PI * f / fs;
        let z1 = Complex64::new(w.cos(), -w.sin());
        let z2 = z1 * z1;
        let h = sos.sections.iter().fold(Complex64::new(sos.gain, 0.0), |acc, s| {
            acc * (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2)
        });
        20.0 * h.norm().log10()
    };
    let max_pole = sos
        .sections
        .iter()
        .flat_map(|s| {
            let d = Complex64::new(s.a1 * s.a1 - 4.0 * s.a2, 0.0).sqrt();
            [((-s.a1 + d) / 2.0).norm(), ((-s.a1 - d) / 2.0).norm()]
        })
        .fold(0.0, f64::max);
    let (lo, hi, mains, drift) = (mag_db(5.0), mag_db(18.0), mag_db(50.0), mag_db(2.0));
    let peak = (0..=1250).map(|i| mag_db(i as f64 * 0.1)).fold(f64::MIN, f64::max);
    let pass = (lo + 3.0).abs() <= 0.5 && (hi + 3.0).abs() <= 0.5 && mains <= -60.0 && drift <= -60.0 && max_pole < 1.0;
    outcome(
        pass,
        format!(
            "{} sections; |H| 5 Hz {lo:.3} dB, 18 Hz {hi:.3} dB, 50 Hz {mains:.1} dB, 2 Hz {drift:.1} dB, passband peak {peak:.3} dB; max pole radius {max_pole:.6}",
            sos.sections.len()
        ),
    )
}

fn centred(data: &[Vec<f64>]) -> Vec<Vec<f64>> {
    data.iter()
        .map(|r| {
            let m = r.iter().sum::<f64>() / r.len() as f64;
            r.iter().map(|v| v - m).collect()
        })
        .collect()
}

fn rms_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for (x, y) in a.iter().zip(b) {
        for (p, q) in x.iter().zip(y) {
            s += (p - q) * (p - q);
            n += 1;
        }
    }
    (s / n as f64).sqrt()
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn criterion_ica() -> Outcome {
    let start = Instant::now();
    let (mut flagged, mut min_centred, mut min_raw) = (0, f64::INFINITY, f64::INFINITY);
    for seed in 0..20u64 {
        let label = EmotionLabel::ALL[(seed % 4) as usize];
        let cfg = SimConfig::for_class(label, seed, 30.0);
        let (x, truth) = generate_session(&cfg);
        // Mains is interference for the band-pass, not an eye artifact.
        let target: Vec<Vec<f64>> = truth
            .clean_signal
            .data
            .iter()
            .zip(&truth.mains.data)
            .map(|(c, m)| c.iter().zip(m).map(|(a, b)| a + b).collect())
            .collect();
        let model = fit_ica(&x.data, &IcaConfig::default()).unwrap();
        let (cleaned, removed) = remove_artifact_components(&model, &x.data, &ArtifactPolicy::default());
        if removed.is_empty() {
            continue;
        }
        flagged += 1;
        let before = rms_diff(&centred(&x.data), &centred(&target));
        let after = rms_diff(&centred(&cleaned), &centred(&target));
        min_centred = min_centred.min(1.0 - after / before);
        min_raw = min_raw.min(1.0 - rms_diff(&cleaned, &target) / rms_diff(&x.data, &target));
    }

    // Known sources, random full-rank mixing.
    let n = 6000;
    let fs = 250.0;
    let freqs = [3.1, 5.7, 9.3, 11.9, 17.3, 23.9, 31.7];
    let mut sources: Vec<Vec<f64>> = freqs
        .iter()
        .enumerate()
        .map(|(k, f)| (0..n).map(|i| (2.0 * PI * f * i as f64 / fs + k as f64).sin()).collect())
        .collect();
    let mut blink = vec![0.0; n];
    for onset in (100..n - 100).step_by(700) {
        for j in 0..75 {
            blink[onset + j] += (PI * j as f64 / 75.0).sin().powi(2);
        }
    }
    sources.push(blink);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mixing: Vec<Vec<f64>> = (0..8).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mixed: Vec<Vec<f64>> = (0..8)
        .map(|r| (0..n).map(|i| (0..8).map(|c| mixing[r][c] * sources[c][i]).sum()).collect())
        .collect();
    let model = fit_ica(&mixed, &IcaConfig::default()).unwrap();
    let recovered = model.sources(&mixed);
    let mut matched = HashSet::new();
    let mut worst_match = f64::INFINITY;
    let mut one_to_one = true;
    for row in recovered.row_iter() {
        let r: Vec<f64> = row.iter().copied().collect();
        let strong: Vec<(usize, f64)> = sources
            .iter()
            .enumerate()
            .map(|(k, s)| (k, corr(&r, s).abs()))
            .filter(|(_, c)| *c >= 0.95)
            .collect();
        if strong.len() != 1 || !matched.insert(strong[0].0) {
            one_to_one = false;
        }
        let best = sources.iter().map(|s| corr(&r, s).abs()).fold(0.0, f64::max);
        worst_match = worst_match.min(best);
    }
    let elapsed = start.elapsed();
    let pass = flagged > 0 && min_centred >= 0.70 && one_to_one && matched.len() == 8 && elapsed < Duration::from_secs(60);
    outcome(
        pass,
        format!(
            "{flagged}/20 sessions flagged; min blink-error reduction {:.1}% (mean-removed), {:.1}% without mean removal; \
             source recovery min |corr| {worst_match:.4}, one-to-one {one_to_one}; {:.1} s",
            100.0 * min_centred,
            100.0 * min_raw,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_features() -> Outcome {
    let cfg = SimConfig::for_class(EmotionLabel::Happiness, 11, 60.0);
    let (signal, _) = generate_session(&cfg);
    let pre = Preprocessor::new(PreprocessConfig::default()).unwrap();
    let events = session_events(signal.len(), 500, 2240, EmotionLabel::Happiness);
    let out = pre.run(&signal, &events).unwrap();
    let shapes_ok = out.features.len() == events.len()
        && out.features.iter().all(|f| f.shape() == [8, 16, 63] && f.data.len() == 8064 && f.is_finite());

    let stft = StftExtractor::new(StftConfig::default()).unwrap();
    let mut worst = f64::INFINITY;
    for k in 5..=20usize {
        let f0 = k as f64 * 250.0 / 256.0;
        let x: Vec<f64> = (0..2240).map(|i| (2.0 * PI * f0 * i as f64 / 250.0).sin()).collect();
        let mags = stft.magnitudes(&x).unwrap();
        let (mut total, mut near) = (0.0, 0.0);
        for b in 0..16 {
            let e: f64 = mags[b * 63..(b + 1) * 63].iter().map(|m| m * m).sum();
            total += e;
            if (b + 5).abs_diff(k) <= 1 {
                near += e;
            }
        }
        worst = worst.min(near / total);
    }
    outcome(
        shapes_ok && worst >= 0.80,
        format!(
            "{} epochs, all 8x16x63: {shapes_ok}; bin-centre tones keep >= {:.1}% of retained energy within +-1 bin",
            out.features.len(),
            100.0 * worst
        ),
    )
}

fn criterion_gradients() -> Outcome {
    let start = Instant::now();
    let layers = check_layers(&GradCheckConfig::per_layer()).unwrap();
    let layer_max = layers.iter().map(|l| l.max_rel_error()).fold(0.0, f64::max);
    let cfg = GradCheckConfig::default();
    let (mut model_max, mut spec_floor_max) = (0.0f64, 0.0f64);
    for seed in 0..5 {
        let model = Model::new(ModelConfig::reduced(), seed).unwrap();
        let r = check_model(&model, [2, 8, 4, 5], &GradCheckConfig { seed, ..cfg.clone() }).unwrap();
        model_max = model_max.max(r.max_rel_error());
        spec_floor_max = spec_floor_max.max(r.max_rel_error_with_floor(1e-12));
    }
    let mut faulty = Model::new(ModelConfig::reduced(), 0).unwrap();
    faulty.set_backward_fault(1.01);
    let canary = check_model(&faulty, [2, 8, 4, 5], &cfg).unwrap().max_rel_error();
    let elapsed = start.elapsed();
    let pass = layer_max <= 1e-6 && model_max <= 1e-5 && canary > 1e-5 && elapsed < Duration::from_secs(120);
    outcome(
        pass,
        format!(
            "per-layer max rel {layer_max:.2e} ({} layers); reduced model max rel {model_max:.2e} over 5 seeds \
             (floor 1e-6; {spec_floor_max:.2e} with floor 1e-12); faulty backward {canary:.2e}; {:.1} s",
            layers.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut block = ParmBlock::new(6, 6, true, 0.1, 1e-5, &mut rng);
    block.conv1.weight.value.fill(0.0);
    block.conv2.weight.value.fill(0.0);
    let x = Tensor::randn(&[3, 6, 5, 7], 2.0, &mut rng);
    let mut identity = true;
    for mode in [Mode::Train, Mode::Eval] {
        let (y, cache) = block.forward(&x, mode).unwrap();
        let g = Tensor::randn(x.shape(), 1.0, &mut rng);
        identity &= y == x && block.backward(&cache, &g).unwrap() == g;
    }
    let (loss, _) = cross_entropy(&Tensor::zeros(&[5, 4]), &[0, 1, 2, 3, 1]).unwrap();
    let loss_err = (loss - 4f64.ln()).abs();
    let mut logits = Tensor::randn(&[64, 4], 30.0, &mut rng);
    logits.data_mut()[0] = 700.0;
    let p = softmax(&logits).unwrap();
    let row_err = p
        .data()
        .chunks(4)
        .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    outcome(
        identity && loss_err <= 1e-12 && row_err <= 1e-12,
        format!("zero-weight block exact identity and pass-through: {identity}; |loss - ln 4| {loss_err:.1e}; max |row sum - 1| {row_err:.1e}"),
    )
}

/// Smallest pairwise difference in alpha/beta power ratio between class profiles.
fn min_profile_separation_db() -> f64 {
    let ratios: Vec<f64> = EmotionLabel::ALL
        .iter()
        .map(|l| {
            let (a, b) = l.default_profile();
            10.0 * (a / b).log10()
        })
        .collect();
    let mut min = f64::INFINITY;
    for i in 0..4 {
        for j in i + 1..4 {
            min = min.min((ratios[i] - ratios[j]).abs());
        }
    }
    min
}

fn criterion_learning() -> Outcome {
    let start = Instant::now();
    let ds = build_subject(0, 0, &DatasetConfig::default()).unwrap();
    let mut counts = [0usize; 4];
    for l in ds.labels().unwrap() {
        counts[l] += 1;
    }
    let built = start.elapsed();
    let report = cross_validate(&compact_model(), &ds, 10, &cv_training(), 0).unwrap();
    let control = cross_validate(&compact_model(), &permute_labels(&ds, 99), 10, &cv_training(), 0).unwrap();
    let elapsed = start.elapsed();
    let sep = min_profile_separation_db();
    let pass = ds.len() == 950
        && counts.iter().all(|&c| c.abs_diff(950 / 4) <= 1)
        && sep >= 3.0
        && report.mean >= 0.90
        && control.mean <= 0.40
        && elapsed < Duration::from_secs(30 * 60);
    let folds: Vec<String> = report.per_fold_accuracies.iter().map(|a| format!("{a:.3}")).collect();
    outcome(
        pass,
        format!(
            "{} samples {counts:?}, min class separation {sep:.1} dB; 10-fold mean {:.4} +- {:.4} [{}]; \
             permuted labels {:.4}; dataset {:.0} s, total {:.1} min",
            ds.len(),
            report.mean,
            report.std,
            folds.join(" "),
            control.mean,
            built.as_secs_f64(),
            elapsed.as_secs_f64() / 60.0
        ),
    )
}

fn criterion_ablation() -> Outcome {
    let start = Instant::now();
    let ds = build_subject(0, 0, &DatasetConfig::heterogeneous()).unwrap();
    let report = ablation_study(&compact_model(), &ds, 10, &cv_training(), 0).unwrap();
    let mean = |name: &str| report.get(name).map_or(f64::NAN, |r| r.mean);
    let mut detail = String::new();
    for (name, r) in &report.rows {
        let _ = write!(detail, "{name} {:.4} +- {:.4}; ", r.mean, r.std);
    }
    let _ = write!(detail, "{:.1} min", start.elapsed().as_secs_f64() / 60.0);
    outcome(mean("acpa") >= mean("cbam_off"), detail)
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_acpa-eeg")
}

fn cli(dir: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(out.stdout)
}

fn free_port() -> u16 {
    UdpSocket::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

const TINY: &[&str] = &[
    "--set", "model.stem_channels=4",
    "--set", "model.stages=4x1",
    "--set", "model.cbam_reduction=2",
    "--set", "model.fc_hidden=8",
    "--set", "train.epochs=2",
    "--set", "train.folds=2",
];

/// Runs every subcommand with file output once in `dir`; returns the files
/// and captured standard output that must be reproducible.
fn pipeline_run(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let with = |base: &[&str], extra: &[&str]| -> Vec<String> {
        base.iter().chain(extra).map(|s| s.to_string()).collect()
    };
    let run = |args: Vec<String>| {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        cli(dir, &refs)
    };
    let mut stdout = Vec::new();
    for (class, seed) in [("happiness", "1"), ("sadness", "2")] {
        let raw = format!("{class}.raw");
        run(with(&["simulate", "--seed", seed, "--duration", "40", "--class", class, "-o"], &[&raw]))?;
        run(with(&["preprocess", &raw, "-o"], &[&format!("{class}.feat")]))?;
    }
    run(with(TINY, &["train", "happiness.feat", "sadness.feat", "--seed", "3", "-o", "m.ckpt", "--report", "train.report"]))?;
    run(with(&["eval", "m.ckpt", "sadness.feat", "--report"], &["eval.report"]))?;
    let ablate = with(
        TINY,
        &["--set", "dataset.per_subject=24", "ablate", "--seed", "5", "--report", "ablate.report"],
    );
    run(ablate)?;

    // Live path: stream a short session into capture and into infer.
    run(with(&["simulate", "--seed", "4", "--duration", "16", "--class", "sorrow", "-o"], &["live.raw"]))?;
    let port = free_port();
    let capture = Command::new(bin())
        .current_dir(dir)
        .args(["capture", "--port", &port.to_string(), "--packets", "400", "-o", "captured.raw"])
        .stdout(std::process::Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    std::thread::sleep(Duration::from_millis(300));
    run(with(&["stream", "live.raw", "--to"], &[&format!("127.0.0.1:{port}")]))?;
    let status = capture.wait_with_output().map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err("capture failed".into());
    }
    let port = free_port();
    let infer = Command::new(bin())
        .current_dir(dir)
        .args(["infer", "m.ckpt", "--port", &port.to_string(), "--packets", "400"])
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    std::thread::sleep(Duration::from_millis(300));
    run(with(&["stream", "live.raw", "--to"], &[&format!("127.0.0.1:{port}")]))?;
    let infer_out = infer.wait_with_output().map_err(|e| e.to_string())?;
    stdout.push(("infer stdout".to_string(), infer_out.stdout));

    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut names: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    for p in names {
        files.push((p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()));
    }
    files.extend(stdout);
    Ok(files)
}

fn criterion_determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let runs = pipeline_run(a.path()).and_then(|x| pipeline_run(b.path()).map(|y| (x, y)));
    match runs {
        Err(e) => outcome(false, format!("pipeline failed: {e}")),
        Ok((x, y)) => {
            let names: Vec<&str> = x.iter().map(|f| f.0.as_str()).collect();
            let differing: Vec<&str> = x
                .iter()
                .zip(&y)
                .filter(|(p, q)| p != q)
                .map(|(p, _)| p.0.as_str())
                .collect();
            let captured_matches = x.iter().find(|f| f.0 == "captured.raw").map(|f| &f.1)
                == x.iter().find(|f| f.0 == "live.raw").map(|f| &f.1);
            let infer_lines = x
                .iter()
                .find(|f| f.0 == "infer stdout")
                .map_or(0, |f| f.1.iter().filter(|&&b| b == b'\n').count());
            outcome(
                differing.is_empty() && x.len() == y.len() && captured_matches && infer_lines > 0,
                format!(
                    "{} outputs compared across two runs, differing: {differing:?}; captured stream equals the source file: \
                     {captured_matches}; infer lines {infer_lines}; outputs {names:?}",
                    x.len()
                ),
            )
        }
    }
}

fn main() {
    let criteria: [(&str, bool, fn() -> Outcome); 10] = [
        ("codec roundtrip and golden frames", true, criterion_codec),
        ("loopback transport and loss accounting", true, criterion_transport),
        ("band-pass design", true, criterion_filter),
        ("ICA blink removal and source recovery", true, criterion_ica),
        ("STFT feature shape and tone concentration", true, criterion_features),
        ("analytic gradients", true, criterion_gradients),
        ("identity invariants", true, criterion_identities),
        ("end-to-end learning", true, criterion_learning),
        ("ablation ordering (soft)", false, criterion_ablation),
        ("determinism", true, criterion_determinism),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut gated_failures = 0;
    for (i, (name, gated, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        let note = if *gated { "" } else { " (reported, not gated)" };
        println!("{verdict} {id:>2} {name}{note}: {}", o.detail);
        if *gated && !o.pass {
            gated_failures += 1;
        }
    }
    if gated_failures > 0 {
        println!("{gated_failures} gated criteria failed");
        std::process::exit(1);
    }
}
