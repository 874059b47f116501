//! The `acpa-eeg` command line: each pipeline stage as a subcommand.
//!
//! Standard output per subcommand:
//!
//! | command      | stdout                                                       |
//! |--------------|--------------------------------------------------------------|
//! | `simulate`   | `key = value` summary (samples, blinks, epochs, paths)        |
//! | `stream`     | `key = value` send report                                     |
//! | `capture`    | one `ReceiverStats` summary line                              |
//! | `preprocess` | `key = value` summary (epochs, skipped, ICA result)           |
//! | `train`      | human-readable evaluation report                              |
//! | `eval`       | human-readable evaluation report                              |
//! | `infer`      | `timestamp_us<TAB>label<TAB>p0 p1 p2 p3` per classified epoch |
//! | `bench-net`  | `key = value` loss and latency report                         |
//! | `ablate`     | human-readable ablation table                                 |
//!
//! Exit status is 0 on success, 1 for usage or configuration errors and 2 for
//! failures while running. Errors are reported as one line on standard error.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::dsp::{load_features, save_features, DspError, FeatureTensor, Preprocessor};
use crate::harness::{
    ablation_study, build_subject, config_echo, cross_validate, evaluate, kfold_split, to_batch, train_fold, Dataset,
    EvalReport, HarnessError, Provenance,
};
use crate::kv::KvDoc;
use crate::net::{self, NetError, Pacing, ReceiverConfig, Sample, SendConfig};
use crate::nn::{load_checkpoint, save_checkpoint, NnError};
use crate::signal::Signal;
use crate::sim::{
    load_truth, sample_timestamp_us, session_events, sidecar_path, stream_session, truth_to_kv, EmotionLabel,
    RawRecording, SessionSink, SimError,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            _ => 2,
        }
    }
}

fn io_err(context: impl std::fmt::Display) -> impl FnOnce(io::Error) -> CliError {
    let context = context.to_string();
    move |source| CliError::Io { context, source }
}

#[derive(Debug, Parser)]
#[command(name = "acpa-eeg", version, about = "Synthetic EEG emotion-recognition pipeline", arg_required_else_help = true)]
struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print the effective configuration with the source of every key and exit.
    #[arg(long, global = true)]
    show_config: bool,
    /// Progress on standard error.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct SimFlags {
    #[arg(long)]
    seed: Option<u64>,
    /// Seconds.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    class: Option<String>,
}

#[derive(Debug, Args)]
struct ReceiveFlags {
    #[arg(long)]
    port: Option<u16>,
    /// Stop after this many packets.
    #[arg(long)]
    packets: Option<u64>,
    /// Stop after this many seconds.
    #[arg(long)]
    max_duration: Option<f64>,
    /// Stop after this many seconds without a packet.
    #[arg(long)]
    idle_timeout: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainFlags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    /// Write the structured report here.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a session into a raw capture file plus a ground-truth sidecar.
    Simulate {
        #[command(flatten)]
        sim: SimFlags,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Send a raw capture, or a live simulated session, over UDP.
    Stream {
        /// Raw capture to replay; simulates live when omitted.
        input: Option<PathBuf>,
        #[command(flatten)]
        sim: SimFlags,
        /// Destination, default `net.host:net.port`.
        #[arg(long)]
        to: Option<String>,
        #[arg(long)]
        batch: Option<usize>,
        /// Send as fast as possible instead of at the sample rate.
        #[arg(long)]
        unpaced: bool,
    },
    /// Receive a UDP stream into a raw capture file.
    Capture {
        #[command(flatten)]
        recv: ReceiveFlags,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Raw capture to feature file. Labels come from the sidecar when present.
    Preprocess {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Train on feature files; writes a checkpoint and a report.
    Train {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        train: TrainFlags,
        /// Checkpoint path.
        #[arg(short, long)]
        output: PathBuf,
        /// Skip cross-validation; report only the held-out fold of the saved model.
        #[arg(long)]
        no_cv: bool,
    },
    /// Evaluate a checkpoint on a labelled feature file.
    Eval {
        checkpoint: PathBuf,
        features: PathBuf,
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
    /// Classify a live UDP stream epoch by epoch.
    Infer {
        checkpoint: PathBuf,
        #[command(flatten)]
        recv: ReceiveFlags,
    },
    /// Loopback transport benchmark.
    BenchNet {
        /// Seconds of signal to send.
        #[arg(long, default_value_t = 60.0)]
        duration: f64,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        unpaced: bool,
    },
    /// Cross-validate the full model, no-CBAM and post-activation variants.
    Ablate {
        #[command(flatten)]
        train: TrainFlags,
        /// Use the default homogeneous sensor noise instead of gains over 1..16.
        #[arg(long)]
        homogeneous: bool,
    },
}

/// Parses `args` (including the program name), runs and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = io::stdout();
    let mut out = stdout.lock();
    dispatch(args, &mut out, &mut io::stderr())
}

pub fn dispatch<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    1
                }
            };
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let line = e.to_string().replace('\n', " ");
            let _ = writeln!(err, "acpa-eeg: error: {line}");
            e.exit_code()
        }
    }
}

fn flag<T: ToString>(overrides: &mut Vec<(String, String)>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        overrides.push((key.to_string(), v.to_string()));
    }
}

fn sim_flags(o: &mut Vec<(String, String)>, s: &SimFlags) {
    flag(o, "seed", s.seed);
    flag(o, "sim.duration", s.duration);
    flag(o, "sim.class", s.class.as_ref());
}

fn train_flags(o: &mut Vec<(String, String)>, t: &TrainFlags) {
    flag(o, "seed", t.seed);
    flag(o, "train.epochs", t.epochs);
    flag(o, "train.folds", t.folds);
}

fn recv_flags(o: &mut Vec<(String, String)>, r: &ReceiveFlags) {
    flag(o, "net.port", r.port);
    flag(o, "net.idle_timeout", r.idle_timeout);
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut rc = RunConfig::default();
    if let Some(path) = &cli.config {
        rc.apply_file(path)?;
    }
    let mut o = Vec::new();
    match &cli.command {
        Command::Simulate { sim, .. } => sim_flags(&mut o, sim),
        Command::Stream { sim, batch, .. } => {
            sim_flags(&mut o, sim);
            flag(&mut o, "net.batch", *batch);
        }
        Command::Capture { recv, .. } | Command::Infer { recv, .. } => recv_flags(&mut o, recv),
        Command::Train { train, .. } => train_flags(&mut o, train),
        Command::Ablate { train, homogeneous } => {
            train_flags(&mut o, train);
            if !homogeneous && rc.source("dataset.noise_gain_range") == Some(crate::config::Source::Default) {
                o.push(("dataset.noise_gain_range".into(), "1,16".into()));
            }
        }
        Command::BenchNet { batch, .. } => flag(&mut o, "net.batch", *batch),
        Command::Preprocess { .. } | Command::Eval { .. } => {}
    }
    for (k, v) in o {
        rc.set(&k, &v, crate::config::Source::Flag)?;
    }
    for spec in &cli.set {
        rc.apply_override(spec)?;
    }
    rc.validate()?;
    Ok(rc)
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let rc = resolve(&cli)?;
    if cli.show_config {
        write!(out, "{}", rc.show()).map_err(io_err("stdout"))?;
        return Ok(());
    }
    let verbose = cli.verbose;
    match cli.command {
        Command::Simulate { output, .. } => simulate(&rc, &output, out),
        Command::Stream { input, to, unpaced, .. } => stream(&rc, input.as_deref(), to.as_deref(), unpaced, out),
        Command::Capture { recv, output } => capture(&rc, &recv, &output, out),
        Command::Preprocess { input, output } => preprocess(&rc, &input, &output, out),
        Command::Train {
            inputs,
            train,
            output,
            no_cv,
        } => train_cmd(&rc, &inputs, &output, train.report.as_deref(), no_cv, verbose, out),
        Command::Eval {
            checkpoint,
            features,
            report,
        } => eval_cmd(&rc, &checkpoint, &features, report.as_deref(), out),
        Command::Infer { checkpoint, recv } => infer(&rc, &checkpoint, &recv, out),
        Command::BenchNet {
            duration,
            unpaced,
            ..
        } => bench_net(&rc, duration, unpaced, out),
        Command::Ablate { train, .. } => ablate(&rc, train.report.as_deref(), verbose, out),
    }
}

fn emit(out: &mut dyn Write, doc: &KvDoc) -> Result<(), CliError> {
    write!(out, "{}", doc.to_text()).map_err(io_err("stdout"))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path.display()))
}

fn simulate(rc: &RunConfig, output: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = rc.sim_config()?;
    let adc = rc.adc_config()?;
    let report = stream_session(&cfg, &adc, SessionSink::File(output))?;
    let epoch_len = rc.preprocess_config()?.stft.epoch_len();
    let events = session_events(report.samples, rc.lead_in_samples()?, epoch_len, cfg.class_label);
    let sidecar = sidecar_path(output);
    write_file(&sidecar, &truth_to_kv(&cfg, &report.truth, &events).to_text())?;
    let mut d = KvDoc::new();
    d.set("samples", report.samples);
    d.set("class", cfg.class_label.name());
    d.set("blinks", report.truth.blink_times.len());
    d.set("epochs", events.len());
    d.set("raw", output.display());
    d.set("truth", sidecar.display());
    emit(out, &d)
}

fn socket_addr(s: &str) -> Result<SocketAddr, CliError> {
    s.to_socket_addrs()
        .map_err(|e| CliError::Usage(format!("bad address `{s}`: {e}")))?
        .next()
        .ok_or_else(|| CliError::Usage(format!("address `{s}` did not resolve")))
}

fn default_dest(rc: &RunConfig) -> Result<SocketAddr, CliError> {
    socket_addr(&format!("{}:{}", rc.host(), rc.port()?))
}

fn sender_socket(dest: &SocketAddr) -> Result<UdpSocket, CliError> {
    let bind: SocketAddr = if dest.is_ipv4() {
        ([0, 0, 0, 0], 0).into()
    } else {
        (std::net::Ipv6Addr::UNSPECIFIED, 0).into()
    };
    UdpSocket::bind(bind).map_err(io_err("binding sender socket"))
}

fn stream(
    rc: &RunConfig,
    input: Option<&Path>,
    to: Option<&str>,
    unpaced: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let dest = match to {
        Some(s) => socket_addr(s)?,
        None => default_dest(rc)?,
    };
    let socket = sender_socket(&dest)?;
    let fs: f64 = rc.parse("sim.fs")?;
    let send = SendConfig {
        batch: rc.batch()?,
        pacing: if unpaced { Pacing::Unpaced } else { Pacing::Realtime { fs } },
    };
    let report = match input {
        Some(path) => {
            let rec = RawRecording::load(path)?;
            let send = SendConfig {
                pacing: if unpaced { Pacing::Unpaced } else { Pacing::Realtime { fs: rec.fs } },
                ..send
            };
            crate::sim::replay_recording(&rec, &socket, dest, &send)?
        }
        None => {
            let cfg = rc.sim_config()?;
            let sink = SessionSink::Udp {
                socket: &socket,
                dest,
                send,
            };
            stream_session(&cfg, &rc.adc_config()?, sink)?
                .send
                .expect("UDP sink reports sends")
        }
    };
    let mut d = KvDoc::new();
    d.set("destination", dest);
    d.set("packets", report.packets);
    d.set("samples", report.samples);
    d.set("bytes", report.bytes);
    d.set("elapsed_s", format!("{:.3}", report.elapsed.as_secs_f64()));
    emit(out, &d)
}

fn receiver_config(rc: &RunConfig, recv: &ReceiveFlags) -> Result<ReceiverConfig, CliError> {
    let bind = socket_addr(&format!("{}:{}", rc.host(), rc.port()?))?;
    let max_duration = recv
        .max_duration
        .map(|s| Duration::try_from_secs_f64(s).map_err(|e| CliError::Usage(format!("--max-duration: {e}"))))
        .transpose()?;
    Ok(ReceiverConfig {
        bind,
        queue_capacity: rc.parse("net.queue_capacity")?,
        idle_timeout: Some(rc.idle_timeout()?),
        expected_packets: recv.packets,
        max_duration,
    })
}

fn capture(rc: &RunConfig, recv: &ReceiveFlags, output: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let fs: f64 = rc.parse("sim.fs")?;
    let mut packets: Vec<(u32, Vec<Sample>)> = Vec::new();
    let stats = net::receive_loop(receiver_config(rc, recv)?, |p| packets.push((p.seq, p.samples.clone())))?;
    // Reordered packets are put back in sequence; timestamps are nominal so
    // the file depends only on the samples.
    packets.sort_by_key(|p| p.0);
    let mut rec = RawRecording::new(fs);
    for sample in packets.into_iter().flat_map(|p| p.1) {
        rec.push(sample_timestamp_us(rec.len(), fs), sample);
    }
    rec.save(output)?;
    writeln!(out, "{}", stats.summary()).map_err(io_err("stdout"))
}

/// Events for a recording: from the truth sidecar when there is one,
/// otherwise markers every epoch after the lead-in and no labels.
fn recording_events(
    rc: &RunConfig,
    raw: &Path,
    n_samples: usize,
    epoch_len: usize,
) -> Result<(Vec<(usize, EmotionLabel)>, bool), CliError> {
    let sidecar = sidecar_path(raw);
    if sidecar.exists() {
        Ok((load_truth(&sidecar)?.events, true))
    } else {
        let events = session_events(n_samples, rc.lead_in_samples()?, epoch_len, EmotionLabel::Happiness);
        Ok((events, false))
    }
}

fn preprocess(rc: &RunConfig, input: &Path, output: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let rec = RawRecording::load(input)?;
    let pre = Preprocessor::new(rc.preprocess_config()?)?;
    let signal = rec.to_signal();
    let (events, labelled) = recording_events(rc, input, signal.len(), pre.config().stft.epoch_len())?;
    let mut result = pre.run(&signal, &events)?;
    if !labelled {
        for f in &mut result.features {
            f.label = None;
        }
    }
    save_features(output, &result.features)?;
    let mut d = KvDoc::new();
    d.set("epochs", result.features.len());
    d.set("skipped", result.skipped.len());
    d.set("labelled", labelled);
    if let Some(ica) = &result.ica {
        d.set("ica_removed", crate::kv::join(&ica.removed));
        d.set("ica_converged", ica.converged);
        d.set("ica_iterations", ica.iterations);
    }
    d.set("output", output.display());
    emit(out, &d)
}

fn load_dataset(inputs: &[PathBuf]) -> Result<Dataset, CliError> {
    let mut samples: Vec<FeatureTensor> = Vec::new();
    for path in inputs {
        samples.extend(load_features(path)?);
    }
    Ok(Dataset {
        samples,
        subject_id: 0,
        provenance: Provenance::File(inputs[0].clone()),
    })
}

fn finish_report(report: &EvalReport, path: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    write!(out, "{}", report.to_text()).map_err(io_err("stdout"))?;
    if let Some(path) = path {
        write_file(path, &report.to_kv().to_text())?;
    }
    Ok(())
}

fn train_cmd(
    rc: &RunConfig,
    inputs: &[PathBuf],
    output: &Path,
    report_path: Option<&Path>,
    no_cv: bool,
    verbose: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let ds = load_dataset(inputs)?;
    let model_cfg = rc.model_config()?;
    let mut train_cfg = rc.train_config()?;
    train_cfg.verbose = verbose;
    let (k, seed) = (rc.folds()?, rc.seed()?);
    // The saved model is trained on all folds but the first, which it is
    // validated on.
    let plan = kfold_split(&ds.labels()?, k, seed)?;
    let fold = train_fold(&model_cfg, &ds.samples, &plan.train_indices(0), &plan.folds[0], &train_cfg, seed)?;
    save_checkpoint(output, &fold.model)?;
    let report = if no_cv {
        EvalReport::from_folds(
            ds.subject_id,
            seed,
            &[(fold.val_accuracy, fold.confusion)],
            config_echo(&model_cfg, &train_cfg, k),
        )
    } else {
        cross_validate(&model_cfg, &ds, k, &train_cfg, seed)?
    };
    finish_report(&report, report_path, out)
}

fn eval_cmd(
    rc: &RunConfig,
    checkpoint: &Path,
    features: &Path,
    report_path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let model = load_checkpoint(checkpoint)?;
    let ds = load_dataset(&[features.to_path_buf()])?;
    ds.labels()?;
    let idx: Vec<usize> = (0..ds.len()).collect();
    let confusion = evaluate(&model, &ds.samples, &idx)?;
    let mut echo = KvDoc::new();
    for (key, v) in model.config.to_kv().iter() {
        echo.set(&format!("model.{key}"), v);
    }
    echo.set("checkpoint", checkpoint.display());
    let report = EvalReport::from_folds(ds.subject_id, rc.seed()?, &[(confusion.accuracy(), confusion)], echo);
    finish_report(&report, report_path, out)
}

fn infer(rc: &RunConfig, checkpoint: &Path, recv: &ReceiveFlags, out: &mut dyn Write) -> Result<(), CliError> {
    let model = load_checkpoint(checkpoint)?;
    let pre = Preprocessor::new(rc.preprocess_config()?)?;
    let fs: f64 = rc.parse("sim.fs")?;
    let epoch_len = pre.config().stft.epoch_len();
    let lead = rc.lead_in_samples()?;
    let mut data: Vec<Vec<f64>> = vec![Vec::new(); 8];
    let mut next_epoch = lead;
    let mut failure: Option<CliError> = None;
    let stats = net::receive_loop(receiver_config(rc, recv)?, |p| {
        if failure.is_some() {
            return;
        }
        for s in &p.samples {
            for (row, v) in data.iter_mut().zip(s) {
                row.push(*v as f64);
            }
        }
        while data[0].len() >= next_epoch + epoch_len {
            // Each epoch is cleaned with up to `lead` samples of preceding
            // context so the causal filter has settled.
            let start = next_epoch.saturating_sub(lead);
            let window = Signal {
                fs,
                data: data.iter().map(|r| r[start..next_epoch + epoch_len].to_vec()).collect(),
            };
            let line = classify(&model, &pre, &window, next_epoch - start).map(|probs| {
                let best = (0..4).max_by(|&a, &b| probs[a].total_cmp(&probs[b])).unwrap_or(0);
                let name = EmotionLabel::from_id(best as u8).map_or("unknown", EmotionLabel::name);
                format!(
                    "{}\t{}\t{:.4} {:.4} {:.4} {:.4}",
                    sample_timestamp_us(next_epoch, fs),
                    name,
                    probs[0],
                    probs[1],
                    probs[2],
                    probs[3]
                )
            });
            match line {
                Ok(line) => {
                    if let Err(e) = writeln!(out, "{line}").and_then(|_| out.flush()) {
                        failure = Some(CliError::Io {
                            context: "stdout".into(),
                            source: e,
                        });
                    }
                }
                Err(e) => failure = Some(e),
            }
            next_epoch += epoch_len;
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    eprintln!("{}", stats.summary());
    Ok(())
}

fn classify(
    model: &crate::nn::Model,
    pre: &Preprocessor,
    window: &Signal,
    onset: usize,
) -> Result<Vec<f64>, CliError> {
    let result = pre.run(window, &[(onset, EmotionLabel::Happiness)])?;
    let batch = to_batch(&result.features, &[0])?;
    Ok(model.predict_proba(&batch)?.data().to_vec())
}

fn bench_net(rc: &RunConfig, duration: f64, unpaced: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let fs: f64 = rc.parse("sim.fs")?;
    let batch = rc.batch()?;
    if !(duration > 0.0) {
        return Err(CliError::Usage("--duration must be positive".into()));
    }
    let n = (duration * fs).round() as usize;
    let samples: Vec<Sample> = (0..n).map(|i| [(i % 1000) as f32; 8]).collect();
    let expected = n.div_ceil(batch) as u64;
    let receiver = net::Receiver::bind(ReceiverConfig {
        bind: socket_addr(&format!("{}:0", rc.host()))?,
        queue_capacity: rc.parse("net.queue_capacity")?,
        idle_timeout: Some(rc.idle_timeout()?),
        expected_packets: Some(expected),
        max_duration: None,
    })?;
    let dest = receiver.local_addr()?;
    let socket = sender_socket(&dest)?;
    let send = SendConfig {
        batch,
        pacing: if unpaced { Pacing::Unpaced } else { Pacing::Realtime { fs } },
    };
    let sender = thread::spawn(move || net::send_samples(&socket, dest, &samples, &send));
    let stats = receiver.run(|_| {})?;
    let sent = sender.join().expect("sender thread panicked")?;
    let mut d = KvDoc::new();
    d.set("packets_sent", sent.packets);
    d.set("received", stats.received);
    d.set("lost", stats.lost);
    d.set("reordered", stats.reordered);
    d.set("duplicated", stats.duplicated);
    d.set("malformed", stats.malformed);
    d.set("overflow_dropped", stats.overflow_dropped);
    d.set("latency_mean_us", format!("{:.1}", stats.latency_mean_us));
    d.set("latency_max_us", format!("{:.1}", stats.latency_max_us));
    emit(out, &d)
}

fn ablate(rc: &RunConfig, report_path: Option<&Path>, verbose: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let ds_cfg = rc.dataset_config()?;
    let seed = rc.seed()?;
    let ds = build_subject(0, seed, &ds_cfg)?;
    let mut train_cfg = rc.train_config()?;
    train_cfg.verbose = verbose;
    let report = ablation_study(&rc.model_config()?, &ds, rc.folds()?, &train_cfg, seed)?;
    write!(out, "{}", report.to_text()).map_err(io_err("stdout"))?;
    if let Some(path) = report_path {
        write_file(path, &report.to_kv().to_text())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = dispatch(args.iter().copied(), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn no_arguments_is_usage() {
        let (code, _, err) = run_capture(&["acpa-eeg"]);
        assert_eq!(code, 1);
        assert!(err.contains("Usage"));
    }

    #[test]
    fn unknown_key_is_usage() {
        let (code, _, err) = run_capture(&["acpa-eeg", "--set", "nope=1", "simulate", "-o", "/dev/null"]);
        assert_eq!(code, 1);
        assert_eq!(err.lines().count(), 1);
        assert!(err.contains("nope"));
    }

    #[test]
    fn missing_input_is_runtime_error() {
        let (code, _, err) = run_capture(&["acpa-eeg", "preprocess", "/nonexistent.raw", "-o", "/dev/null"]);
        assert_eq!(code, 2);
        assert_eq!(err.lines().count(), 1);
    }

    #[test]
    fn show_config_marks_sources() {
        let (code, out, _) = run_capture(&["acpa-eeg", "--show-config", "simulate", "--seed", "7", "-o", "x"]);
        assert_eq!(code, 0);
        assert!(out.lines().any(|l| l.starts_with("seed ") && l.contains("= 7") && l.ends_with("# flag")));
        assert!(out.lines().any(|l| l.starts_with("sim.fs ") && l.ends_with("# default")));
    }
}
