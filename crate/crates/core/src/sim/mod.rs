//! Deterministic synthetic 8-channel EEG source.
//!
//! Stands in for a subject wearing the electrode cap: class-dependent
//! oscillations in the 8-13 Hz and 13-18 Hz sub-bands, pink background noise,
//! mains pickup and eye-blink pulses. Every component is returned separately
//! in [`GroundTruth`] so downstream stages can be scored exactly.

mod artifacts;
mod capture;
mod config;
mod generate;

pub use artifacts::{
    blink_onsets, blink_template, inject_artifacts, inject_blinks_at, BlinkRecord, BLINK_SECONDS,
};
pub use capture::{
    load_truth, parse_truth, sample_timestamp_us, sidecar_path, truth_to_kv, RawRecording,
    TruthSidecar, RAW_HEADER_LEN, RAW_MAGIC, RAW_RECORD_LEN, RAW_VERSION,
};
pub use config::{
    EmotionLabel, SimConfig, ALPHA_WEIGHTS, BETA_WEIGHTS, BLINK_WEIGHTS, MAINS_WEIGHTS,
};
pub use generate::{
    generate_session, lead_field, pink_noise, GroundTruth, ALPHA_BAND, BETA_BAND, LATENT_PER_BAND,
};

use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::path::Path;

use thiserror::Error;

use crate::codec::{decode_frame, encode_frame, AdcConfig, CodecError, DecodedSample};
use crate::kv::KvError;
use crate::net::{self, NetError, SendConfig, SendReport};
use crate::signal::Signal;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulator configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown emotion label `{0}`")]
    UnknownLabel(String),
    #[error("not a raw capture file (bad magic)")]
    BadMagic,
    #[error("unsupported raw capture version {0}")]
    BadVersion(u16),
    #[error("raw capture has {0} channels, expected 8")]
    BadChannelCount(usize),
    #[error("truncated {0}")]
    Truncated(&'static str),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

/// Non-overlapping event markers: one every `epoch_len` samples after `lead_in`,
/// as many as fit in `n_samples`.
pub fn session_events(
    n_samples: usize,
    lead_in: usize,
    epoch_len: usize,
    label: EmotionLabel,
) -> Vec<(usize, EmotionLabel)> {
    let mut events = Vec::new();
    let mut start = lead_in;
    while epoch_len > 0 && start + epoch_len <= n_samples {
        events.push((start, label));
        start += epoch_len;
    }
    events
}

/// Passes each sample through the 24-bit frame codec, as the acquisition
/// board does before transmission.
pub fn quantize_through_codec(signal: &Signal, adc: &AdcConfig) -> Result<Vec<DecodedSample>, SimError> {
    let n = signal.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut uv = [0.0; 8];
        for (ch, v) in uv.iter_mut().enumerate() {
            *v = signal.data[ch][i];
        }
        let frame = encode_frame(&DecodedSample::new(uv), adc);
        out.push(decode_frame(&frame, adc)?);
    }
    Ok(out)
}

pub fn to_recording(samples: &[DecodedSample], fs: f64) -> RawRecording {
    let mut rec = RawRecording::new(fs);
    for (i, s) in samples.iter().enumerate() {
        rec.push(sample_timestamp_us(i, fs), net::to_wire_sample(s));
    }
    rec
}

/// Where a streamed session goes.
pub enum SessionSink<'a> {
    Udp {
        socket: &'a UdpSocket,
        dest: SocketAddr,
        send: SendConfig,
    },
    File(&'a Path),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionReport {
    pub samples: usize,
    pub send: Option<SendReport>,
    pub truth: GroundTruth,
}

/// Generate, frame-encode, decode, then send over UDP or write a raw capture.
pub fn stream_session(cfg: &SimConfig, adc: &AdcConfig, sink: SessionSink<'_>) -> Result<SessionReport, SimError> {
    cfg.validate()?;
    let (signal, truth) = generate_session(cfg);
    let decoded = quantize_through_codec(&signal, adc)?;
    let send = match sink {
        SessionSink::Udp { socket, dest, send } => Some(net::send_stream(socket, dest, &decoded, &send)?),
        SessionSink::File(path) => {
            to_recording(&decoded, cfg.fs).save(path)?;
            None
        }
    };
    Ok(SessionReport {
        samples: decoded.len(),
        send,
        truth,
    })
}

/// Re-sends a raw capture over UDP.
pub fn replay_recording(
    rec: &RawRecording,
    socket: &UdpSocket,
    dest: SocketAddr,
    send: &SendConfig,
) -> Result<SendReport, SimError> {
    Ok(net::send_samples(socket, dest, &rec.samples, send)?)
}
