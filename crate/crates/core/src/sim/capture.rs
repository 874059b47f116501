//! Raw capture files and ground-truth sidecars.
//!
//! Raw layout (all little-endian):
//!
//! ```text
//! "EEGRAW1\0"         8 octets
//! version             u16 (1)
//! n_channels          u16 (8)
//! fs                  f64
//! channel names       8 x 8 octets, zero padded
//! records             (timestamp_us u64, 8 x f32 uV) until end of file
//! ```
//!
//! The sidecar is `key = value` text with these keys: `label`, `label_id`,
//! `seed`, `fs`, `n_samples`, `duration`, the simulator amplitudes
//! (`alpha_band_power`, `beta_band_power`, `pink_noise_rms`, `sensor_noise_rms`, `mains_freq`,
//! `mains_amp`, `blink_rate`, `blink_amp`, `amplitude_scale`,
//! `channel_noise_gain`), `blink_count`, `blink_times` (comma-separated
//! onsets) and `events` (comma-separated `sample:label_id`).

use std::fs;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::codec::{MONTAGE, N_CHANNELS};
use crate::kv::{self, KvDoc};
use crate::net::Sample;

use super::config::{EmotionLabel, SimConfig};
use super::generate::GroundTruth;
use super::SimError;

pub const RAW_MAGIC: [u8; 8] = *b"EEGRAW1\0";
pub const RAW_VERSION: u16 = 1;
pub const RAW_HEADER_LEN: usize = 8 + 2 + 2 + 8 + 8 * N_CHANNELS;
pub const RAW_RECORD_LEN: usize = 8 + 4 * N_CHANNELS;

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    pub fs: f64,
    pub channel_names: [String; N_CHANNELS],
    pub timestamps_us: Vec<u64>,
    pub samples: Vec<Sample>,
}

impl RawRecording {
    pub fn new(fs: f64) -> Self {
        Self {
            fs,
            channel_names: MONTAGE.map(String::from),
            timestamps_us: Vec::new(),
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, timestamp_us: u64, sample: Sample) {
        self.timestamps_us.push(timestamp_us);
        self.samples.push(sample);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Channels-by-samples view in f64.
    pub fn to_signal(&self) -> crate::signal::Signal {
        let mut data = vec![Vec::with_capacity(self.len()); N_CHANNELS];
        for s in &self.samples {
            for (row, v) in data.iter_mut().zip(s) {
                row.push(*v as f64);
            }
        }
        crate::signal::Signal { fs: self.fs, data }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&RAW_MAGIC)?;
        w.write_all(&RAW_VERSION.to_le_bytes())?;
        w.write_all(&(N_CHANNELS as u16).to_le_bytes())?;
        w.write_all(&self.fs.to_le_bytes())?;
        for name in &self.channel_names {
            let mut field = [0u8; 8];
            let bytes = name.as_bytes();
            let n = bytes.len().min(8);
            field[..n].copy_from_slice(&bytes[..n]);
            w.write_all(&field)?;
        }
        for (ts, s) in self.timestamps_us.iter().zip(&self.samples) {
            w.write_all(&ts.to_le_bytes())?;
            for v in s {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, SimError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() < RAW_HEADER_LEN {
            return Err(SimError::Truncated("raw header"));
        }
        if bytes[..8] != RAW_MAGIC {
            return Err(SimError::BadMagic);
        }
        let version = u16::from_le_bytes([bytes[8], bytes[9]]);
        if version != RAW_VERSION {
            return Err(SimError::BadVersion(version));
        }
        let n_channels = u16::from_le_bytes([bytes[10], bytes[11]]) as usize;
        if n_channels != N_CHANNELS {
            return Err(SimError::BadChannelCount(n_channels));
        }
        let fs = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let mut channel_names: [String; N_CHANNELS] = Default::default();
        for (i, name) in channel_names.iter_mut().enumerate() {
            let field = &bytes[20 + 8 * i..28 + 8 * i];
            let end = field.iter().position(|&b| b == 0).unwrap_or(8);
            *name = String::from_utf8_lossy(&field[..end]).into_owned();
        }
        let body = &bytes[RAW_HEADER_LEN..];
        if body.len() % RAW_RECORD_LEN != 0 {
            return Err(SimError::Truncated("raw record"));
        }
        let mut rec = RawRecording {
            fs,
            channel_names,
            timestamps_us: Vec::with_capacity(body.len() / RAW_RECORD_LEN),
            samples: Vec::with_capacity(body.len() / RAW_RECORD_LEN),
        };
        for chunk in body.chunks_exact(RAW_RECORD_LEN) {
            let ts = u64::from_le_bytes(chunk[..8].try_into().unwrap());
            let mut s = [0f32; N_CHANNELS];
            for (v, b) in s.iter_mut().zip(chunk[8..].chunks_exact(4)) {
                *v = f32::from_le_bytes(b.try_into().unwrap());
            }
            rec.push(ts, s);
        }
        Ok(rec)
    }

    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        self.write_to(BufWriter::new(fs::File::create(path)?))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        Self::read_from(BufReader::new(fs::File::open(path)?))
    }
}

/// Sample timestamp for a synthetic session: `index * 1e6 / fs` rounded.
pub fn sample_timestamp_us(index: usize, fs: f64) -> u64 {
    (index as f64 * 1e6 / fs).round() as u64
}

/// Default sidecar location: `<raw path>.truth`.
pub fn sidecar_path(raw: &Path) -> PathBuf {
    let mut s = raw.as_os_str().to_owned();
    s.push(".truth");
    PathBuf::from(s)
}

/// Parsed sidecar content needed downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthSidecar {
    pub label: EmotionLabel,
    pub fs: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub blink_times: Vec<usize>,
    pub events: Vec<(usize, EmotionLabel)>,
}

pub fn truth_to_kv(cfg: &SimConfig, truth: &GroundTruth, events: &[(usize, EmotionLabel)]) -> KvDoc {
    let mut doc = KvDoc::new();
    doc.set("label", truth.label.name());
    doc.set("label_id", truth.label.id());
    doc.set("seed", cfg.seed);
    doc.set("fs", cfg.fs);
    doc.set("n_samples", cfg.n_samples());
    doc.set("duration", cfg.duration);
    doc.set("alpha_band_power", cfg.alpha_band_power);
    doc.set("beta_band_power", cfg.beta_band_power);
    doc.set("pink_noise_rms", cfg.pink_noise_rms);
    doc.set("sensor_noise_rms", cfg.sensor_noise_rms);
    doc.set("mains_freq", cfg.mains_freq);
    doc.set("mains_amp", cfg.mains_amp);
    doc.set("blink_rate", cfg.blink_rate);
    doc.set("blink_amp", cfg.blink_amp);
    doc.set("amplitude_scale", cfg.amplitude_scale);
    doc.set("channel_noise_gain", kv::join(cfg.channel_noise_gain));
    doc.set("blink_count", truth.blink_times.len());
    doc.set("blink_times", kv::join(&truth.blink_times));
    doc.set(
        "events",
        kv::join(events.iter().map(|(s, l)| format!("{s}:{}", l.id()))),
    );
    doc
}

pub fn parse_truth(doc: &KvDoc) -> Result<TruthSidecar, SimError> {
    let label_id: u8 = doc.parse_value("label_id")?;
    let label = EmotionLabel::from_id(label_id)
        .ok_or_else(|| SimError::UnknownLabel(label_id.to_string()))?;
    let list = |key: &str| -> Result<Vec<&str>, SimError> {
        Ok(doc
            .require(key)?
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect())
    };
    let blink_times = list("blink_times")?
        .into_iter()
        .map(|s| s.parse().map_err(|_| SimError::InvalidConfig(format!("blink time `{s}`"))))
        .collect::<Result<_, _>>()?;
    let events = list("events")?
        .into_iter()
        .map(|s| {
            let err = || SimError::InvalidConfig(format!("event `{s}`"));
            let (sample, id) = s.split_once(':').ok_or_else(err)?;
            let sample = sample.parse().map_err(|_| err())?;
            let id: u8 = id.parse().map_err(|_| err())?;
            Ok((sample, EmotionLabel::from_id(id).ok_or_else(err)?))
        })
        .collect::<Result<_, SimError>>()?;
    Ok(TruthSidecar {
        label,
        fs: doc.parse_value("fs")?,
        n_samples: doc.parse_value("n_samples")?,
        seed: doc.parse_value("seed")?,
        blink_times,
        events,
    })
}

pub fn load_truth(path: &Path) -> Result<TruthSidecar, SimError> {
    parse_truth(&KvDoc::parse(&fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_roundtrip_and_errors() {
        let mut rec = RawRecording::new(250.0);
        rec.push(0, [1.0; 8]);
        rec.push(4000, [-2.5; 8]);
        let mut buf = Vec::new();
        rec.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), RAW_HEADER_LEN + 2 * RAW_RECORD_LEN);
        assert_eq!(&buf[..8], b"EEGRAW1\0");
        assert_eq!(RawRecording::read_from(&buf[..]).unwrap(), rec);

        assert!(matches!(
            RawRecording::read_from(&buf[..buf.len() - 1]),
            Err(SimError::Truncated(_))
        ));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(RawRecording::read_from(&bad[..]), Err(SimError::BadMagic)));
        assert!(matches!(RawRecording::read_from(&buf[..10]), Err(SimError::Truncated(_))));
    }

    #[test]
    fn sidecar_roundtrip() {
        let cfg = SimConfig::for_class(EmotionLabel::Sadness, 4, 30.0);
        let (_, truth) = super::super::generate_session(&cfg);
        let events = vec![(500, EmotionLabel::Sadness), (2740, EmotionLabel::Sadness)];
        let doc = truth_to_kv(&cfg, &truth, &events);
        let back = parse_truth(&KvDoc::parse(&doc.to_text()).unwrap()).unwrap();
        assert_eq!(back.label, EmotionLabel::Sadness);
        assert_eq!(back.events, events);
        assert_eq!(back.blink_times, truth.blink_times);
        assert_eq!(back.n_samples, 7500);
    }
}
