//! Feature files.
//!
//! ```text
//! "EEGFEAT1"   8 octets
//! version      u16 LE (1)
//! count        u32 LE
//! records      label u8 (255 = unlabeled), 8*16*63 f32 LE channel-major
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::stft::FeatureTensor;
use super::DspError;
use crate::sim::EmotionLabel;

pub const FEAT_MAGIC: [u8; 8] = *b"EEGFEAT1";
pub const FEAT_VERSION: u16 = 1;
pub const UNLABELED: u8 = 255;
pub const FEAT_CHANNELS: usize = 8;
pub const FEAT_BINS: usize = 16;
pub const FEAT_FRAMES: usize = 63;
const VALUES: usize = FEAT_CHANNELS * FEAT_BINS * FEAT_FRAMES;

pub fn write_features<W: Write>(mut w: W, features: &[FeatureTensor]) -> Result<(), DspError> {
    w.write_all(&FEAT_MAGIC)?;
    w.write_all(&FEAT_VERSION.to_le_bytes())?;
    w.write_all(&(features.len() as u32).to_le_bytes())?;
    for t in features {
        if t.shape() != [FEAT_CHANNELS, FEAT_BINS, FEAT_FRAMES] {
            return Err(DspError::InvalidSpec(format!(
                "feature file records are 8x16x63, got {:?}",
                t.shape()
            )));
        }
        w.write_all(&[t.label.map_or(UNLABELED, EmotionLabel::id)])?;
        for v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_features(bytes: &[u8]) -> Result<Vec<FeatureTensor>, DspError> {
    if bytes.len() < 14 {
        return Err(DspError::Truncated("feature header"));
    }
    if bytes[..8] != FEAT_MAGIC {
        return Err(DspError::BadMagic);
    }
    let version = u16::from_le_bytes([bytes[8], bytes[9]]);
    if version != FEAT_VERSION {
        return Err(DspError::BadVersion(version));
    }
    let count = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let rec_len = 1 + 4 * VALUES;
    let body = &bytes[14..];
    if body.len() != count * rec_len {
        return Err(DspError::Truncated("feature records"));
    }
    body.chunks_exact(rec_len)
        .map(|rec| {
            let label = match rec[0] {
                UNLABELED => None,
                id => Some(EmotionLabel::from_id(id).ok_or(DspError::BadLabel(id))?),
            };
            let data = rec[1..]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            Ok(FeatureTensor {
                channels: FEAT_CHANNELS,
                bins: FEAT_BINS,
                frames: FEAT_FRAMES,
                data,
                label,
            })
        })
        .collect()
}

pub fn save_features(path: &Path, features: &[FeatureTensor]) -> Result<(), DspError> {
    write_features(BufWriter::new(fs::File::create(path)?), features)
}

pub fn load_features(path: &Path) -> Result<Vec<FeatureTensor>, DspError> {
    read_features(&fs::read(path)?)
}
