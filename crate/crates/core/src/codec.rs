//! ADS1299-style acquisition frames.
//!
//! A frame is 27 octets: a 24-bit status word followed by eight big-endian
//! 24-bit two's-complement channel codes, in the order the chip shifts them
//! out over SPI.
//!
//! ```text
//! status bits  23..20  sync nibble, always 0b1100
//!              19..12  lead-off P, channel 1 at bit 19
//!              11..4   lead-off N, channel 1 at bit 11
//!               3..0   GPIO 4..1 (GPIO 1 at bit 0)
//! ```
//!
//! Conversion to physical units uses `LSB = vref / (gain * 2^23)`.

use thiserror::Error;

/// Octets in one frame: 3 status + 8 x 3 data.
pub const FRAME_LEN: usize = 27;

/// Channels per frame.
pub const N_CHANNELS: usize = 8;

/// Electrode positions (10-20 system) in channel order.
pub const MONTAGE: [&str; N_CHANNELS] = ["P3", "Pz", "P4", "O1", "Oz", "O2", "T5", "T6"];

const SYNC_NIBBLE: u32 = 0b1100;
const CODE_MAX: i32 = (1 << 23) - 1;
const CODE_MIN: i32 = -(1 << 23);
const FULL_SCALE_COUNTS: f64 = (1u32 << 23) as f64;
const VALID_GAINS: [u8; 7] = [1, 2, 4, 6, 8, 12, 24];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("frame must be {FRAME_LEN} octets, got {0}")]
    BadLength(usize),
    #[error("status sync nibble is {0:#06b}, expected 0b1100")]
    BadSync(u8),
    #[error("invalid ADC configuration: {0}")]
    InvalidConfig(String),
}

/// Converter settings that determine the code-to-voltage scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdcConfig {
    vref: f64,
    gain: u8,
    sample_rate: f64,
}

impl Default for AdcConfig {
    fn default() -> Self {
        Self {
            vref: 4.5,
            gain: 24,
            sample_rate: 250.0,
        }
    }
}

impl AdcConfig {
    pub fn new(vref: f64, gain: u8, sample_rate: f64) -> Result<Self, CodecError> {
        if !(vref > 0.0 && vref.is_finite()) {
            return Err(CodecError::InvalidConfig(format!("vref must be > 0, got {vref}")));
        }
        if !VALID_GAINS.contains(&gain) {
            return Err(CodecError::InvalidConfig(format!(
                "gain must be one of {VALID_GAINS:?}, got {gain}"
            )));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(CodecError::InvalidConfig(format!(
                "sample_rate must be > 0, got {sample_rate}"
            )));
        }
        Ok(Self {
            vref,
            gain,
            sample_rate,
        })
    }

    pub fn vref(&self) -> f64 {
        self.vref
    }

    pub fn gain(&self) -> u8 {
        self.gain
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// Size of one code step in microvolts.
    pub fn lsb_microvolts(&self) -> f64 {
        self.vref / (self.gain as f64 * FULL_SCALE_COUNTS) * 1e6
    }

    /// `vref / gain` in microvolts.
    pub fn full_scale_microvolts(&self) -> f64 {
        self.vref / self.gain as f64 * 1e6
    }
}

/// A signed 24-bit converter code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Code24(i32);

impl Code24 {
    pub const MIN: Code24 = Code24(CODE_MIN);
    pub const MAX: Code24 = Code24(CODE_MAX);
    pub const ZERO: Code24 = Code24(0);

    /// Returns `None` outside `[-2^23, 2^23 - 1]`.
    pub fn new(value: i32) -> Option<Self> {
        (CODE_MIN..=CODE_MAX).contains(&value).then_some(Self(value))
    }

    pub fn saturating(value: i64) -> Self {
        Self(value.clamp(CODE_MIN as i64, CODE_MAX as i64) as i32)
    }

    pub fn value(self) -> i32 {
        self.0
    }

    /// Sign-extends a big-endian 24-bit field.
    pub fn from_be_bytes(b: [u8; 3]) -> Self {
        let raw = ((b[0] as u32) << 16) | ((b[1] as u32) << 8) | b[2] as u32;
        Self(((raw << 8) as i32) >> 8)
    }

    pub fn to_be_bytes(self) -> [u8; 3] {
        let raw = self.0 as u32;
        [(raw >> 16) as u8, (raw >> 8) as u8, raw as u8]
    }
}

pub fn code_to_microvolts(code: Code24, cfg: &AdcConfig) -> f64 {
    code.0 as f64 * cfg.lsb_microvolts()
}

/// Round-to-nearest quantization, saturating at the code range. NaN maps to zero.
pub fn microvolts_to_code(microvolts: f64, cfg: &AdcConfig) -> Code24 {
    if microvolts.is_nan() {
        return Code24::ZERO;
    }
    let steps = (microvolts / cfg.lsb_microvolts()).round();
    if steps >= CODE_MAX as f64 {
        Code24::MAX
    } else if steps <= CODE_MIN as f64 {
        Code24::MIN
    } else {
        Code24(steps as i32)
    }
}

/// Lead-off and GPIO bits carried in the low 20 bits of the status word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StatusFlags {
    pub loff_p: [bool; N_CHANNELS],
    pub loff_n: [bool; N_CHANNELS],
    pub gpio: [bool; 4],
}

impl StatusFlags {
    /// Reads bits 19..0; higher bits are ignored.
    pub fn from_bits(bits: u32) -> Self {
        let mut flags = Self::default();
        for ch in 0..N_CHANNELS {
            flags.loff_p[ch] = bits & (1 << (19 - ch)) != 0;
            flags.loff_n[ch] = bits & (1 << (11 - ch)) != 0;
        }
        for (i, g) in flags.gpio.iter_mut().enumerate() {
            *g = bits & (1 << i) != 0;
        }
        flags
    }

    pub fn to_bits(&self) -> u32 {
        let mut bits = 0u32;
        for ch in 0..N_CHANNELS {
            if self.loff_p[ch] {
                bits |= 1 << (19 - ch);
            }
            if self.loff_n[ch] {
                bits |= 1 << (11 - ch);
            }
        }
        for (i, &g) in self.gpio.iter().enumerate() {
            if g {
                bits |= 1 << i;
            }
        }
        bits
    }

    pub fn any_lead_off(&self) -> bool {
        self.loff_p.iter().chain(self.loff_n.iter()).any(|&b| b)
    }
}

/// One undecoded frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawFrame {
    pub status: u32,
    pub channel_codes: [Code24; N_CHANNELS],
}

impl RawFrame {
    pub fn from_flags(flags: &StatusFlags, channel_codes: [Code24; N_CHANNELS]) -> Self {
        Self {
            status: (SYNC_NIBBLE << 20) | flags.to_bits(),
            channel_codes,
        }
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() != FRAME_LEN {
            return Err(CodecError::BadLength(bytes.len()));
        }
        let status = ((bytes[0] as u32) << 16) | ((bytes[1] as u32) << 8) | bytes[2] as u32;
        let sync = (status >> 20) & 0xF;
        if sync != SYNC_NIBBLE {
            return Err(CodecError::BadSync(sync as u8));
        }
        let mut channel_codes = [Code24::ZERO; N_CHANNELS];
        for (ch, code) in channel_codes.iter_mut().enumerate() {
            let off = 3 + 3 * ch;
            *code = Code24::from_be_bytes([bytes[off], bytes[off + 1], bytes[off + 2]]);
        }
        Ok(Self {
            status,
            channel_codes,
        })
    }

    pub fn to_bytes(&self) -> [u8; FRAME_LEN] {
        let mut out = [0u8; FRAME_LEN];
        out[0] = (self.status >> 16) as u8;
        out[1] = (self.status >> 8) as u8;
        out[2] = self.status as u8;
        for (ch, code) in self.channel_codes.iter().enumerate() {
            out[3 + 3 * ch..6 + 3 * ch].copy_from_slice(&code.to_be_bytes());
        }
        out
    }

    pub fn flags(&self) -> StatusFlags {
        StatusFlags::from_bits(self.status)
    }
}

/// Eight channels in microvolts plus the status flags of the frame they came from.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DecodedSample {
    pub microvolts: [f64; N_CHANNELS],
    pub flags: StatusFlags,
}

impl DecodedSample {
    pub fn new(microvolts: [f64; N_CHANNELS]) -> Self {
        Self {
            microvolts,
            flags: StatusFlags::default(),
        }
    }
}

pub fn decode_frame(bytes: &[u8], cfg: &AdcConfig) -> Result<DecodedSample, CodecError> {
    let frame = RawFrame::parse(bytes)?;
    Ok(DecodedSample {
        microvolts: frame.channel_codes.map(|c| code_to_microvolts(c, cfg)),
        flags: frame.flags(),
    })
}

pub fn encode_frame(sample: &DecodedSample, cfg: &AdcConfig) -> [u8; FRAME_LEN] {
    let codes = sample.microvolts.map(|v| microvolts_to_code(v, cfg));
    RawFrame::from_flags(&sample.flags, codes).to_bytes()
}
