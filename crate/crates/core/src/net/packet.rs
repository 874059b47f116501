//! Datagram layout.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "EEG1"
//!      4     1  version (1)
//!      5     1  flags (reserved, 0)
//!      6     4  seq, u32 LE
//!     10     8  timestamp_us, u64 LE (sender clock)
//!     18     2  n_samples, u16 LE
//!     20  32*n  samples, n x 8 x f32 LE (microvolts)
//! ```

use crate::codec::N_CHANNELS;

use super::NetError;

pub const MAGIC: [u8; 4] = *b"EEG1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 20;
pub const SAMPLE_LEN: usize = 4 * N_CHANNELS;
/// Keeps a datagram at 1300 octets, under a 1500-octet MTU.
pub const MAX_SAMPLES: usize = 40;

pub type Sample = [f32; N_CHANNELS];

#[derive(Debug, Clone, PartialEq)]
pub struct StreamPacket {
    pub flags: u8,
    pub seq: u32,
    pub timestamp_us: u64,
    pub samples: Vec<Sample>,
}

impl StreamPacket {
    pub fn new(seq: u32, timestamp_us: u64, samples: Vec<Sample>) -> Self {
        Self {
            flags: 0,
            seq,
            timestamp_us,
            samples,
        }
    }

    pub fn wire_len(&self) -> usize {
        HEADER_LEN + SAMPLE_LEN * self.samples.len()
    }
}

pub fn serialize_packet(p: &StreamPacket) -> Result<Vec<u8>, NetError> {
    if p.samples.len() > MAX_SAMPLES {
        return Err(NetError::PayloadTooLarge(p.samples.len()));
    }
    let mut out = Vec::with_capacity(p.wire_len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(p.flags);
    out.extend_from_slice(&p.seq.to_le_bytes());
    out.extend_from_slice(&p.timestamp_us.to_le_bytes());
    out.extend_from_slice(&(p.samples.len() as u16).to_le_bytes());
    for sample in &p.samples {
        for v in sample {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn parse_packet(bytes: &[u8]) -> Result<StreamPacket, NetError> {
    if bytes.len() < HEADER_LEN {
        return Err(NetError::TruncatedPayload {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if bytes[..4] != MAGIC {
        return Err(NetError::BadMagic);
    }
    if bytes[4] != VERSION {
        return Err(NetError::BadVersion(bytes[4]));
    }
    let flags = bytes[5];
    let seq = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
    let timestamp_us = u64::from_le_bytes(bytes[10..18].try_into().unwrap());
    let n = u16::from_le_bytes([bytes[18], bytes[19]]) as usize;
    let expected = HEADER_LEN + SAMPLE_LEN * n;
    if bytes.len() != expected {
        return Err(NetError::TruncatedPayload {
            expected,
            actual: bytes.len(),
        });
    }
    let samples = bytes[HEADER_LEN..]
        .chunks_exact(SAMPLE_LEN)
        .map(|chunk| {
            let mut s = [0f32; N_CHANNELS];
            for (v, b) in s.iter_mut().zip(chunk.chunks_exact(4)) {
                *v = f32::from_le_bytes(b.try_into().unwrap());
            }
            s
        })
        .collect();
    Ok(StreamPacket {
        flags,
        seq,
        timestamp_us,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_only_packet() {
        let bytes = serialize_packet(&StreamPacket::new(0, 0, vec![])).unwrap();
        assert_eq!(bytes.len(), 20);
        assert_eq!(&bytes[..4], &[0x45, 0x45, 0x47, 0x31]);
    }

    #[test]
    fn one_zero_sample() {
        let bytes = serialize_packet(&StreamPacket::new(3, 9, vec![[0.0; 8]])).unwrap();
        assert_eq!(bytes.len(), 52);
        assert!(bytes[20..].iter().all(|&b| b == 0));
    }

    #[test]
    fn payload_limit() {
        let p = StreamPacket::new(0, 0, vec![[0.0; 8]; 41]);
        assert_eq!(serialize_packet(&p), Err(NetError::PayloadTooLarge(41)));
        let p = StreamPacket::new(0, 0, vec![[0.0; 8]; 40]);
        assert_eq!(serialize_packet(&p).unwrap().len(), 1300);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            parse_packet(&[0u8; 19]),
            Err(NetError::TruncatedPayload { .. })
        ));
        let mut two = serialize_packet(&StreamPacket::new(1, 2, vec![[1.0; 8]; 2])).unwrap();
        two.truncate(52);
        assert_eq!(
            parse_packet(&two),
            Err(NetError::TruncatedPayload {
                expected: 84,
                actual: 52
            })
        );
        let mut bad = serialize_packet(&StreamPacket::new(0, 0, vec![])).unwrap();
        bad[0] = b'X';
        assert_eq!(parse_packet(&bad), Err(NetError::BadMagic));
        bad[0] = b'E';
        bad[4] = 2;
        assert_eq!(parse_packet(&bad), Err(NetError::BadVersion(2)));
    }

    fn arb_packet() -> impl Strategy<Value = StreamPacket> {
        (
            any::<u8>(),
            any::<u32>(),
            any::<u64>(),
            prop::collection::vec(prop::array::uniform8(-1e6f32..1e6), 0..=MAX_SAMPLES),
        )
            .prop_map(|(flags, seq, timestamp_us, samples)| StreamPacket {
                flags,
                seq,
                timestamp_us,
                samples,
            })
    }

    proptest! {
        #[test]
        fn wire_roundtrip(p in arb_packet()) {
            let bytes = serialize_packet(&p).unwrap();
            prop_assert_eq!(bytes.len(), 20 + 32 * p.samples.len());
            prop_assert_eq!(parse_packet(&bytes).unwrap(), p);
        }
    }
}
