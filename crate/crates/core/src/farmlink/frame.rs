//! `IENC` latent frames, big-endian:
//!
//! | offset | size | field                              |
//! |--------|------|------------------------------------|
//! | 0      | 4    | magic `"IENC"`                     |
//! | 4      | 1    | version = 1                        |
//! | 5      | 2    | turbine id                         |
//! | 7      | 8    | timestamp (ms)                     |
//! | 15     | 12   | P, cos φ, U_pcc as `f32`           |
//! | 27     | 2    | latent length `n`                  |
//! | 29     | 4·n  | latent values as `f32`             |
//! | 29+4n  | 4    | CRC-32 of every preceding byte     |
//!
//! With the 64-value latent a frame is 289 bytes.

use thiserror::Error;

use crate::spectra::OperatingPoint;

pub const MAGIC: &[u8; 4] = b"IENC";
pub const VERSION: u8 = 1;
/// Bytes up to and including the latent length field.
pub const HEADER_LEN: usize = 29;

/// Total frame size for a latent of `n` values.
pub const fn frame_len(n: usize) -> usize {
    HEADER_LEN + 4 * n + 4
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("truncated frame: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("frame length {got} does not match {expected} implied by its latent length")]
    Length { expected: usize, got: usize },
    #[error("bad frame magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported frame version {0}")]
    BadVersion(u8),
    #[error("CRC mismatch: computed {computed:#010x}, stored {stored:#010x}")]
    Crc { computed: u32, stored: u32 },
    #[error("latent length {got} does not match the deployed model ({expected})")]
    LatentLen { expected: usize, got: usize },
}

/// CRC-32 (IEEE 802.3, reflected, init and final xor `0xFFFFFFFF`).
pub fn crc32(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

/// Operating point as carried on the wire.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WireOp {
    pub p_active: f32,
    pub power_factor: f32,
    pub u_pcc: f32,
}

impl From<&OperatingPoint> for WireOp {
    fn from(op: &OperatingPoint) -> Self {
        Self {
            p_active: op.p_active as f32,
            power_factor: op.power_factor as f32,
            u_pcc: op.u_pcc as f32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentFrame {
    pub turbine_id: u16,
    pub timestamp_ms: u64,
    pub op: WireOp,
    pub latent: Vec<f32>,
}

impl LatentFrame {
    pub fn encoded_len(&self) -> usize {
        frame_len(self.latent.len())
    }

    /// Bitwise equality, so NaN payloads compare too.
    pub fn bits_eq(&self, other: &Self) -> bool {
        let ops = |o: &WireOp| {
            [
                o.p_active.to_bits(),
                o.power_factor.to_bits(),
                o.u_pcc.to_bits(),
            ]
        };
        self.turbine_id == other.turbine_id
            && self.timestamp_ms == other.timestamp_ms
            && ops(&self.op) == ops(&other.op)
            && self.latent.len() == other.latent.len()
            && self
                .latent
                .iter()
                .zip(&other.latent)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

pub fn encode_frame(frame: &LatentFrame) -> Result<Vec<u8>, FrameError> {
    let n = frame.latent.len();
    if n > u16::MAX as usize {
        return Err(FrameError::LatentLen {
            expected: u16::MAX as usize,
            got: n,
        });
    }
    let mut out = Vec::with_capacity(frame_len(n));
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&frame.turbine_id.to_be_bytes());
    out.extend_from_slice(&frame.timestamp_ms.to_be_bytes());
    out.extend_from_slice(&frame.op.p_active.to_be_bytes());
    out.extend_from_slice(&frame.op.power_factor.to_be_bytes());
    out.extend_from_slice(&frame.op.u_pcc.to_be_bytes());
    out.extend_from_slice(&(n as u16).to_be_bytes());
    for v in &frame.latent {
        out.extend_from_slice(&v.to_be_bytes());
    }
    let crc = crc32(&out);
    out.extend_from_slice(&crc.to_be_bytes());
    Ok(out)
}

/// Latent length declared in a frame header, if enough bytes are present.
pub fn declared_latent_len(header: &[u8]) -> Option<usize> {
    header
        .get(27..29)
        .map(|b| u16::from_be_bytes([b[0], b[1]]) as usize)
}

fn be_f32(b: &[u8]) -> f32 {
    f32::from_be_bytes(b.try_into().expect("4 bytes"))
}

pub fn decode_frame(bytes: &[u8]) -> Result<LatentFrame, FrameError> {
    if bytes.len() < HEADER_LEN {
        return Err(FrameError::Truncated {
            expected: HEADER_LEN,
            got: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(FrameError::BadMagic(magic));
    }
    if bytes[4] != VERSION {
        return Err(FrameError::BadVersion(bytes[4]));
    }
    let n = declared_latent_len(bytes).expect("header length checked");
    let expected = frame_len(n);
    if bytes.len() < expected {
        return Err(FrameError::Truncated {
            expected,
            got: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(FrameError::Length {
            expected,
            got: bytes.len(),
        });
    }
    let body = &bytes[..expected - 4];
    let stored = u32::from_be_bytes(bytes[expected - 4..].try_into().unwrap());
    let computed = crc32(body);
    if computed != stored {
        return Err(FrameError::Crc { computed, stored });
    }

    Ok(LatentFrame {
        turbine_id: u16::from_be_bytes([bytes[5], bytes[6]]),
        timestamp_ms: u64::from_be_bytes(bytes[7..15].try_into().unwrap()),
        op: WireOp {
            p_active: be_f32(&bytes[15..19]),
            power_factor: be_f32(&bytes[19..23]),
            u_pcc: be_f32(&bytes[23..27]),
        },
        latent: body[HEADER_LEN..].chunks_exact(4).map(be_f32).collect(),
    })
}
