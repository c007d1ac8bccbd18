//! Sensor frame message, little-endian throughout:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "LPC1"
//!      4     4  sensor_id        u32
//!      8     8  frame_index      u64
//!     16     8  timestamp_micros u64
//!     24     4  point_count      u32
//!     28  12*n  points           n x (x, y, z) f32, metres
//! ```
//!
//! The same layout minus the magic (the "body") is reused frame by frame in
//! sequence files.

use thiserror::Error;

use crate::geometry::{Point3, PointCloudFrame};

pub const MESSAGE_MAGIC: [u8; 4] = *b"LPC1";
pub const BODY_HEADER_LEN: usize = 24;
pub const MESSAGE_HEADER_LEN: usize = MESSAGE_MAGIC.len() + BODY_HEADER_LEN;
pub const POINT_LEN: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("frame has {0} points, more than a u32 count can describe")]
    Oversize(usize),
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("truncated message: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("declared {declared} points but payload holds {actual_bytes} bytes")]
    LengthMismatch { declared: u32, actual_bytes: usize },
    #[error("non-finite coordinate in frame {frame_index}")]
    NonFinite { frame_index: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BodyHeader {
    pub sensor_id: u32,
    pub frame_index: u64,
    pub timestamp_micros: u64,
    pub point_count: u32,
}

impl BodyHeader {
    pub fn payload_len(&self) -> usize {
        self.point_count as usize * POINT_LEN
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() < BODY_HEADER_LEN {
            return Err(CodecError::Truncated { needed: BODY_HEADER_LEN, available: bytes.len() });
        }
        Ok(Self {
            sensor_id: u32::from_le_bytes(bytes[0..4].try_into().unwrap()),
            frame_index: u64::from_le_bytes(bytes[4..12].try_into().unwrap()),
            timestamp_micros: u64::from_le_bytes(bytes[12..20].try_into().unwrap()),
            point_count: u32::from_le_bytes(bytes[20..24].try_into().unwrap()),
        })
    }
}

pub fn check_magic(bytes: &[u8]) -> Result<(), CodecError> {
    if bytes.len() < MESSAGE_MAGIC.len() {
        return Err(CodecError::Truncated { needed: MESSAGE_MAGIC.len(), available: bytes.len() });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MESSAGE_MAGIC {
        return Err(CodecError::BadMagic(magic));
    }
    Ok(())
}

/// Appends the magic-less body of `frame` to `out`.
pub fn write_body(frame: &PointCloudFrame, sensor_id: u32, out: &mut Vec<u8>) -> Result<(), CodecError> {
    let count = u32::try_from(frame.points.len()).map_err(|_| CodecError::Oversize(frame.points.len()))?;
    out.reserve(BODY_HEADER_LEN + frame.points.len() * POINT_LEN);
    out.extend_from_slice(&sensor_id.to_le_bytes());
    out.extend_from_slice(&frame.frame_index.to_le_bytes());
    out.extend_from_slice(&frame.timestamp_micros.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for p in &frame.points {
        out.extend_from_slice(&(p.x as f32).to_le_bytes());
        out.extend_from_slice(&(p.y as f32).to_le_bytes());
        out.extend_from_slice(&(p.z as f32).to_le_bytes());
    }
    Ok(())
}

/// Decodes exactly `header.point_count` points from `payload`.
pub fn read_points(header: &BodyHeader, payload: &[u8]) -> Result<PointCloudFrame, CodecError> {
    debug_assert_eq!(payload.len(), header.payload_len());
    let f = |b: &[u8]| f32::from_le_bytes(b.try_into().unwrap()) as f64;
    let points: Vec<Point3> = payload
        .chunks_exact(POINT_LEN)
        .map(|c| Point3::new(f(&c[0..4]), f(&c[4..8]), f(&c[8..12])))
        .collect();
    if !points.iter().all(Point3::is_finite) {
        return Err(CodecError::NonFinite { frame_index: header.frame_index });
    }
    Ok(PointCloudFrame { frame_index: header.frame_index, timestamp_micros: header.timestamp_micros, points })
}

/// Decodes one body from the front of `bytes`; returns the frame, sensor id
/// and bytes consumed.
pub fn read_body(bytes: &[u8]) -> Result<(PointCloudFrame, u32, usize), CodecError> {
    let header = BodyHeader::parse(bytes)?;
    let end = BODY_HEADER_LEN + header.payload_len();
    if bytes.len() < end {
        return Err(CodecError::Truncated { needed: end, available: bytes.len() });
    }
    let frame = read_points(&header, &bytes[BODY_HEADER_LEN..end])?;
    Ok((frame, header.sensor_id, end))
}

pub fn encode_message(frame: &PointCloudFrame, sensor_id: u32) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::with_capacity(MESSAGE_HEADER_LEN + frame.points.len() * POINT_LEN);
    out.extend_from_slice(&MESSAGE_MAGIC);
    write_body(frame, sensor_id, &mut out)?;
    Ok(out)
}

/// Decodes one complete message. Trailing bytes beyond the declared payload
/// are a [`CodecError::LengthMismatch`].
pub fn decode_message(bytes: &[u8]) -> Result<(PointCloudFrame, u32), CodecError> {
    check_magic(bytes)?;
    let body = &bytes[MESSAGE_MAGIC.len()..];
    let header = BodyHeader::parse(body)?;
    let payload = &body[BODY_HEADER_LEN..];
    if payload.len() < header.payload_len() {
        return Err(CodecError::Truncated {
            needed: MESSAGE_HEADER_LEN + header.payload_len(),
            available: bytes.len(),
        });
    }
    if payload.len() > header.payload_len() {
        return Err(CodecError::LengthMismatch { declared: header.point_count, actual_bytes: payload.len() });
    }
    Ok((read_points(&header, payload)?, header.sensor_id))
}
