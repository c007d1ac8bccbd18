//! Frame-sequence container:
//!
//! ```text
//! "LPCSEQ01"         8 bytes
//! frame_count        u32 LE
//! nominal rate       u64 LE, micro-hertz
//! frame_count x message body (sensor frame message without its magic)
//! ```
//!
//! Merged data carries sensor id 0.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::codec::{read_body, write_body, CodecError};
use crate::geometry::{FrameSequence, GeometryError};

pub const SEQUENCE_MAGIC: [u8; 8] = *b"LPCSEQ01";
pub const SEQUENCE_HEADER_LEN: usize = 8 + 4 + 8;
pub const MERGED_SENSOR_ID: u32 = 0;

#[derive(Debug, Error)]
pub enum SeqFileError {
    #[error("not a frame-sequence file (magic {0:02x?})")]
    BadMagic([u8; 8]),
    #[error("file header truncated ({0} bytes)")]
    TruncatedHeader(usize),
    #[error("frame {index}: {source}")]
    Frame { index: usize, source: CodecError },
    #[error("{0} trailing bytes after the declared frames")]
    TrailingBytes(usize),
    #[error("too many frames for a u32 count: {0}")]
    TooManyFrames(usize),
    #[error("invalid sequence: {0}")]
    Sequence(#[from] GeometryError),
    #[error("encoding frame {index}: {source}")]
    Encode { index: usize, source: CodecError },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn rate_to_micro_hz(rate_hz: f64) -> u64 {
    (rate_hz * 1e6).round() as u64
}

pub fn to_bytes(seq: &FrameSequence) -> Result<Vec<u8>, SeqFileError> {
    let count = u32::try_from(seq.len()).map_err(|_| SeqFileError::TooManyFrames(seq.len()))?;
    let mut out = Vec::with_capacity(SEQUENCE_HEADER_LEN);
    out.extend_from_slice(&SEQUENCE_MAGIC);
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&rate_to_micro_hz(seq.nominal_rate_hz()).to_le_bytes());
    for (index, frame) in seq.frames().iter().enumerate() {
        write_body(frame, MERGED_SENSOR_ID, &mut out).map_err(|source| SeqFileError::Encode { index, source })?;
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<FrameSequence, SeqFileError> {
    if bytes.len() < SEQUENCE_HEADER_LEN {
        if bytes.len() >= 8 && bytes[..8] != SEQUENCE_MAGIC {
            return Err(SeqFileError::BadMagic(bytes[..8].try_into().unwrap()));
        }
        return Err(SeqFileError::TruncatedHeader(bytes.len()));
    }
    let magic: [u8; 8] = bytes[..8].try_into().unwrap();
    if magic != SEQUENCE_MAGIC {
        return Err(SeqFileError::BadMagic(magic));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let micro_hz = u64::from_le_bytes(bytes[12..20].try_into().unwrap());

    let mut offset = SEQUENCE_HEADER_LEN;
    let mut frames = Vec::with_capacity(count.min(1 << 16));
    for index in 0..count {
        let (frame, _sensor, used) =
            read_body(&bytes[offset..]).map_err(|source| SeqFileError::Frame { index, source })?;
        offset += used;
        frames.push(frame);
    }
    if offset != bytes.len() {
        return Err(SeqFileError::TrailingBytes(bytes.len() - offset));
    }
    Ok(FrameSequence::new(frames, micro_hz as f64 / 1e6)?)
}

pub fn write(path: impl AsRef<Path>, seq: &FrameSequence) -> Result<(), SeqFileError> {
    fs::write(path, to_bytes(seq)?)?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<FrameSequence, SeqFileError> {
    from_bytes(&fs::read(path)?)
}
