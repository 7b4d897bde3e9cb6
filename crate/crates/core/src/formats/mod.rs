//! On-disk formats and image-level filtering.
//!
//! * PMAP point maps: `b"PMAP"`, `u32` width, `u32` height (little endian), then
//!   `width * height` records of four little-endian `f32` values `(x, y, z, valid)`,
//!   row-major, `valid` being exactly `0.0` or `1.0`.
//! * MASK object masks: `b"MASK"`, `u32` width, `u32` height, then one byte per
//!   pixel (`0` or `1`), row-major.
//! * Manifests: UTF-8 JSON lines, one [`ImageManifest`] per line.

mod filter;
mod manifest;
mod mask;
mod pmap;

pub use filter::{
    heuristic_image_filter, tag_vote_filter, FilterDecision, FilterReason, FilterThresholds,
    PixelStats,
};
pub use manifest::{
    read_manifest, validate_manifest, write_manifest, CaptionCandidate, Detection, Grounding,
    ImageManifest, ManifestReport, ObjectAnnotation, Violation,
};
pub use mask::{read_mask, write_mask, Mask};
pub use pmap::{read_pointmap, read_pointmap_bytes, write_pointmap, write_pointmap_bytes, LoadedPointMap, PointMap, RangeWarning, COORD_LIMIT};

use std::path::PathBuf;

/// Errors raised while decoding or validating on-disk data.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic at byte offset {offset}: expected {expected:?}, found {found:?}")]
    BadMagic {
        offset: usize,
        expected: [u8; 4],
        found: Vec<u8>,
    },
    #[error("truncated payload at byte offset {offset}: expected {expected} bytes in total")]
    Truncated { offset: usize, expected: usize },
    #[error("dimension mismatch at byte offset {offset}: {detail}")]
    DimensionMismatch { offset: usize, detail: String },
    #[error("malformed record at byte offset {offset}: {detail}")]
    MalformedRecord { offset: usize, detail: String },
    #[error("manifest line {line}: {detail}")]
    Manifest { line: usize, detail: String },
}

impl FormatError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) const HEADER_LEN: usize = 12;

/// Reads `magic`, width and height from a binary header.
pub(crate) fn read_header(bytes: &[u8], magic: &[u8; 4]) -> Result<(u32, u32), FormatError> {
    if bytes.len() < 4 || &bytes[..4] != magic {
        return Err(FormatError::BadMagic {
            offset: 0,
            expected: *magic,
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::Truncated {
            offset: bytes.len(),
            expected: HEADER_LEN,
        });
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if width == 0 || height == 0 {
        return Err(FormatError::DimensionMismatch {
            offset: 4,
            detail: format!("empty grid {width}x{height}"),
        });
    }
    Ok((width, height))
}

/// Checks the payload length against the header and returns the expected total length.
pub(crate) fn check_payload(
    bytes: &[u8],
    width: u32,
    height: u32,
    record_len: usize,
) -> Result<usize, FormatError> {
    let expected = (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(record_len))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| FormatError::DimensionMismatch {
            offset: 4,
            detail: format!("{width}x{height} grid overflows the address space"),
        })?;
    if bytes.len() < expected {
        // Offset of the first incomplete record.
        let complete = (bytes.len() - HEADER_LEN) / record_len;
        return Err(FormatError::Truncated {
            offset: HEADER_LEN + complete * record_len,
            expected,
        });
    }
    if bytes.len() > expected {
        return Err(FormatError::DimensionMismatch {
            offset: expected,
            detail: format!(
                "{} trailing bytes after a {width}x{height} grid",
                bytes.len() - expected
            ),
        });
    }
    Ok(expected)
}
