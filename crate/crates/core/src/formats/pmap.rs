use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_payload, read_header, FormatError, HEADER_LEN};

/// Largest admissible absolute coordinate, in meters.
pub const COORD_LIMIT: f32 = 250.0;

const MAGIC: &[u8; 4] = b"PMAP";
const RECORD_LEN: usize = 16;

/// Per-pixel metric 3D coordinates in the camera frame plus a validity mask.
///
/// Valid points are always finite and inside `[-COORD_LIMIT, COORD_LIMIT]` on every axis;
/// constructors demote offending pixels to invalid instead of rejecting the map.
#[derive(Debug, Clone)]
pub struct PointMap {
    width: u32,
    height: u32,
    points: Vec<[f32; 3]>,
    valid: Vec<bool>,
}

/// A pixel whose stored coordinates were out of range and got marked invalid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeWarning {
    pub u: u32,
    pub v: u32,
    pub point: [f32; 3],
}

#[derive(Debug, Clone)]
pub struct LoadedPointMap {
    pub map: PointMap,
    pub warnings: Vec<RangeWarning>,
}

fn in_range(p: &[f32; 3]) -> bool {
    p.iter().all(|c| c.is_finite() && c.abs() <= COORD_LIMIT)
}

impl PointMap {
    /// Builds a point map, demoting out-of-range valid points to invalid.
    pub fn new(
        width: u32,
        height: u32,
        points: Vec<[f32; 3]>,
        valid: Vec<bool>,
    ) -> Result<LoadedPointMap, FormatError> {
        let n = width as usize * height as usize;
        if width == 0 || height == 0 || points.len() != n || valid.len() != n {
            return Err(FormatError::DimensionMismatch {
                offset: 0,
                detail: format!(
                    "{width}x{height} grid with {} points and {} validity bits",
                    points.len(),
                    valid.len()
                ),
            });
        }
        let mut map = PointMap {
            width,
            height,
            points,
            valid,
        };
        let mut warnings = Vec::new();
        for i in 0..n {
            if map.valid[i] && !in_range(&map.points[i]) {
                map.valid[i] = false;
                warnings.push(RangeWarning {
                    u: (i % width as usize) as u32,
                    v: (i / width as usize) as u32,
                    point: map.points[i],
                });
            }
        }
        Ok(LoadedPointMap { map, warnings })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn index(&self, u: u32, v: u32) -> Option<usize> {
        (u < self.width && v < self.height).then(|| v as usize * self.width as usize + u as usize)
    }

    /// Stored coordinates regardless of validity.
    pub fn raw(&self, u: u32, v: u32) -> Option<[f32; 3]> {
        self.index(u, v).map(|i| self.points[i])
    }

    /// The point at `(u, v)` when the pixel is in bounds and valid.
    pub fn get(&self, u: u32, v: u32) -> Option<[f32; 3]> {
        self.index(u, v)
            .filter(|&i| self.valid[i])
            .map(|i| self.points[i])
    }

    pub fn is_valid(&self, u: u32, v: u32) -> bool {
        self.index(u, v).is_some_and(|i| self.valid[i])
    }

    pub fn points(&self) -> &[[f32; 3]] {
        &self.points
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn invalid_fraction(&self) -> f64 {
        1.0 - self.valid_count() as f64 / self.len() as f64
    }
}

pub fn write_pointmap_bytes(map: &PointMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + map.len() * RECORD_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&map.width.to_le_bytes());
    out.extend_from_slice(&map.height.to_le_bytes());
    for (p, &valid) in map.points.iter().zip(&map.valid) {
        for c in p {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out.extend_from_slice(&(if valid { 1.0f32 } else { 0.0f32 }).to_le_bytes());
    }
    out
}

pub fn read_pointmap_bytes(bytes: &[u8]) -> Result<LoadedPointMap, FormatError> {
    let (width, height) = read_header(bytes, MAGIC)?;
    check_payload(bytes, width, height, RECORD_LEN)?;
    let n = width as usize * height as usize;
    let mut points = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for (i, rec) in bytes[HEADER_LEN..].chunks_exact(RECORD_LEN).enumerate() {
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap());
        let flag = f(3);
        let is_valid = if flag == 1.0 {
            true
        } else if flag == 0.0 && flag.is_sign_positive() {
            false
        } else {
            return Err(FormatError::MalformedRecord {
                offset: HEADER_LEN + i * RECORD_LEN + 12,
                detail: format!("validity flag {flag} is neither 0.0 nor 1.0"),
            });
        };
        points.push([f(0), f(1), f(2)]);
        valid.push(is_valid);
    }
    PointMap::new(width, height, points, valid)
}

pub fn read_pointmap(path: impl AsRef<Path>) -> Result<LoadedPointMap, FormatError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| FormatError::io(path, e))?;
    read_pointmap_bytes(&bytes)
}

pub fn write_pointmap(path: impl AsRef<Path>, map: &PointMap) -> Result<(), FormatError> {
    let path = path.as_ref();
    std::fs::write(path, write_pointmap_bytes(map)).map_err(|e| FormatError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(w: u32, h: u32) -> PointMap {
        let n = (w * h) as usize;
        let points = (0..n).map(|i| [i as f32, -(i as f32), 1.0 + i as f32]).collect();
        PointMap::new(w, h, points, vec![true; n]).unwrap().map
    }

    #[test]
    fn two_by_two_round_trip() {
        let map = grid(2, 2);
        let loaded = read_pointmap_bytes(&write_pointmap_bytes(&map)).unwrap();
        assert!(loaded.warnings.is_empty());
        assert_eq!(loaded.map.valid_count(), 4);
        assert_eq!(loaded.map.points(), map.points());
    }

    #[test]
    fn truncated_mid_grid_reports_record_offset() {
        let bytes = write_pointmap_bytes(&grid(2, 2));
        let cut = &bytes[..HEADER_LEN + 2 * RECORD_LEN + 5];
        match read_pointmap_bytes(cut) {
            Err(FormatError::Truncated { offset, expected }) => {
                assert_eq!(offset, HEADER_LEN + 2 * RECORD_LEN);
                assert_eq!(expected, bytes.len());
            }
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn far_point_is_demoted_with_warning() {
        let mut points = vec![[0.0, 0.0, 1.0]; 4];
        points[3] = [0.0, 0.0, 300.0];
        let map = PointMap::new(2, 2, points, vec![true; 4]).unwrap().map;
        // Bypass the constructor's clamp to exercise the reader path.
        let mut bytes = write_pointmap_bytes(&map);
        let flag_at = HEADER_LEN + 3 * RECORD_LEN + 12;
        bytes[flag_at..flag_at + 4].copy_from_slice(&1.0f32.to_le_bytes());
        let loaded = read_pointmap_bytes(&bytes).unwrap();
        assert_eq!(loaded.warnings.len(), 1);
        assert_eq!((loaded.warnings[0].u, loaded.warnings[0].v), (1, 1));
        assert!(!loaded.map.is_valid(1, 1));
        assert_eq!(loaded.map.valid_count(), 3);
    }

    #[test]
    fn header_errors_are_distinct() {
        assert!(matches!(
            read_pointmap_bytes(b"PMAQ\x01\0\0\0\x01\0\0\0"),
            Err(FormatError::BadMagic { offset: 0, .. })
        ));
        assert!(matches!(
            read_pointmap_bytes(b"PMAP\x01\0"),
            Err(FormatError::Truncated { .. })
        ));
        let mut bytes = write_pointmap_bytes(&grid(1, 1));
        bytes.extend_from_slice(&[0u8; 16]);
        assert!(matches!(
            read_pointmap_bytes(&bytes),
            Err(FormatError::DimensionMismatch { offset: 28, .. })
        ));
    }

    #[test]
    fn bad_validity_flag_is_rejected() {
        let mut bytes = write_pointmap_bytes(&grid(1, 1));
        bytes[24..28].copy_from_slice(&0.5f32.to_le_bytes());
        assert!(matches!(
            read_pointmap_bytes(&bytes),
            Err(FormatError::MalformedRecord { offset: 24, .. })
        ));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            w in 1u32..6,
            h in 1u32..6,
            seed in proptest::collection::vec((-250.0f32..250.0, -250.0f32..250.0, -250.0f32..250.0, any::<bool>()), 36),
        ) {
            let n = (w * h) as usize;
            let points: Vec<_> = seed[..n].iter().map(|&(x, y, z, _)| [x, y, z]).collect();
            let valid: Vec<_> = seed[..n].iter().map(|s| s.3).collect();
            let map = PointMap::new(w, h, points, valid).unwrap().map;
            let back = read_pointmap_bytes(&write_pointmap_bytes(&map)).unwrap().map;
            prop_assert_eq!(write_pointmap_bytes(&back), write_pointmap_bytes(&map));
        }
    }
}
