use std::path::Path;

use super::{check_payload, read_header, FormatError, HEADER_LEN};

const MAGIC: &[u8; 4] = b"MASK";

/// Binary per-pixel object mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn empty(width: u32, height: u32) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn get(&self, u: u32, v: u32) -> bool {
        u < self.width && v < self.height && self.bits[v as usize * self.width as usize + u as usize]
    }

    pub fn set(&mut self, u: u32, v: u32, on: bool) {
        let i = v as usize * self.width as usize + u as usize;
        self.bits[i] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Tight pixel box `[x0, y0, x1, y1]` (exclusive max) around the set pixels.
    pub fn bounding_box(&self) -> Option<[f64; 4]> {
        let mut bb: Option<[u32; 4]> = None;
        for v in 0..self.height {
            for u in 0..self.width {
                if self.get(u, v) {
                    let b = bb.get_or_insert([u, v, u, v]);
                    b[0] = b[0].min(u);
                    b[1] = b[1].min(v);
                    b[2] = b[2].max(u);
                    b[3] = b[3].max(v);
                }
            }
        }
        bb.map(|b| [b[0] as f64, b[1] as f64, b[2] as f64 + 1.0, b[3] as f64 + 1.0])
    }

    /// Intersection over union of two equally sized masks.
    pub fn iou(&self, other: &Mask) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        for (a, b) in self.bits.iter().zip(&other.bits) {
            inter += (*a && *b) as usize;
            union += (*a || *b) as usize;
        }
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask, FormatError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| FormatError::io(path, e))?;
    let (width, height) = read_header(&bytes, MAGIC)?;
    check_payload(&bytes, width, height, 1)?;
    let mut bits = Vec::with_capacity(bytes.len() - HEADER_LEN);
    for (i, &b) in bytes[HEADER_LEN..].iter().enumerate() {
        match b {
            0 => bits.push(false),
            1 => bits.push(true),
            _ => {
                return Err(FormatError::MalformedRecord {
                    offset: HEADER_LEN + i,
                    detail: format!("mask byte {b} is neither 0 nor 1"),
                })
            }
        }
    }
    Ok(Mask {
        width,
        height,
        bits,
    })
}

pub fn write_mask(path: impl AsRef<Path>, mask: &Mask) -> Result<(), FormatError> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(HEADER_LEN + mask.bits.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&mask.width.to_le_bytes());
    out.extend_from_slice(&mask.height.to_le_bytes());
    out.extend(mask.bits.iter().map(|&b| b as u8));
    std::fs::write(path, out).map_err(|e| FormatError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Mask::empty(3, 2);
        m.set(1, 0, true);
        m.set(2, 1, true);
        let path = dir.path().join("m.mask");
        write_mask(&path, &m).unwrap();
        assert_eq!(read_mask(&path).unwrap(), m);
        assert_eq!(m.bounding_box(), Some([1.0, 0.0, 3.0, 2.0]));
    }

    #[test]
    fn iou_of_half_overlap() {
        let mut a = Mask::empty(2, 1);
        let mut b = Mask::empty(2, 1);
        a.set(0, 0, true);
        b.set(0, 0, true);
        b.set(1, 0, true);
        assert_eq!(a.iou(&b), 0.5);
    }
}
