use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::formats::{Mask, PointMap};

/// Points of one object, camera frame, meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectPointCloud {
    pub object_id: u32,
    pub points: Vec<[f64; 3]>,
    /// Number of mask pixels the cloud was extracted from.
    pub source_pixels: usize,
}

/// Collects the valid point-map samples under `mask`.
pub fn extract_object_points(
    object_id: u32,
    pm: &PointMap,
    mask: &Mask,
) -> Result<ObjectPointCloud, GeometryError> {
    if mask.width != pm.width() || mask.height != pm.height() {
        return Err(GeometryError::SizeMismatch(format!(
            "mask {}x{} vs point map {}x{}",
            mask.width,
            mask.height,
            pm.width(),
            pm.height()
        )));
    }
    let points: Vec<[f64; 3]> = pm
        .points()
        .iter()
        .zip(pm.validity())
        .zip(&mask.bits)
        .filter(|((_, &valid), &m)| valid && m)
        .map(|((p, _), _)| p.map(f64::from))
        .collect();
    if points.is_empty() {
        return Err(GeometryError::EmptyObject);
    }
    Ok(ObjectPointCloud {
        object_id,
        points,
        source_pixels: mask.count(),
    })
}
