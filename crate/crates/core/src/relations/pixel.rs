use serde::{Deserialize, Serialize};

use super::RelationError;
use crate::formats::PointMap;

/// Camera-frame point stored at pixel `(u, v)`.
pub fn query_point(pm: &PointMap, u: u32, v: u32) -> Result<[f64; 3], RelationError> {
    pm.get(u, v)
        .map(|p| p.map(f64::from))
        .ok_or(RelationError::NoGeometry { u, v })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepthOrder {
    First,
    Second,
    Tie,
}

/// Which of two pixels is closer along the optical axis; `|dz| <= margin` is a tie.
pub fn depth_order(
    pm: &PointMap,
    first: (u32, u32),
    second: (u32, u32),
    margin: f64,
) -> Result<DepthOrder, RelationError> {
    let a = query_point(pm, first.0, first.1)?[2];
    let b = query_point(pm, second.0, second.1)?[2];
    Ok(if (a - b).abs() <= margin {
        DepthOrder::Tie
    } else if a < b {
        DepthOrder::First
    } else {
        DepthOrder::Second
    })
}
