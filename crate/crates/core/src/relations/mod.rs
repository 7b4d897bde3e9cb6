//! Geometric quantities behind the task families of levels 0 to 3.
//!
//! Qualitative outputs are guard-banded: when a quantity sits too close to a label
//! boundary the label is suppressed rather than guessed, so every emitted answer is
//! unambiguous.

mod compare;
mod direction;
mod pixel;

pub use compare::{
    attribute_value, orientation_consistency, orientation_label, relational_comparison, separated,
    Attribute, ComparisonMode, ComparisonOutcome, Consistency, Facing,
};
pub use direction::{
    object_position, perspective_transform, relative_direction, relative_distance, spatial_count,
    Anchor, AxisLabel, DirectionResult, DistanceResult, PerspectiveResult,
};
pub use pixel::{depth_order, query_point, DepthOrder};

use serde::{Deserialize, Serialize};

/// Margins that keep qualitative answers unambiguous.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Guards {
    /// Max angular distance (degrees) from a canonical facing direction.
    pub orientation_deg: f64,
    /// Min angle (degrees) between a direction and an axis's boundary plane for that
    /// axis to be labeled; 30 means the component must be at least sin(30) of the norm.
    pub direction_deg: f64,
    /// Min relative separation between compared values (0.10 = larger is 10% above).
    pub comparison_ratio: f64,
    /// Tolerance (degrees) for similar / orthogonal / opposite orientation.
    pub consistency_deg: f64,
    /// Depth differences at or below this (meters) are ties.
    pub depth_tie_m: f64,
}

impl Default for Guards {
    fn default() -> Self {
        Guards {
            orientation_deg: 30.0,
            direction_deg: 30.0,
            comparison_ratio: 0.10,
            consistency_deg: 15.0,
            depth_tie_m: 0.15,
        }
    }
}

impl Guards {
    pub fn direction_min_component(&self) -> f64 {
        self.direction_deg.to_radians().sin()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RelationError {
    #[error("no valid geometry at pixel ({u}, {v})")]
    NoGeometry { u: u32, v: u32 },
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("objects share the same center")]
    Coincident,
    #[error("anchor facing is parallel to gravity")]
    Degenerate,
    #[error("comparison suppressed: {0}")]
    Suppressed(String),
}
