//! Request and response bodies of each service role.

use serde::{Deserialize, Serialize};
use spatialvqa::formats::PointMap;
use spatialvqa::geometry::CameraIntrinsics;
use spatialvqa::qa::ProblemCandidate;

/// `depth-estimator`: metric point map for an image without one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthRequest {
    pub image_id: String,
    pub image: Option<String>,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthResponse {
    pub width: u32,
    pub height: u32,
    /// Row-major `x, y, z` triples, camera frame, meters.
    pub points: Vec<f32>,
    /// All points are valid when absent.
    #[serde(default)]
    pub valid: Option<Vec<bool>>,
    #[serde(default)]
    pub gravity: Option<[f64; 3]>,
    #[serde(default)]
    pub intrinsics: Option<CameraIntrinsics>,
}

impl DepthResponse {
    pub fn to_pointmap(&self) -> Result<PointMap, String> {
        let n = self.width as usize * self.height as usize;
        if self.points.len() != 3 * n {
            return Err(format!("{}x{} map with {} coordinates", self.width, self.height, self.points.len()));
        }
        let points = self.points.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let valid = self.valid.clone().unwrap_or_else(|| vec![true; n]);
        PointMap::new(self.width, self.height, points, valid).map(|l| l.map).map_err(|e| e.to_string())
    }
}

/// `captioner`: candidate descriptions of one object, simplest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRequest {
    pub image_id: String,
    pub image: Option<String>,
    pub object_id: u32,
    pub category: String,
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionResponse {
    pub captions: Vec<String>,
}

/// `grounder`: boxes found for a caption, and the IoU of the mask segmented from a
/// single box against the object's mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundRequest {
    pub image_id: String,
    pub image: Option<String>,
    pub object_id: u32,
    pub caption: String,
    pub mask: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundResponse {
    pub boxes: Vec<[f64; 4]>,
    #[serde(default)]
    pub mask_iou: Option<f64>,
}

/// `llm-generator` replies to a problem prompt with candidate problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemResponse {
    pub candidates: Vec<ProblemCandidate>,
}

/// `judge`: does a free-text answer match the reference?
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub item_id: String,
    pub question: String,
    pub reference_answer: String,
    pub response: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Match,
    Mismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeResponse {
    pub verdict: Verdict,
}
