//! Unique object designators.
//!
//! Every object in an image receives exactly one [`ObjectReference`]. Candidates are tried
//! from simplest to most explicit: a verified caption, the bare category, an ordinal along
//! a linear arrangement, a positional rank, a size rank, and finally a colored highlight
//! box. Spatial kinds carry a structured [`ReferenceSpec`] so that [`resolve`] can check
//! that the surface text names exactly one object.

mod hungarian;
mod spatial;
mod text;

pub use hungarian::{
    box_iou, hungarian_label_transfer, min_cost_assignment, AssignmentResult, LabelTransfer, MatchedPair,
};
pub use spatial::{
    category_reference, linear_arrangement, linear_order_references, positional_references, resolve,
    size_references, spatial_candidates, LinearArrangement,
};
pub use text::{ordinal, parse_reference, render};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::geometry::GravityFrame;
use crate::relations::Guards;
use crate::scene::SceneObject;

pub const PALETTE: [&str; 8] = ["red", "green", "blue", "yellow", "magenta", "cyan", "orange", "purple"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    Textual,
    Category,
    LinearOrder,
    Positional,
    SizeComparison,
    BoxFallback,
}

/// How the 15% linearity rule compares the principal components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearityMeasure {
    /// Compare standard deviations along the components (square roots of eigenvalues).
    SingularValues,
    /// Compare the covariance eigenvalues themselves.
    Eigenvalues,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    /// A caption is valid only when its single grounded box has IoU strictly above this.
    pub caption_iou: f64,
    /// Matched detection pairs below this IoU are discarded.
    pub label_iou: f64,
    /// Second principal component must be below this fraction of the first.
    pub linearity_ratio: f64,
    pub linearity_measure: LinearityMeasure,
    /// Two world axes aligned with the line within this many degrees of each other make
    /// its direction ambiguous.
    pub axis_ambiguity_deg: f64,
    /// Consecutive objects along a line must be at least this fraction of the mean spacing apart.
    pub min_spacing_fraction: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            caption_iou: 0.7,
            label_iou: 0.4,
            linearity_ratio: 0.15,
            linearity_measure: LinearityMeasure::SingularValues,
            axis_ambiguity_deg: 10.0,
            min_spacing_fraction: 0.10,
        }
    }
}

/// World axis a line of objects runs along, named by where counting starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LineSide {
    Left,
    Top,
    Front,
}

impl LineSide {
    pub fn axis(self) -> usize {
        match self {
            LineSide::Left => 0,
            LineSide::Top => 1,
            LineSide::Front => 2,
        }
    }
}

/// Quantity ranked by a positional reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PositionKey {
    /// World x (left to right).
    Horizontal,
    /// World y (top to bottom, along gravity).
    Vertical,
    CameraDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SizeKey {
    Width,
    Height,
    Volume,
}

/// Structured form of a reference. `rank` is zero-based and counts from the low end
/// (`from_high == false`) or the high end of the ranked quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReferenceSpec {
    Textual { text: String },
    Category { category: String },
    LinearOrder { category: String, side: LineSide, rank: usize },
    Positional { category: String, key: PositionKey, rank: usize, from_high: bool, pair: bool },
    SizeComparison { category: String, key: SizeKey, rank: usize, from_high: bool, pair: bool },
    BoxFallback { category: String, color: String },
}

impl ReferenceSpec {
    pub fn kind(&self) -> ReferenceKind {
        match self {
            ReferenceSpec::Textual { .. } => ReferenceKind::Textual,
            ReferenceSpec::Category { .. } => ReferenceKind::Category,
            ReferenceSpec::LinearOrder { .. } => ReferenceKind::LinearOrder,
            ReferenceSpec::Positional { .. } => ReferenceKind::Positional,
            ReferenceSpec::SizeComparison { .. } => ReferenceKind::SizeComparison,
            ReferenceSpec::BoxFallback { .. } => ReferenceKind::BoxFallback,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectReference {
    pub object_id: u32,
    pub kind: ReferenceKind,
    pub text: String,
    pub spec: ReferenceSpec,
    /// Highlight color and pixel box, for box-fallback references.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_color: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_box: Option<[f64; 4]>,
}

impl ObjectReference {
    pub fn from_spec(object_id: u32, spec: ReferenceSpec) -> Self {
        ObjectReference { object_id, kind: spec.kind(), text: render(&spec), spec, box_color: None, pixel_box: None }
    }
}

/// Grounding check of a caption: exactly one grounded box and its IoU against the
/// object's ground truth strictly above `threshold`.
pub fn verify_textual_reference(grounded_boxes: &[[f64; 4]], gt_iou: f64, threshold: f64) -> bool {
    grounded_boxes.len() == 1 && gt_iou > threshold
}

/// Name for the `index`-th palette slot; after eight colors the cycle restarts with an
/// ordinal prefix ("second red").
pub fn palette_color(index: usize) -> String {
    let color = PALETTE[index % PALETTE.len()];
    match index / PALETTE.len() {
        0 => color.to_string(),
        round => format!("{} {color}", ordinal(round + 1)),
    }
}

pub fn fallback_reference(object_id: u32, category: &str, palette_index: usize, pixel_box: Option<[f64; 4]>) -> ObjectReference {
    let color = palette_color(palette_index);
    let spec = ReferenceSpec::BoxFallback { category: category.to_string(), color: color.clone() };
    ObjectReference { box_color: Some(color), pixel_box, ..ObjectReference::from_spec(object_id, spec) }
}

/// A caption proposed for an object together with its verification outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextualCandidate {
    pub text: String,
    pub verified: bool,
}

/// Picks the first passing candidate: verified captions in the given order (simplest
/// first), then spatial candidates by kind priority, then `None` for the caller to fall
/// back to a highlight box.
pub fn select_reference(
    object_id: u32,
    textual: &[TextualCandidate],
    spatial: &[ObjectReference],
) -> Option<ObjectReference> {
    if let Some(c) = textual.iter().find(|c| c.verified) {
        return Some(ObjectReference::from_spec(object_id, ReferenceSpec::Textual { text: c.text.clone() }));
    }
    spatial.iter().filter(|r| r.object_id == object_id).min_by_key(|r| r.kind).cloned()
}

/// One reference per object of the scene.
///
/// Captions shared by two objects are treated as unverified for both. Objects left
/// without a candidate receive palette colors in scene order.
pub fn assign_references(
    objects: &[SceneObject],
    frame: &GravityFrame,
    textual: &BTreeMap<u32, Vec<TextualCandidate>>,
    guards: &Guards,
    config: &ReferenceConfig,
) -> BTreeMap<u32, ObjectReference> {
    let spatial = spatial_candidates(objects, frame, guards, config);
    let mut seen = BTreeMap::<String, usize>::new();
    for cands in textual.values() {
        let texts: BTreeSet<String> = cands.iter().filter(|c| c.verified).map(|c| normalize(&c.text)).collect();
        for t in texts {
            *seen.entry(t).or_default() += 1;
        }
    }
    let mut out = BTreeMap::new();
    let mut palette = 0;
    for obj in objects {
        let cands: Vec<TextualCandidate> = textual
            .get(&obj.id)
            .map(|cs| {
                cs.iter()
                    .map(|c| TextualCandidate {
                        text: c.text.clone(),
                        verified: c.verified && seen.get(&normalize(&c.text)) == Some(&1),
                    })
                    .collect()
            })
            .unwrap_or_default();
        let chosen = select_reference(obj.id, &cands, &spatial).unwrap_or_else(|| {
            palette += 1;
            fallback_reference(obj.id, &obj.category, palette - 1, obj.bbox2d)
        });
        out.insert(obj.id, chosen);
    }
    out
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Box3D;

    fn obj(id: u32, cat: &str, c: [f64; 3], h: [f64; 3]) -> SceneObject {
        SceneObject {
            id,
            category: cat.into(),
            bbox: Box3D { center: c, half_extents: h, yaw_deg: 0.0 },
            facing_yaw_deg: None,
            bbox2d: Some([0.0, 0.0, 10.0, 10.0]),
        }
    }

    #[test]
    fn caption_verification() {
        let one = [[0.0, 0.0, 1.0, 1.0]];
        assert!(!verify_textual_reference(&[one[0], one[0]], 0.9, 0.7));
        assert!(verify_textual_reference(&one, 0.85, 0.7));
        assert!(!verify_textual_reference(&one, 0.70, 0.7));
        assert!(!verify_textual_reference(&[], 0.9, 0.7));
    }

    #[test]
    fn palette_cycles_with_ordinal() {
        assert_eq!(palette_color(0), "red");
        assert_eq!(palette_color(7), "purple");
        assert_eq!(palette_color(8), "second red");
        assert_eq!(palette_color(9), "second green");
        assert_eq!(palette_color(16), "third red");
        let r = fallback_reference(3, "chair", 0, None);
        assert_eq!(r.text, "the chair (highlighted by red box)");
        assert_eq!(r.kind, ReferenceKind::BoxFallback);
        let colors: BTreeSet<String> = (0..8).map(palette_color).collect();
        assert_eq!(colors.len(), 8);
    }

    #[test]
    fn verified_caption_wins() {
        let t = [
            TextualCandidate { text: "the red mug".into(), verified: false },
            TextualCandidate { text: "the mug by the sink".into(), verified: true },
        ];
        let spatial = [ObjectReference::from_spec(1, ReferenceSpec::Category { category: "mug".into() })];
        let r = select_reference(1, &t, &spatial).unwrap();
        assert_eq!(r.kind, ReferenceKind::Textual);
        assert_eq!(r.text, "the mug by the sink");
        let r = select_reference(1, &t[..1], &spatial).unwrap();
        assert_eq!(r.kind, ReferenceKind::Category);
        assert!(select_reference(1, &t[..1], &[]).is_none());
    }

    #[test]
    fn single_instance_gets_category() {
        let objects = vec![obj(0, "sofa", [0.0, 0.0, 3.0], [1.0, 0.4, 0.5]), obj(1, "lamp", [1.0, 0.0, 3.0], [0.2; 3])];
        let refs = assign_references(&objects, &GravityFrame::identity(), &BTreeMap::new(), &Guards::default(), &ReferenceConfig::default());
        assert_eq!(refs[&0].text, "the sofa");
        assert_eq!(refs[&1].text, "the lamp");
    }

    #[test]
    fn indistinguishable_twins_fall_back_to_distinct_colors() {
        let objects = vec![obj(0, "chair", [0.0, 0.0, 3.0], [0.3; 3]), obj(1, "chair", [0.05, 0.0, 3.0], [0.3; 3])];
        let refs = assign_references(&objects, &GravityFrame::identity(), &BTreeMap::new(), &Guards::default(), &ReferenceConfig::default());
        assert_eq!(refs[&0].text, "the chair (highlighted by red box)");
        assert_eq!(refs[&1].text, "the chair (highlighted by green box)");
        assert_eq!(refs[&1].pixel_box, Some([0.0, 0.0, 10.0, 10.0]));
    }

    #[test]
    fn duplicate_caption_is_not_unique() {
        let objects = vec![obj(0, "chair", [0.0, 0.0, 3.0], [0.3; 3]), obj(1, "chair", [0.05, 0.0, 3.0], [0.3; 3])];
        let mut textual = BTreeMap::new();
        let c = vec![TextualCandidate { text: "the wooden chair".into(), verified: true }];
        textual.insert(0, c.clone());
        textual.insert(1, c);
        let refs = assign_references(&objects, &GravityFrame::identity(), &textual, &Guards::default(), &ReferenceConfig::default());
        assert_eq!(refs[&0].kind, ReferenceKind::BoxFallback);
    }
}
