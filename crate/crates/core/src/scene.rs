//! Scene-level object model shared by relations, references and QA synthesis.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::formats::{ImageManifest, Mask, PointMap};
use crate::geometry::{
    dbscan_largest_cluster, extract_object_points, fit_box3d, gravity_frame, Box3D, BoxFitOptions, DbscanParams,
    GeometryError, GravityFrame, Vec3,
};
use crate::references::{hungarian_label_transfer, verify_textual_reference, TextualCandidate};

/// One object with its 3D box. `center` and `size` are derived from the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: u32,
    pub category: String,
    pub bbox: Box3D,
    /// Facing yaw about gravity in degrees, when an orientation is known.
    pub facing_yaw_deg: Option<f64>,
    /// Pixel box `[x0, y0, x1, y1]` used for highlighted fallback references.
    pub bbox2d: Option<[f64; 4]>,
}

impl SceneObject {
    pub fn center(&self) -> Vec3 {
        self.bbox.center_vec()
    }

    /// (width, height, depth) in meters.
    pub fn size(&self) -> [f64; 3] {
        self.bbox.size()
    }

    pub fn camera_distance(&self) -> f64 {
        self.center().norm()
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub image_id: String,
    pub frame: GravityFrame,
    pub objects: Vec<SceneObject>,
}

impl Scene {
    pub fn object(&self, id: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn of_category<'a>(&'a self, category: &'a str) -> impl Iterator<Item = &'a SceneObject> + 'a {
        self.objects.iter().filter(move |o| o.category == category)
    }
}

/// Outcome of turning one manifest entry into a scene.
#[derive(Debug, Clone)]
pub struct BuiltScene {
    pub scene: Scene,
    /// Objects that could not be given a 3D box, with the reason.
    pub dropped: Vec<(u32, String)>,
    /// Objects whose box was fitted from the point map rather than annotated.
    pub fitted: Vec<u32>,
}

/// Builds the scene of one image.
///
/// Annotated boxes are used as given. Other objects are fitted: the valid points under
/// the object's mask, reduced to their largest DBSCAN cluster, then a gravity-aligned box
/// oriented by the annotated yaw when there is one. Without a gravity direction the
/// camera is assumed level.
pub fn build_scene(
    entry: &ImageManifest,
    pm: Option<&PointMap>,
    masks: &BTreeMap<u32, Mask>,
    fit: &BoxFitOptions,
) -> Result<BuiltScene, GeometryError> {
    let frame = match entry.gravity {
        Some(g) => gravity_frame(g)?,
        None => GravityFrame::identity(),
    };
    let mut objects = Vec::new();
    let mut dropped = Vec::new();
    let mut fitted = Vec::new();
    for ann in &entry.objects {
        let bbox = match (&ann.box3d, pm, masks.get(&ann.id)) {
            (Some(b), _, _) => b.validate().map(|_| *b),
            (None, Some(pm), Some(mask)) => extract_object_points(ann.id, pm, mask)
                .and_then(|pc| dbscan_largest_cluster(&pc, DbscanParams::for_cloud(&pc.points)))
                .and_then(|pc| fit_box3d(&pc, &frame, ann.yaw_deg, fit))
                .map(|f| {
                    fitted.push(ann.id);
                    f.bbox
                }),
            (None, None, _) => Err(GeometryError::EmptyObject),
            (None, Some(_), None) => Err(GeometryError::EmptyObject),
        };
        match bbox {
            Ok(bbox) => objects.push(SceneObject {
                id: ann.id,
                category: ann.category.clone(),
                bbox,
                facing_yaw_deg: ann.yaw_deg,
                bbox2d: Some(ann.bbox),
            }),
            Err(e) => {
                let reason = match (&ann.box3d, masks.contains_key(&ann.id)) {
                    (None, false) => "no 3D box and no mask".to_string(),
                    _ => e.to_string(),
                };
                dropped.push((ann.id, reason));
            }
        }
    }
    Ok(BuiltScene { scene: Scene { image_id: entry.image_id.clone(), frame, objects }, dropped, fitted })
}

/// Caption candidates per object with their grounding verdicts. Captions that were never
/// grounded count as unverified.
pub fn textual_candidates(entry: &ImageManifest, caption_iou: f64) -> BTreeMap<u32, Vec<TextualCandidate>> {
    entry
        .objects
        .iter()
        .filter(|o| !o.captions.is_empty())
        .map(|o| {
            let cands = o
                .captions
                .iter()
                .map(|c| TextualCandidate {
                    text: c.text.clone(),
                    verified: c.grounding.as_ref().is_some_and(|g| {
                        verify_textual_reference(&g.boxes, g.mask_iou.unwrap_or(0.0), caption_iou)
                    }),
                })
                .collect();
            (o.id, cands)
        })
        .collect()
}

/// Labels objects from category-aware detections. With no detections the entry is
/// returned unchanged; otherwise each object takes the category of its matched detection
/// and objects left unmatched are removed, with a reason per removed id.
pub fn apply_detections(entry: &ImageManifest, min_iou: f64) -> (ImageManifest, Vec<(u32, String)>) {
    if entry.detections.is_empty() {
        return (entry.clone(), Vec::new());
    }
    let boxes: Vec<[f64; 4]> = entry.objects.iter().map(|o| o.bbox).collect();
    let transfer = hungarian_label_transfer(&entry.detections, &boxes, min_iou);
    let mut out = entry.clone();
    let mut dropped = Vec::new();
    out.objects = entry
        .objects
        .iter()
        .zip(transfer.labels)
        .filter_map(|(o, label)| match label {
            Some(category) => {
                let mut o = o.clone();
                o.category = category;
                Some(o)
            }
            None => {
                dropped.push((o.id, "no matching detection".to_string()));
                None
            }
        })
        .collect();
    (out, dropped)
}
