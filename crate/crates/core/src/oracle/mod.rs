//! Synthetic ground-truth scenes.
//!
//! A scene is a camera above a floor looking slightly down at gravity-aligned boxes.
//! Scenes are sampled in a world frame (camera at the origin, +y along gravity, +z the
//! horizontal projection of the optical axis), rendered to point maps and masks by ray
//! casting, and written in the same manifest format the pipeline ingests. Answers are
//! recomputed from the sampled layout by [`oracle_answer`].

mod answer;
mod render;

pub use answer::{check_item, oracle_answer, oracle_problem_candidates, ItemCheck, PRINT_TOLERANCE};
pub use render::{render_scene, OracleRender};

use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::formats::{
    write_mask, write_pointmap, CaptionCandidate, FormatError, Grounding, ImageManifest, ObjectAnnotation,
};
use crate::geometry::{Box3D, CameraIntrinsics, Vec3};
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CategorySpec {
    pub name: &'static str,
    pub width: (f64, f64),
    pub height: (f64, f64),
    pub depth: (f64, f64),
    /// Has a front. Objects without one get a square footprint.
    pub facing: bool,
    /// Rests on something above the floor.
    pub elevated: bool,
}

const fn cat(
    name: &'static str,
    width: (f64, f64),
    height: (f64, f64),
    depth: (f64, f64),
    facing: bool,
    elevated: bool,
) -> CategorySpec {
    CategorySpec { name, width, height, depth, facing, elevated }
}

pub const CATEGORY_POOL: [CategorySpec; 20] = [
    cat("chair", (0.4, 0.6), (0.75, 1.0), (0.4, 0.6), true, false),
    cat("sofa", (1.5, 2.3), (0.7, 0.95), (0.8, 1.0), true, false),
    cat("armchair", (0.7, 1.0), (0.7, 1.0), (0.7, 0.95), true, false),
    cat("desk", (1.0, 1.6), (0.7, 0.8), (0.55, 0.8), true, false),
    cat("bookcase", (0.6, 1.2), (0.9, 1.2), (0.25, 0.4), true, false),
    cat("cabinet", (0.5, 1.0), (0.6, 1.1), (0.4, 0.6), true, false),
    cat("television", (0.8, 1.4), (0.5, 0.8), (0.08, 0.15), true, true),
    cat("monitor", (0.45, 0.7), (0.3, 0.45), (0.05, 0.2), true, true),
    cat("bench", (1.0, 1.8), (0.4, 0.5), (0.35, 0.5), true, false),
    cat("dresser", (0.8, 1.5), (0.7, 1.1), (0.4, 0.55), true, false),
    cat("nightstand", (0.4, 0.6), (0.45, 0.65), (0.35, 0.5), true, false),
    cat("piano", (1.3, 1.6), (1.0, 1.2), (0.5, 0.65), true, false),
    cat("stove", (0.5, 0.8), (0.85, 0.95), (0.55, 0.7), true, false),
    cat("microwave", (0.45, 0.6), (0.25, 0.35), (0.3, 0.45), true, true),
    cat("lamp", (0.25, 0.5), (0.4, 1.2), (0.25, 0.5), false, false),
    cat("potted plant", (0.3, 0.6), (0.4, 1.0), (0.3, 0.6), false, false),
    cat("trash can", (0.25, 0.4), (0.35, 0.7), (0.25, 0.4), false, false),
    cat("vase", (0.12, 0.25), (0.2, 0.45), (0.12, 0.25), false, true),
    cat("stool", (0.3, 0.45), (0.45, 0.75), (0.3, 0.45), false, false),
    cat("ottoman", (0.5, 0.8), (0.35, 0.45), (0.5, 0.8), false, false),
];

const CAPTION_WORDS: [&str; 6] = ["wooden", "metal", "white", "black", "gray", "striped"];

/// What pixels that hit no object show.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Background {
    Invalid,
    /// Floor under the camera and a back wall at `wall_distance` meters (world z).
    Planes { wall_distance: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub width: u32,
    pub height: u32,
    pub focal_px: f64,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Distinct categories per scene; few categories make repeated ones common.
    pub max_categories: usize,
    /// Minimum clearance between boxes, meters.
    pub min_gap: f64,
    pub camera_height: (f64, f64),
    pub pitch_deg: (f64, f64),
    pub roll_deg: (f64, f64),
    /// Range of horizontal forward distances for object centers.
    pub depth_range: (f64, f64),
    pub background: Background,
    /// Gaussian depth noise, meters.
    pub noise_sigma: f64,
    /// Reject layouts whose projected boxes overlap, so no object hides another.
    pub avoid_occlusion: bool,
    pub min_visible_pixels: usize,
    /// Share of objects given a caption.
    pub caption_fraction: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            width: 192,
            height: 144,
            focal_px: 150.0,
            min_objects: 2,
            max_objects: 7,
            max_categories: 4,
            min_gap: 0.1,
            camera_height: (1.4, 1.7),
            pitch_deg: (15.0, 30.0),
            roll_deg: (-4.0, 4.0),
            depth_range: (1.5, 7.0),
            background: Background::Planes { wall_distance: 10.0 },
            noise_sigma: 0.0,
            avoid_occlusion: false,
            min_visible_pixels: 12,
            caption_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleObject {
    pub id: u32,
    pub category: String,
    /// World frame, meters.
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
    /// Rotation about gravity; also the facing yaw when `facing` is set.
    pub yaw_deg: f64,
    pub facing: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

impl OracleObject {
    /// Box-local axes in world coordinates (width, height, depth directions).
    pub fn axes(&self) -> [Vec3; 3] {
        let (s, c) = self.yaw_deg.to_radians().sin_cos();
        [Vec3::new(c, 0.0, -s), Vec3::new(0.0, 1.0, 0.0), Vec3::new(s, 0.0, c)]
    }

    pub fn world_corners(&self) -> [Vec3; 8] {
        let ax = self.axes();
        let c = Vec3::from(self.center);
        let h = self.half_extents;
        std::array::from_fn(|k| {
            let s = |bit: usize| if k >> bit & 1 == 1 { 1.0 } else { -1.0 };
            c + ax[0] * (s(0) * h[0]) + ax[1] * (s(1) * h[1]) + ax[2] * (s(2) * h[2])
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleScene {
    pub image_id: String,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub intrinsics: CameraIntrinsics,
    /// Camera height above the floor.
    pub camera_height: f64,
    /// Downward tilt of the optical axis.
    pub pitch_deg: f64,
    /// Rotation about the optical axis.
    pub roll_deg: f64,
    pub background: Background,
    pub noise_sigma: f64,
    pub objects: Vec<OracleObject>,
}

impl OracleScene {
    /// Camera x, y, z axes in world coordinates.
    pub fn camera_axes(&self) -> [Vec3; 3] {
        let (sp, cp) = self.pitch_deg.to_radians().sin_cos();
        let (sr, cr) = self.roll_deg.to_radians().sin_cos();
        let x0 = Vec3::new(1.0, 0.0, 0.0);
        let y0 = Vec3::new(0.0, cp, -sp);
        let z = Vec3::new(0.0, sp, cp);
        [x0 * cr + y0 * sr, y0 * cr - x0 * sr, z]
    }

    pub fn to_camera(&self, w: &Vec3) -> Vec3 {
        let [x, y, z] = self.camera_axes();
        Vec3::new(w.dot(&x), w.dot(&y), w.dot(&z))
    }

    /// Gravity in camera coordinates.
    pub fn gravity(&self) -> [f64; 3] {
        let g = self.to_camera(&Vec3::y());
        [g.x, g.y, g.z]
    }

    /// World-frame direction of the ray through pixel `(u, v)`, scaled to unit camera depth.
    pub fn pixel_ray(&self, u: f64, v: f64) -> Vec3 {
        let [x, y, z] = self.camera_axes();
        let k = &self.intrinsics;
        x * ((u - k.cx) / k.fx) + y * ((v - k.cy) / k.fy) + z
    }

    pub fn object(&self, id: u32) -> Option<&OracleObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// The object's box in the pipeline's convention (camera-frame center).
    pub fn box3d(&self, obj: &OracleObject) -> Box3D {
        let c = self.to_camera(&Vec3::from(obj.center));
        Box3D { center: [c.x, c.y, c.z], half_extents: obj.half_extents, yaw_deg: obj.yaw_deg }
    }

    fn project(&self, w: &Vec3) -> Option<(f64, f64)> {
        let c = self.to_camera(w);
        let k = &self.intrinsics;
        (c.z > 0.0).then(|| (k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy))
    }

    /// Pixel rectangle covering the projected box.
    fn projected_rect(&self, obj: &OracleObject) -> Option<[f64; 4]> {
        let mut r = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for corner in obj.world_corners() {
            let (u, v) = self.project(&corner)?;
            r = [r[0].min(u), r[1].min(v), r[2].max(u), r[3].max(v)];
        }
        Some(r)
    }
}

pub fn image_id_for_seed(seed: u64) -> String {
    format!("oracle-{seed:06}")
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Whether two gravity-aligned boxes, each grown by `gap / 2`, intersect.
pub fn boxes_overlap(a: &OracleObject, b: &OracleObject, gap: f64) -> bool {
    let (ha, hb) = (a.half_extents.map(|h| h + gap / 2.0), b.half_extents.map(|h| h + gap / 2.0));
    if (a.center[1] - b.center[1]).abs() >= ha[1] + hb[1] {
        return false;
    }
    // Footprints: separating-axis test over both rectangles' edge normals.
    let (aa, ab) = (a.axes(), b.axes());
    let d = Vec3::from(b.center) - Vec3::from(a.center);
    let d = Vec3::new(d.x, 0.0, d.z);
    for axis in [aa[0], aa[2], ab[0], ab[2]] {
        let ra = ha[0] * aa[0].dot(&axis).abs() + ha[2] * aa[2].dot(&axis).abs();
        let rb = hb[0] * ab[0].dot(&axis).abs() + hb[2] * ab[2].dot(&axis).abs();
        if d.dot(&axis).abs() >= ra + rb {
            return false;
        }
    }
    true
}

fn propose<R: Rng>(rng: &mut R, scene: &OracleScene, spec: &CategorySpec, id: u32, cfg: &OracleConfig) -> Option<OracleObject> {
    let width = uniform(rng, spec.width);
    let height = uniform(rng, spec.height);
    let depth = if spec.facing { uniform(rng, spec.depth) } else { width };
    let base = if spec.elevated { uniform(rng, (0.5, 0.9)) } else { 0.0 };
    // Keep every top surface at least 0.2 m below the camera so it stays visible.
    if scene.camera_height - base - height < 0.2 {
        return None;
    }
    let z = uniform(rng, cfg.depth_range);
    let half_fov = (cfg.width as f64 / 2.0 / cfg.focal_px).atan();
    let x = uniform(rng, (-0.9, 0.9)) * z * half_fov.tan();
    let obj = OracleObject {
        id,
        category: spec.name.to_string(),
        center: [x, scene.camera_height - base - height / 2.0, z],
        half_extents: [width / 2.0, height / 2.0, depth / 2.0],
        yaw_deg: rng.random_range(0.0..360.0),
        facing: spec.facing,
        caption: None,
    };
    let margin = 1.0;
    for corner in obj.world_corners() {
        let c = scene.to_camera(&corner);
        if c.z < 0.3 {
            return None;
        }
        let (u, v) = scene.project(&corner)?;
        if u < margin || v < margin || u > cfg.width as f64 - 1.0 - margin || v > cfg.height as f64 - 1.0 - margin {
            return None;
        }
    }
    Some(obj)
}

fn rects_overlap(a: &[f64; 4], b: &[f64; 4]) -> bool {
    a[0] <= b[2] + 1.0 && b[0] <= a[2] + 1.0 && a[1] <= b[3] + 1.0 && b[1] <= a[3] + 1.0
}

/// Samples a scene by rejection: boxes are non-overlapping, inside the view, and each
/// shows at least `min_visible_pixels` pixels.
pub fn sample_scene(seed: u64, cfg: &OracleConfig) -> OracleScene {
    let mut rng = rng_for(seed, "oracle-scene");
    let k = cfg.focal_px;
    loop {
        let mut scene = OracleScene {
            image_id: image_id_for_seed(seed),
            seed,
            width: cfg.width,
            height: cfg.height,
            intrinsics: CameraIntrinsics { fx: k, fy: k, cx: cfg.width as f64 / 2.0, cy: cfg.height as f64 / 2.0 },
            camera_height: uniform(&mut rng, cfg.camera_height),
            pitch_deg: uniform(&mut rng, cfg.pitch_deg),
            roll_deg: uniform(&mut rng, cfg.roll_deg),
            background: cfg.background,
            noise_sigma: cfg.noise_sigma,
            objects: Vec::new(),
        };
        let n = rng.random_range(cfg.min_objects..=cfg.max_objects.max(cfg.min_objects));
        let n_cats = rng.random_range(1..=cfg.max_categories.clamp(1, CATEGORY_POOL.len()));
        let cats: Vec<usize> = sample(&mut rng, CATEGORY_POOL.len(), n_cats).into_vec();
        for id in 0..n as u32 {
            let spec = &CATEGORY_POOL[cats[rng.random_range(0..cats.len())]];
            for _ in 0..100 {
                let Some(obj) = propose(&mut rng, &scene, spec, id, cfg) else { continue };
                if scene.objects.iter().any(|o| boxes_overlap(o, &obj, cfg.min_gap)) {
                    continue;
                }
                if cfg.avoid_occlusion {
                    let r = scene.projected_rect(&obj).unwrap();
                    if scene.objects.iter().any(|o| rects_overlap(&scene.projected_rect(o).unwrap(), &r)) {
                        continue;
                    }
                }
                scene.objects.push(obj);
                break;
            }
        }
        let visible = render::visible_pixels(&scene);
        scene.objects.retain(|o| visible.get(&o.id).copied().unwrap_or(0) >= cfg.min_visible_pixels);
        if scene.objects.len() < cfg.min_objects {
            continue;
        }
        for (k, obj) in scene.objects.iter_mut().enumerate() {
            obj.id = k as u32;
            if rng.random_bool(cfg.caption_fraction.clamp(0.0, 1.0)) {
                let word = CAPTION_WORDS[rng.random_range(0..CAPTION_WORDS.len())];
                obj.caption = Some(format!("the {word} {}", obj.category));
            }
        }
        return scene;
    }
}

/// How much ground truth a written manifest carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManifestOptions {
    /// Include exact 3D boxes, so the pipeline skips box fitting.
    pub with_boxes: bool,
    pub with_captions: bool,
}

impl Default for ManifestOptions {
    fn default() -> Self {
        ManifestOptions { with_boxes: true, with_captions: true }
    }
}

/// Manifest entry for a rendered scene, pointing at `{image_id}.pmap` and
/// `{image_id}.{object}.mask` relative to the manifest directory.
pub fn scene_manifest(scene: &OracleScene, render: &OracleRender, opts: &ManifestOptions) -> ImageManifest {
    let objects = scene
        .objects
        .iter()
        .map(|o| {
            let mask = &render.masks.iter().find(|(id, _)| *id == o.id).expect("mask per object").1;
            let bbox = mask.bounding_box().unwrap_or([0.0; 4]);
            let captions = match (&o.caption, opts.with_captions) {
                (Some(text), true) => vec![CaptionCandidate {
                    text: text.clone(),
                    grounding: Some(Grounding { boxes: vec![bbox], mask_iou: Some(0.9) }),
                }],
                _ => vec![],
            };
            ObjectAnnotation {
                id: o.id,
                category: o.category.clone(),
                bbox,
                mask: Some(format!("{}.{}.mask", scene.image_id, o.id)),
                yaw_deg: o.facing.then_some(o.yaw_deg),
                box3d: opts.with_boxes.then(|| scene.box3d(o)),
                captions,
            }
        })
        .collect();
    ImageManifest {
        image_id: scene.image_id.clone(),
        width: scene.width,
        height: scene.height,
        pointmap: Some(format!("{}.pmap", scene.image_id)),
        image: None,
        intrinsics: Some(scene.intrinsics),
        gravity: Some(scene.gravity()),
        pixel_stats: None,
        retrieved_tags: None,
        objects,
        detections: vec![],
    }
}

/// Renders a scene into `dir`: point map, masks and `{image_id}.scene.json`. Returns the
/// manifest entry.
pub fn write_scene(dir: &Path, scene: &OracleScene, opts: &ManifestOptions) -> Result<ImageManifest, FormatError> {
    let render = render_scene(scene);
    write_pointmap(dir.join(format!("{}.pmap", scene.image_id)), &render.pointmap)?;
    for (id, mask) in &render.masks {
        write_mask(dir.join(format!("{}.{id}.mask", scene.image_id)), mask)?;
    }
    let json_path = dir.join(format!("{}.scene.json", scene.image_id));
    let json = serde_json::to_vec_pretty(scene).expect("scene serializes");
    std::fs::write(&json_path, json).map_err(|e| FormatError::io(&json_path, e))?;
    Ok(scene_manifest(scene, &render, opts))
}

pub fn read_scene(path: &Path) -> Result<OracleScene, FormatError> {
    let bytes = std::fs::read(path).map_err(|e| FormatError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| FormatError::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
}
