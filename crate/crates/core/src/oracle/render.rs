//! Ray casting of oracle scenes into point maps and masks.

use std::collections::BTreeMap;

use rand_distr::{Distribution, Normal};

use super::{Background, OracleObject, OracleScene};
use crate::formats::{Mask, PointMap};
use crate::geometry::Vec3;
use crate::seed::rng_for;

#[derive(Debug, Clone)]
pub struct OracleRender {
    pub pointmap: PointMap,
    /// One mask per object, in scene order.
    pub masks: Vec<(u32, Mask)>,
}

/// Entry distance along `dir` (from the world origin) into a box, by slabs in the box
/// frame. The ray has unit camera depth, so the distance is the camera-frame depth.
fn slab_hit(obj: &OracleObject, dir: &Vec3) -> Option<f64> {
    let axes = obj.axes();
    let origin = -Vec3::from(obj.center);
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..3 {
        let o = origin.dot(&axes[k]);
        let d = dir.dot(&axes[k]);
        let h = obj.half_extents[k];
        if d.abs() < 1e-15 {
            if o.abs() > h {
                return None;
            }
            continue;
        }
        let (a, b) = ((-h - o) / d, (h - o) / d);
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    (t0 <= t1 && t0 > 0.0).then_some(t0)
}

fn background_hit(scene: &OracleScene, dir: &Vec3) -> Option<f64> {
    match scene.background {
        Background::Invalid => None,
        Background::Planes { wall_distance } => {
            let floor = (dir.y > 0.0).then(|| scene.camera_height / dir.y);
            let wall = (dir.z > 0.0).then(|| wall_distance / dir.z);
            match (floor, wall) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            }
        }
    }
}

/// Nearest hit per pixel: `(depth, owner)`, owner `None` for background.
fn cast(scene: &OracleScene) -> Vec<Option<(f64, Option<u32>)>> {
    let mut out = Vec::with_capacity(scene.width as usize * scene.height as usize);
    for v in 0..scene.height {
        for u in 0..scene.width {
            let dir = scene.pixel_ray(u as f64, v as f64);
            let mut best: Option<(f64, Option<u32>)> = background_hit(scene, &dir).map(|t| (t, None));
            for obj in &scene.objects {
                if let Some(t) = slab_hit(obj, &dir) {
                    if best.is_none_or(|(b, _)| t < b) {
                        best = Some((t, Some(obj.id)));
                    }
                }
            }
            out.push(best);
        }
    }
    out
}

pub(super) fn visible_pixels(scene: &OracleScene) -> BTreeMap<u32, usize> {
    let mut counts = BTreeMap::new();
    for (_, owner) in cast(scene).into_iter().flatten() {
        if let Some(id) = owner {
            *counts.entry(id).or_insert(0) += 1;
        }
    }
    counts
}

/// Renders the scene. Depth noise, when configured, is drawn from a generator seeded by
/// the scene seed, one draw per hit pixel in row-major order.
pub fn render_scene(scene: &OracleScene) -> OracleRender {
    let hits = cast(scene);
    let (w, h) = (scene.width, scene.height);
    let mut rng = rng_for(scene.seed, "oracle-render");
    let noise = (scene.noise_sigma > 0.0).then(|| Normal::new(0.0, scene.noise_sigma).expect("finite sigma"));
    let k = &scene.intrinsics;
    let mut points = Vec::with_capacity(hits.len());
    let mut valid = Vec::with_capacity(hits.len());
    let mut masks: Vec<(u32, Mask)> = scene.objects.iter().map(|o| (o.id, Mask::empty(w, h))).collect();
    for (i, hit) in hits.iter().enumerate() {
        let (u, v) = ((i % w as usize) as u32, (i / w as usize) as u32);
        match hit {
            Some((t, owner)) => {
                let mut depth = *t;
                if let Some(n) = &noise {
                    depth = (depth + n.sample(&mut rng)).max(1e-3);
                }
                let x = (u as f64 - k.cx) / k.fx * depth;
                let y = (v as f64 - k.cy) / k.fy * depth;
                points.push([x as f32, y as f32, depth as f32]);
                valid.push(true);
                if let Some(id) = owner {
                    if let Some((_, m)) = masks.iter_mut().find(|(mid, _)| mid == id) {
                        m.set(u, v, true);
                    }
                }
            }
            None => {
                points.push([0.0; 3]);
                valid.push(false);
            }
        }
    }
    let pointmap = PointMap::new(w, h, points, valid).expect("grid sized to the image").map;
    OracleRender { pointmap, masks }
}
