use serde::{Deserialize, Serialize};

use super::{GeometryError, Vec3};
use crate::formats::PointMap;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn validate(&self, width: u32, height: u32) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::NonPositiveFocal {
                fx: self.fx,
                fy: self.fy,
            });
        }
        let inside = (0.0..=width as f64).contains(&self.cx) && (0.0..=height as f64).contains(&self.cy);
        if !inside {
            return Err(GeometryError::PrincipalPointOutside {
                cx: self.cx,
                cy: self.cy,
                width,
                height,
            });
        }
        Ok(())
    }

    /// Ray direction through pixel `(u, v)` scaled to unit depth.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Metric depth along +z per pixel. Non-finite or non-positive entries are invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub depth: Vec<f32>,
}

pub fn backproject(depth: &DepthMap, intrinsics: &CameraIntrinsics) -> Result<PointMap, GeometryError> {
    if !(intrinsics.fx > 0.0 && intrinsics.fy > 0.0) {
        return Err(GeometryError::NonPositiveFocal {
            fx: intrinsics.fx,
            fy: intrinsics.fy,
        });
    }
    let n = depth.width as usize * depth.height as usize;
    if depth.depth.len() != n {
        return Err(GeometryError::SizeMismatch(format!(
            "{} depth values for a {}x{} grid",
            depth.depth.len(),
            depth.width,
            depth.height
        )));
    }
    let mut points = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for (i, &z) in depth.depth.iter().enumerate() {
        let u = (i % depth.width as usize) as f64;
        let v = (i / depth.width as usize) as f64;
        if z.is_finite() && z > 0.0 {
            let p = intrinsics.ray(u, v) * z as f64;
            points.push([p.x as f32, p.y as f32, p.z as f32]);
            valid.push(true);
        } else {
            points.push([0.0; 3]);
            valid.push(false);
        }
    }
    PointMap::new(depth.width, depth.height, points, valid)
        .map(|loaded| loaded.map)
        .map_err(|e| GeometryError::SizeMismatch(e.to_string()))
}

/// Projects a camera-frame point to pixel coordinates; `None` behind the camera.
pub fn project(p: &Vec3, intrinsics: &CameraIntrinsics) -> Option<(f64, f64)> {
    (p.z > 0.0).then(|| {
        (
            intrinsics.fx * p.x / p.z + intrinsics.cx,
            intrinsics.fy * p.y / p.z + intrinsics.cy,
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    const K: CameraIntrinsics = CameraIntrinsics {
        fx: 100.0,
        fy: 120.0,
        cx: 2.0,
        cy: 1.0,
    };

    fn single(u: u32, v: u32, w: u32, h: u32, z: f32) -> PointMap {
        let mut depth = vec![f32::NAN; (w * h) as usize];
        depth[(v * w + u) as usize] = z;
        backproject(&DepthMap { width: w, height: h, depth }, &K).unwrap()
    }

    #[test]
    fn principal_point_maps_to_optical_axis() {
        let pm = single(2, 1, 5, 3, 2.0);
        assert_eq!(pm.get(2, 1), Some([0.0, 0.0, 2.0]));
        assert_eq!(pm.valid_count(), 1);
    }

    #[test]
    fn one_focal_length_right_is_one_meter() {
        let k = CameraIntrinsics { fx: 2.0, fy: 2.0, cx: 1.0, cy: 0.0 };
        let pm = backproject(&DepthMap { width: 4, height: 1, depth: vec![1.0; 4] }, &k).unwrap();
        assert_eq!(pm.get(3, 0).unwrap()[0], 1.0);
    }

    #[test]
    fn rejects_bad_focal() {
        let k = CameraIntrinsics { fx: 0.0, ..K };
        let d = DepthMap { width: 1, height: 1, depth: vec![1.0] };
        assert!(matches!(backproject(&d, &k), Err(GeometryError::NonPositiveFocal { .. })));
    }

    #[test]
    fn ray_round_trip_in_double_precision() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let (u, v, z) = (rng.random_range(0.0..640.0), rng.random_range(0.0..480.0), rng.random_range(0.1..100.0));
            let p = K.ray(u, v) * z;
            let (pu, pv) = project(&p, &K).unwrap();
            assert!((pu - u).abs() < 1e-6 && (pv - v).abs() < 1e-6);
        }
    }

    #[test]
    fn backproject_then_project_recovers_pixels() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let (w, h) = (16u32, 12u32);
        let depth: Vec<f32> = (0..w * h).map(|_| rng.random_range(0.3..40.0)).collect();
        let k = CameraIntrinsics { fx: 13.0, fy: 11.5, cx: 7.3, cy: 5.9 };
        let pm = backproject(&DepthMap { width: w, height: h, depth }, &k).unwrap();
        for v in 0..h {
            for u in 0..w {
                let p = pm.get(u, v).unwrap();
                let (pu, pv) = project(&Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64), &k).unwrap();
                // f32 storage bounds the achievable precision.
                assert!((pu - u as f64).abs() < 1e-5 && (pv - v as f64).abs() < 1e-5, "{pu} {pv} vs {u} {v}");
            }
        }
    }
}
