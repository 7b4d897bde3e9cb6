use serde::{Deserialize, Serialize};

use super::{yaw_rotation, Box3D, GeometryError, GravityFrame, ObjectPointCloud, Vec3, MIN_HALF_EXTENT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoxFitOptions {
    /// Use percentile + MAD bounds instead of the raw min/max.
    pub robust: bool,
    pub lower_percentile: f64,
    pub upper_percentile: f64,
}

impl Default for BoxFitOptions {
    fn default() -> Self {
        BoxFitOptions {
            robust: true,
            lower_percentile: 1.0,
            upper_percentile: 99.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitQuality {
    Robust,
    Exact,
    /// Fewer than three points: axis-aligned raw extents.
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxFit {
    pub bbox: Box3D,
    pub quality: FitQuality,
}

fn percentile(sorted: &[f64], pct: f64) -> f64 {
    let rank = (pct / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// Outlier-tolerant `(min, max)` of a sample.
///
/// Starts from the lower/upper percentiles and widens each side to the farthest sample
/// lying within one median absolute deviation beyond it. Clean samples therefore keep
/// their exact extremes while isolated far outliers are dropped.
pub fn robust_bounds(values: &[f64], lower_pct: f64, upper_pct: f64) -> (f64, f64) {
    assert!(!values.is_empty(), "robust_bounds of an empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let p_lo = percentile(&sorted, lower_pct);
    let p_hi = percentile(&sorted, upper_pct);
    let med = percentile(&sorted, 50.0);
    let mut dev: Vec<f64> = sorted.iter().map(|v| (v - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let mad = percentile(&dev, 50.0);
    let lo = sorted.iter().copied().find(|&v| v >= p_lo - mad).unwrap_or(p_lo);
    let hi = sorted.iter().rev().copied().find(|&v| v <= p_hi + mad).unwrap_or(p_hi);
    (lo, hi)
}

/// Minimum-area enclosing rectangle of a 2D point set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinAreaRect {
    /// Direction of the rectangle's first edge, radians in `[0, pi/2)`.
    pub angle: f64,
    pub area: f64,
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Tries every hull edge direction (the optimal rectangle is flush with one of them).
pub fn min_area_rectangle(points: &[[f64; 2]]) -> Option<MinAreaRect> {
    let hull = convex_hull(points);
    let quarter = std::f64::consts::FRAC_PI_2;
    match hull.len() {
        0 => return None,
        1 => return Some(MinAreaRect { angle: 0.0, area: 0.0 }),
        _ => {}
    }
    let mut best: Option<MinAreaRect> = None;
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len = dx.hypot(dy);
        if len == 0.0 {
            continue;
        }
        let (ex, ey) = (dx / len, dy / len);
        let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &hull {
            let u = p[0] * ex + p[1] * ey;
            let v = -p[0] * ey + p[1] * ex;
            u0 = u0.min(u);
            u1 = u1.max(u);
            v0 = v0.min(v);
            v1 = v1.max(v);
        }
        let rect = MinAreaRect {
            angle: ey.atan2(ex).rem_euclid(quarter) % quarter,
            area: (u1 - u0) * (v1 - v0),
        };
        let better = match best {
            None => true,
            Some(b) => rect.area < b.area || (rect.area == b.area && rect.angle < b.angle),
        };
        if better {
            best = Some(rect);
        }
    }
    best
}

fn bounds(values: &[f64], opts: &BoxFitOptions, exact: bool) -> (f64, f64) {
    if exact || !opts.robust {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    } else {
        robust_bounds(values, opts.lower_percentile, opts.upper_percentile)
    }
}

/// Fits a gravity-aligned box to an object cloud.
///
/// The vertical extent comes from world-y; the footprint is oriented by `yaw_hint`
/// when given, otherwise by the minimum-area rectangle of the horizontal projection
/// (yaw reported in `[0, 90)`).
pub fn fit_box3d(
    pc: &ObjectPointCloud,
    frame: &GravityFrame,
    yaw_hint: Option<f64>,
    opts: &BoxFitOptions,
) -> Result<BoxFit, GeometryError> {
    if pc.points.is_empty() {
        return Err(GeometryError::EmptyObject);
    }
    let world: Vec<Vec3> = pc.points.iter().map(|p| frame.to_world(&Vec3::from(*p))).collect();
    let sparse = world.len() < 3;
    let quality = if sparse {
        FitQuality::Sparse
    } else if opts.robust {
        FitQuality::Robust
    } else {
        FitQuality::Exact
    };

    let yaw_deg = match (yaw_hint, sparse) {
        (Some(y), false) => y.rem_euclid(360.0),
        (_, true) => 0.0,
        (None, false) => {
            // Orientation from the points surviving per-axis trimming.
            let axis = |k: usize| -> Vec<f64> { world.iter().map(|p| p[k]).collect() };
            let windows: Vec<(f64, f64)> = (0..3).map(|k| bounds(&axis(k), opts, false)).collect();
            let footprint: Vec<[f64; 2]> = world
                .iter()
                .filter(|p| (0..3).all(|k| windows[k].0 <= p[k] && p[k] <= windows[k].1))
                .map(|p| [p.x, p.z])
                .collect();
            let rect = min_area_rectangle(&footprint).ok_or(GeometryError::EmptyObject)?;
            (-rect.angle.to_degrees()).rem_euclid(90.0) % 90.0
        }
    };

    let rot = yaw_rotation(yaw_deg);
    let local: Vec<Vec3> = world.iter().map(|p| rot.transpose() * p).collect();
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for k in 0..3 {
        let vals: Vec<f64> = local.iter().map(|p| p[k]).collect();
        (lo[k], hi[k]) = bounds(&vals, opts, sparse);
    }
    let center_local = Vec3::new((lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0, (lo[2] + hi[2]) / 2.0);
    let center = frame.to_camera(&(rot * center_local));
    let half_extents = [0, 1, 2].map(|k| ((hi[k] - lo[k]) / 2.0).max(MIN_HALF_EXTENT));
    Ok(BoxFit {
        bbox: Box3D {
            center: [center.x, center.y, center.z],
            half_extents,
            yaw_deg,
        },
        quality,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::gravity_frame;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Points on the surface of an axis-aligned cube of side 1 centred at `c`.
    fn cube_surface(c: [f64; 3], steps: usize) -> Vec<[f64; 3]> {
        let mut out = Vec::new();
        let s = |i: usize| -0.5 + i as f64 / steps as f64;
        for i in 0..=steps {
            for j in 0..=steps {
                for (a, b) in [(0usize, 1usize), (0, 2), (1, 2)] {
                    for side in [-0.5, 0.5] {
                        let mut p = [0.0; 3];
                        p[a] = s(i);
                        p[b] = s(j);
                        p[3 - a - b] = side;
                        out.push([p[0] + c[0], p[1] + c[1], p[2] + c[2]]);
                    }
                }
            }
        }
        out
    }

    fn rotate_y(points: &[[f64; 3]], deg: f64, about: [f64; 3]) -> Vec<[f64; 3]> {
        let r = yaw_rotation(deg);
        points
            .iter()
            .map(|p| {
                let v = r * (Vec3::from(*p) - Vec3::from(about)) + Vec3::from(about);
                [v.x, v.y, v.z]
            })
            .collect()
    }

    fn cloud(points: Vec<[f64; 3]>) -> ObjectPointCloud {
        ObjectPointCloud { object_id: 0, source_pixels: points.len(), points }
    }

    /// Brute-force area sweep at 0.01 degree resolution.
    fn sweep_min_area_angle(points: &[[f64; 2]]) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for step in 0..9000 {
            let a = (step as f64 * 0.01).to_radians();
            let (s, c) = a.sin_cos();
            let us: Vec<f64> = points.iter().map(|p| p[0] * c + p[1] * s).collect();
            let vs: Vec<f64> = points.iter().map(|p| -p[0] * s + p[1] * c).collect();
            let span = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min);
            let area = span(&us) * span(&vs);
            if area < best.0 - 1e-12 {
                best = (area, a);
            }
        }
        best.1
    }

    fn angle_gap_deg(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(90.0);
        d.min(90.0 - d)
    }

    #[test]
    fn unit_cube_identity() {
        let pc = cloud(cube_surface([0.0, 0.0, 3.0], 10));
        let fit = fit_box3d(&pc, &GravityFrame::identity(), None, &BoxFitOptions::default()).unwrap();
        for k in 0..3 {
            assert!((fit.bbox.size()[k] - 1.0).abs() < 1e-12);
            assert!((fit.bbox.center[k] - [0.0, 0.0, 3.0][k]).abs() < 1e-12);
        }
        assert_eq!(fit.bbox.yaw_deg, 0.0);
        assert_eq!(fit.quality, FitQuality::Robust);
    }

    #[test]
    fn rotated_cube_recovers_yaw() {
        let c = [0.3, -0.2, 4.0];
        let pts = rotate_y(&cube_surface(c, 12), 30.0, c);
        let fit = fit_box3d(&cloud(pts.clone()), &GravityFrame::identity(), None, &BoxFitOptions::default()).unwrap();
        assert!(angle_gap_deg(fit.bbox.yaw_deg, 30.0) <= 0.5, "yaw {}", fit.bbox.yaw_deg);
        let footprint: Vec<[f64; 2]> = pts.iter().map(|p| [p[0], p[2]]).collect();
        let oracle_yaw = -sweep_min_area_angle(&footprint).to_degrees();
        assert!(angle_gap_deg(fit.bbox.yaw_deg, oracle_yaw) <= 0.5);
        for s in fit.bbox.size() {
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn min_area_matches_sweep_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let (a, b) = (rng.random_range(0.5..3.0), rng.random_range(0.2..1.0));
            let t: f64 = rng.random_range(0.0..90.0f64).to_radians();
            let pts: Vec<[f64; 2]> = (0..60)
                .map(|_| {
                    let (x, y) = (rng.random_range(-a..a), rng.random_range(-b..b));
                    [x * t.cos() - y * t.sin(), x * t.sin() + y * t.cos()]
                })
                .collect();
            let rect = min_area_rectangle(&pts).unwrap();
            let sweep = sweep_min_area_angle(&pts);
            assert!(angle_gap_deg(rect.angle.to_degrees(), sweep.to_degrees()) <= 0.02);
        }
    }

    #[test]
    fn far_outliers_do_not_inflate_extents() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = [0.0, 0.5, 5.0];
        let clean = cube_surface(c, 14);
        let mut dirty = clean.clone();
        for _ in 0..clean.len() / 100 {
            dirty.push([rng.random_range(3.0..8.0), rng.random_range(-6.0..-2.0), rng.random_range(9.0..14.0)]);
        }
        let opts = BoxFitOptions::default();
        for hint in [None, Some(0.0)] {
            let reference = fit_box3d(&cloud(clean.clone()), &GravityFrame::identity(), hint, &opts).unwrap();
            let fit = fit_box3d(&cloud(dirty.clone()), &GravityFrame::identity(), hint, &opts).unwrap();
            for k in 0..3 {
                let rel = fit.bbox.size()[k] / reference.bbox.size()[k];
                assert!((rel - 1.0).abs() <= 0.02, "axis {k}: {rel}");
            }
        }
    }

    #[test]
    fn sparse_cloud_falls_back() {
        let pc = cloud(vec![[0.0, 0.0, 2.0], [0.2, 0.1, 2.0]]);
        let fit = fit_box3d(&pc, &GravityFrame::identity(), Some(40.0), &BoxFitOptions::default()).unwrap();
        assert_eq!(fit.quality, FitQuality::Sparse);
        assert_eq!(fit.bbox.yaw_deg, 0.0);
        assert!((fit.bbox.size()[0] - 0.2).abs() < 1e-12);
        assert_eq!(fit.bbox.half_extents[2], MIN_HALF_EXTENT);
        assert!(fit_box3d(&cloud(vec![]), &GravityFrame::identity(), None, &BoxFitOptions::default()).is_err());
    }

    #[test]
    fn tilted_gravity_box_is_upright() {
        let t = 12f64.to_radians();
        let frame = gravity_frame([0.0, t.cos(), t.sin()]).unwrap();
        let c = Vec3::new(0.0, 0.0, 4.0);
        let cw = frame.to_world(&c);
        let pts: Vec<[f64; 3]> = cube_surface([cw.x, cw.y, cw.z], 8)
            .iter()
            .map(|p| {
                let v = frame.to_camera(&Vec3::from(*p));
                [v.x, v.y, v.z]
            })
            .collect();
        let fit = fit_box3d(&cloud(pts), &frame, Some(0.0), &BoxFitOptions::default()).unwrap();
        assert!((Vec3::from(fit.bbox.center) - c).norm() < 1e-9);
        for s in fit.bbox.size() {
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn yaw_equivariance(w in 0.4f64..2.0, d in 0.4f64..2.0, phi in 0.0f64..360.0, hinted in any::<bool>()) {
            let c = [0.1, 0.2, 5.0];
            let mut base: Vec<[f64; 3]> = cube_surface([0.0; 3], 8)
                .iter()
                .map(|p| [p[0] * w + c[0], p[1] + c[1], p[2] * d + c[2]])
                .collect();
            base = rotate_y(&base, 7.0, c);
            let opts = BoxFitOptions::default();
            let hint = hinted.then_some(7.0);
            let a = fit_box3d(&cloud(base.clone()), &GravityFrame::identity(), hint, &opts).unwrap().bbox;
            let rotated = rotate_y(&base, phi, c);
            let b = fit_box3d(&cloud(rotated), &GravityFrame::identity(), hint.map(|h| h + phi), &opts).unwrap().bbox;
            if hinted {
                prop_assert!(((b.yaw_deg - a.yaw_deg - phi).rem_euclid(360.0)).min((a.yaw_deg + phi - b.yaw_deg).rem_euclid(360.0)) < 1e-6);
                for k in 0..3 {
                    prop_assert!((a.half_extents[k] - b.half_extents[k]).abs() < 1e-6);
                }
            } else {
                prop_assert!(angle_gap_deg(b.yaw_deg, a.yaw_deg + phi) < 1e-6);
                let mut sa = a.half_extents;
                let mut sb = b.half_extents;
                sa.sort_by(f64::total_cmp);
                sb.sort_by(f64::total_cmp);
                for k in 0..3 {
                    prop_assert!((sa[k] - sb[k]).abs() < 1e-6);
                }
            }
        }

        #[test]
        fn exact_volume_never_shrinks(extra in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0, 1.0f64..9.0), 1..20)) {
            let base = cube_surface([0.0, 0.0, 5.0], 4);
            let opts = BoxFitOptions { robust: false, ..Default::default() };
            let v0 = fit_box3d(&cloud(base.clone()), &GravityFrame::identity(), Some(15.0), &opts).unwrap().bbox.volume();
            let mut more = base;
            more.extend(extra.iter().map(|&(x, y, z)| [x, y, z]));
            let v1 = fit_box3d(&cloud(more), &GravityFrame::identity(), Some(15.0), &opts).unwrap().bbox.volume();
            prop_assert!(v1 >= v0 - 1e-9);
        }
    }
}
