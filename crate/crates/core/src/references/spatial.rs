//! Category, linear-order, positional and size references, and their resolver.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, SymmetricEigen};

use super::{
    LineSide, LinearityMeasure, ObjectReference, PositionKey, ReferenceConfig, ReferenceSpec, SizeKey,
};
use crate::geometry::{GravityFrame, Vec3};
use crate::relations::{separated, Guards};
use crate::scene::SceneObject;

/// Result of the linearity test on a set of centers.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearArrangement {
    /// Second over first principal magnitude, in the configured measure.
    pub ratio: f64,
    /// Unit direction of the first principal component (world frame).
    pub direction: [f64; 3],
    pub side: LineSide,
}

/// PCA linearity test on world-frame centers. `None` when there are fewer than three
/// centers, the spread is not linear, or the line is as close to two world axes within
/// the ambiguity tolerance.
pub fn linear_arrangement(world_centers: &[Vec3], config: &ReferenceConfig) -> Option<LinearArrangement> {
    let n = world_centers.len();
    if n < 3 {
        return None;
    }
    let mean = world_centers.iter().fold(Vec3::zeros(), |a, c| a + c) / n as f64;
    let mut cov = Matrix3::zeros();
    for c in world_centers {
        let d = c - mean;
        cov += d * d.transpose();
    }
    cov /= n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let l1 = eig.eigenvalues[order[0]].max(0.0);
    let l2 = eig.eigenvalues[order[1]].max(0.0);
    if l1 <= 0.0 {
        return None;
    }
    let ratio = match config.linearity_measure {
        LinearityMeasure::SingularValues => (l2 / l1).sqrt(),
        LinearityMeasure::Eigenvalues => l2 / l1,
    };
    if ratio >= config.linearity_ratio {
        return None;
    }
    let dir = eig.eigenvectors.column(order[0]).into_owned().normalize();
    let mut angles: Vec<(f64, usize)> =
        (0..3).map(|k| (dir[k].abs().min(1.0).acos().to_degrees(), k)).collect();
    angles.sort_by(|a, b| a.0.total_cmp(&b.0));
    if angles[1].0 - angles[0].0 <= config.axis_ambiguity_deg {
        return None;
    }
    let side = match angles[0].1 {
        0 => LineSide::Left,
        1 => LineSide::Top,
        _ => LineSide::Front,
    };
    Some(LinearArrangement { ratio, direction: [dir.x, dir.y, dir.z], side })
}

fn world_center(obj: &SceneObject, frame: &GravityFrame) -> Vec3 {
    frame.to_world(&obj.center())
}

/// Coordinates along the line's axis, if the group forms a well-spaced line.
fn line_coordinates(objs: &[&SceneObject], frame: &GravityFrame, config: &ReferenceConfig) -> Option<(LineSide, Vec<f64>)> {
    let centers: Vec<Vec3> = objs.iter().map(|o| world_center(o, frame)).collect();
    let arrangement = linear_arrangement(&centers, config)?;
    let axis = arrangement.side.axis();
    let coords: Vec<f64> = centers.iter().map(|c| c[axis]).collect();
    let lo = coords.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = coords.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_gap = config.min_spacing_fraction * (hi - lo) / (coords.len() - 1) as f64;
    for i in 0..coords.len() {
        for j in i + 1..coords.len() {
            if (coords[i] - coords[j]).abs() < min_gap || coords[i] == coords[j] {
                return None;
            }
        }
    }
    Some((arrangement.side, coords))
}

/// "the k-th {cat} from the {side} in the row" for every object of a same-category group.
pub fn linear_order_references(
    objs: &[&SceneObject],
    frame: &GravityFrame,
    config: &ReferenceConfig,
) -> Option<Vec<ObjectReference>> {
    let (side, coords) = line_coordinates(objs, frame, config)?;
    Some(
        objs.iter()
            .enumerate()
            .map(|(i, o)| {
                let rank = coords.iter().filter(|&&c| c < coords[i]).count();
                ObjectReference::from_spec(o.id, ReferenceSpec::LinearOrder { category: o.category.clone(), side, rank })
            })
            .collect(),
    )
}

fn position_value(obj: &SceneObject, key: PositionKey, frame: &GravityFrame) -> f64 {
    match key {
        PositionKey::Horizontal => world_center(obj, frame).x,
        PositionKey::Vertical => world_center(obj, frame).y,
        PositionKey::CameraDistance => obj.camera_distance(),
    }
}

/// Whether two objects are far enough apart in `key` to be ranked. Coordinates along a
/// world axis must differ by the guard ratio times the larger camera distance; distances
/// must differ by the guard ratio of the smaller one.
fn position_distinct(a: &SceneObject, b: &SceneObject, key: PositionKey, frame: &GravityFrame, ratio: f64) -> bool {
    let (va, vb) = (position_value(a, key, frame), position_value(b, key, frame));
    match key {
        PositionKey::CameraDistance => separated(va.min(vb), va.max(vb), ratio),
        _ => (va - vb).abs() >= ratio * a.camera_distance().max(b.camera_distance()) && va != vb,
    }
}

fn size_value(obj: &SceneObject, key: SizeKey) -> f64 {
    match key {
        SizeKey::Width => obj.size()[0],
        SizeKey::Height => obj.size()[1],
        SizeKey::Volume => obj.bbox.volume(),
    }
}

fn size_distinct(a: &SceneObject, b: &SceneObject, key: SizeKey, ratio: f64) -> bool {
    let (va, vb) = (size_value(a, key), size_value(b, key));
    separated(va.min(vb), va.max(vb), ratio)
}

/// Rank of `objs[i]` among the group, counted from the nearer end, or `None` if some other
/// object is too close to it in value.
fn rank_of(values: &[f64], i: usize, distinct: impl Fn(usize) -> bool) -> Option<(usize, bool)> {
    if (0..values.len()).any(|j| j != i && !distinct(j)) {
        return None;
    }
    let low = values.iter().filter(|&&v| v < values[i]).count();
    let high = values.len() - 1 - low;
    Some(if high < low { (high, true) } else { (low, false) })
}

pub fn positional_references(objs: &[&SceneObject], frame: &GravityFrame, guards: &Guards) -> Vec<ObjectReference> {
    let mut out = Vec::new();
    if objs.len() < 2 {
        return out;
    }
    for key in [PositionKey::Horizontal, PositionKey::CameraDistance, PositionKey::Vertical] {
        let values: Vec<f64> = objs.iter().map(|o| position_value(o, key, frame)).collect();
        for (i, o) in objs.iter().enumerate() {
            let distinct = |j: usize| position_distinct(o, objs[j], key, frame, guards.comparison_ratio);
            if let Some((rank, from_high)) = rank_of(&values, i, distinct) {
                let spec = ReferenceSpec::Positional {
                    category: o.category.clone(),
                    key,
                    rank,
                    from_high,
                    pair: objs.len() == 2,
                };
                out.push(ObjectReference::from_spec(o.id, spec));
            }
        }
    }
    out
}

pub fn size_references(objs: &[&SceneObject], guards: &Guards) -> Vec<ObjectReference> {
    let mut out = Vec::new();
    if objs.len() < 2 {
        return out;
    }
    for key in [SizeKey::Volume, SizeKey::Height, SizeKey::Width] {
        let values: Vec<f64> = objs.iter().map(|o| size_value(o, key)).collect();
        for (i, o) in objs.iter().enumerate() {
            let distinct = |j: usize| size_distinct(o, objs[j], key, guards.comparison_ratio);
            if let Some((rank, from_high)) = rank_of(&values, i, distinct) {
                let spec = ReferenceSpec::SizeComparison {
                    category: o.category.clone(),
                    key,
                    rank,
                    from_high,
                    pair: objs.len() == 2,
                };
                out.push(ObjectReference::from_spec(o.id, spec));
            }
        }
    }
    out
}

pub fn category_reference(obj: &SceneObject) -> ObjectReference {
    ObjectReference::from_spec(obj.id, ReferenceSpec::Category { category: obj.category.clone() })
}

/// Every non-textual candidate for every object, grouped by category.
pub fn spatial_candidates(
    objects: &[SceneObject],
    frame: &GravityFrame,
    guards: &Guards,
    config: &ReferenceConfig,
) -> Vec<ObjectReference> {
    let mut groups: BTreeMap<&str, Vec<&SceneObject>> = BTreeMap::new();
    for o in objects {
        groups.entry(o.category.as_str()).or_default().push(o);
    }
    let mut out = Vec::new();
    for objs in groups.values() {
        if objs.len() == 1 {
            out.push(category_reference(objs[0]));
            continue;
        }
        if let Some(refs) = linear_order_references(objs, frame, config) {
            out.extend(refs);
        }
        out.extend(positional_references(objs, frame, guards));
        out.extend(size_references(objs, guards));
    }
    out
}

/// Finds the object a spatial reference designates by checking every candidate against
/// every other member of its category. `highlights` supplies the box-fallback assignments
/// of the image. Returns `None` unless exactly one object matches; captions are never
/// resolved here.
pub fn resolve(
    spec: &ReferenceSpec,
    objects: &[SceneObject],
    frame: &GravityFrame,
    guards: &Guards,
    config: &ReferenceConfig,
    highlights: &[ObjectReference],
) -> Option<u32> {
    let group = |cat: &str| -> Vec<&SceneObject> { objects.iter().filter(|o| o.category == cat).collect() };
    let unique = |ids: Vec<u32>| if ids.len() == 1 { Some(ids[0]) } else { None };
    match spec {
        ReferenceSpec::Textual { .. } => None,
        ReferenceSpec::Category { category } => unique(group(category).iter().map(|o| o.id).collect()),
        ReferenceSpec::BoxFallback { category, color } => unique(
            highlights
                .iter()
                .filter(|r| r.box_color.as_deref() == Some(color.as_str()))
                .filter(|r| objects.iter().any(|o| o.id == r.object_id && &o.category == category))
                .map(|r| r.object_id)
                .collect(),
        ),
        ReferenceSpec::LinearOrder { category, side, rank } => {
            let objs = group(category);
            let (found_side, coords) = line_coordinates(&objs, frame, config)?;
            if found_side != *side {
                return None;
            }
            unique(
                objs.iter()
                    .enumerate()
                    .filter(|(i, _)| coords.iter().filter(|&&c| c < coords[*i]).count() == *rank)
                    .map(|(_, o)| o.id)
                    .collect(),
            )
        }
        ReferenceSpec::Positional { category, key, rank, from_high, pair } => {
            let objs = group(category);
            if *pair != (objs.len() == 2) {
                return None;
            }
            let value = |o: &SceneObject| position_value(o, *key, frame);
            unique(
                objs.iter()
                    .filter(|o| {
                        let others: Vec<&&SceneObject> = objs.iter().filter(|p| p.id != o.id).collect();
                        others.iter().all(|p| position_distinct(o, p, *key, frame, guards.comparison_ratio))
                            && others
                                .iter()
                                .filter(|p| if *from_high { value(p) > value(o) } else { value(p) < value(o) })
                                .count()
                                == *rank
                    })
                    .map(|o| o.id)
                    .collect(),
            )
        }
        ReferenceSpec::SizeComparison { category, key, rank, from_high, pair } => {
            let objs = group(category);
            if *pair != (objs.len() == 2) {
                return None;
            }
            unique(
                objs.iter()
                    .filter(|o| {
                        let others: Vec<&&SceneObject> = objs.iter().filter(|p| p.id != o.id).collect();
                        others.iter().all(|p| size_distinct(o, p, *key, guards.comparison_ratio))
                            && others
                                .iter()
                                .filter(|p| {
                                    if *from_high {
                                        size_value(p, *key) > size_value(o, *key)
                                    } else {
                                        size_value(p, *key) < size_value(o, *key)
                                    }
                                })
                                .count()
                                == *rank
                    })
                    .map(|o| o.id)
                    .collect(),
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{gravity_frame, Box3D};
    use crate::references::{assign_references, parse_reference, ReferenceKind};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn obj(id: u32, cat: &str, c: [f64; 3], h: [f64; 3]) -> SceneObject {
        SceneObject {
            id,
            category: cat.into(),
            bbox: Box3D { center: c, half_extents: h, yaw_deg: 0.0 },
            facing_yaw_deg: None,
            bbox2d: None,
        }
    }

    fn v(p: [f64; 3]) -> Vec3 {
        Vec3::from(p)
    }

    #[test]
    fn collinear_is_linear_square_is_not() {
        let cfg = ReferenceConfig::default();
        let line: Vec<Vec3> = (0..4).map(|i| v([i as f64, 0.0, 3.0])).collect();
        let a = linear_arrangement(&line, &cfg).unwrap();
        assert!(a.ratio < 1e-6);
        assert_eq!(a.side, LineSide::Left);
        let square = [v([0.0, 0.0, 3.0]), v([1.0, 0.0, 3.0]), v([0.0, 0.0, 4.0]), v([1.0, 0.0, 4.0])];
        assert!(linear_arrangement(&square, &cfg).is_none());
        let two = [v([0.0, 0.0, 3.0]), v([1.0, 0.0, 3.0])];
        assert!(linear_arrangement(&two, &cfg).is_none());
    }

    #[test]
    fn measure_choice_changes_threshold() {
        // Offsets +-0.1 across a 3 m line: sd ratio ~0.09, variance ratio ~0.008.
        let pts: Vec<Vec3> = [(0.0, 0.1), (1.0, -0.1), (2.0, 0.1), (3.0, -0.1)]
            .iter()
            .map(|&(x, z)| v([x, 0.0, 3.0 + z]))
            .collect();
        let sv = linear_arrangement(&pts, &ReferenceConfig::default()).unwrap();
        let ev = linear_arrangement(
            &pts,
            &ReferenceConfig { linearity_measure: LinearityMeasure::Eigenvalues, ..Default::default() },
        )
        .unwrap();
        assert!((sv.ratio * sv.ratio - ev.ratio).abs() < 1e-12);
        // A 0.2 offset passes on variances but fails on standard deviations.
        let wide: Vec<Vec3> = [(0.0, 0.2), (1.0, -0.2), (2.0, 0.2), (3.0, -0.2)]
            .iter()
            .map(|&(x, z)| v([x, 0.0, 3.0 + z]))
            .collect();
        assert!(linear_arrangement(&wide, &ReferenceConfig::default()).is_none());
        assert!(linear_arrangement(
            &wide,
            &ReferenceConfig { linearity_measure: LinearityMeasure::Eigenvalues, ..Default::default() }
        )
        .is_some());
    }

    #[test]
    fn diagonal_line_is_ambiguous() {
        let diag: Vec<Vec3> = (0..4).map(|i| v([i as f64, 0.0, 3.0 + i as f64 * 1.05])).collect();
        assert!(linear_arrangement(&diag, &ReferenceConfig::default()).is_none());
        let steep: Vec<Vec3> = (0..4).map(|i| v([i as f64, 0.0, 3.0 + i as f64 * 0.5])).collect();
        assert_eq!(linear_arrangement(&steep, &ReferenceConfig::default()).unwrap().side, LineSide::Left);
    }

    #[test]
    fn jittered_line_keeps_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = ReferenceConfig::default();
        for _ in 0..200 {
            let n = rng.random_range(3..8);
            let len = rng.random_range(1.0..5.0);
            let jitter = 0.05 * len;
            let objs: Vec<SceneObject> = (0..n)
                .map(|i| {
                    let t = len * i as f64 / (n - 1) as f64;
                    let mut j = || rng.random_range(-jitter..jitter);
                    obj(i as u32, "chair", [t + j(), 0.5 + j(), 4.0 + j()], [0.2; 3])
                })
                .collect();
            let refs: Vec<&SceneObject> = objs.iter().collect();
            let out = linear_order_references(&refs, &GravityFrame::identity(), &cfg);
            let out = out.expect("jittered line rejected");
            {
                for r in out {
                    match r.spec {
                        ReferenceSpec::LinearOrder { rank, side, .. } => {
                            assert_eq!(side, LineSide::Left);
                            assert_eq!(rank as u32, r.object_id);
                        }
                        _ => unreachable!(),
                    }
                }
            }
        }
    }

    #[test]
    fn pair_by_depth() {
        let objs = [obj(0, "sofa", [0.0, 0.0, 2.0], [1.0, 0.4, 0.5]), obj(1, "sofa", [0.1, 0.0, 4.0], [1.0, 0.4, 0.5])];
        let refs: Vec<&SceneObject> = objs.iter().collect();
        let texts: Vec<String> = positional_references(&refs, &GravityFrame::identity(), &Guards::default())
            .into_iter()
            .map(|r| r.text)
            .collect();
        assert!(texts.contains(&"the closer sofa".to_string()));
        assert!(texts.contains(&"the farther sofa".to_string()));

        let close = [obj(0, "sofa", [0.0, 0.0, 2.0], [1.0, 0.4, 0.5]), obj(1, "sofa", [0.0, 0.0, 2.1], [1.0, 0.4, 0.5])];
        let refs: Vec<&SceneObject> = close.iter().collect();
        assert!(positional_references(&refs, &GravityFrame::identity(), &Guards::default())
            .iter()
            .all(|r| !matches!(r.spec, ReferenceSpec::Positional { key: PositionKey::CameraDistance, .. })));
    }

    #[test]
    fn size_pairs() {
        let objs = [obj(0, "lamp", [0.0, 0.0, 2.0], [0.2, 0.25, 0.2]), obj(1, "lamp", [1.0, 0.0, 2.0], [0.2, 0.6, 0.2])];
        let refs: Vec<&SceneObject> = objs.iter().collect();
        let texts: Vec<(u32, String)> = size_references(&refs, &Guards::default())
            .into_iter()
            .filter(|r| matches!(r.spec, ReferenceSpec::SizeComparison { key: SizeKey::Height, .. }))
            .map(|r| (r.object_id, r.text))
            .collect();
        assert_eq!(texts, vec![(0, "the shorter lamp".to_string()), (1, "the taller lamp".to_string())]);

        let objs = [obj(0, "lamp", [0.0, 0.0, 2.0], [0.2, 0.5, 0.2]), obj(1, "lamp", [1.0, 0.0, 2.0], [0.2, 0.525, 0.2])];
        let refs: Vec<&SceneObject> = objs.iter().collect();
        assert!(size_references(&refs, &Guards::default())
            .iter()
            .all(|r| !matches!(r.spec, ReferenceSpec::SizeComparison { key: SizeKey::Height, .. })));
    }

    #[test]
    fn middle_objects_get_ordinals() {
        let objs: Vec<SceneObject> = (0..5).map(|i| obj(i, "bowl", [i as f64 * 0.5, 0.0, 3.0], [0.1; 3])).collect();
        let refs: Vec<&SceneObject> = objs.iter().collect();
        let texts: Vec<String> = positional_references(&refs, &GravityFrame::identity(), &Guards::default())
            .into_iter()
            .filter(|r| matches!(r.spec, ReferenceSpec::Positional { key: PositionKey::Horizontal, .. }))
            .map(|r| r.text)
            .collect();
        assert_eq!(
            texts,
            [
                "the leftmost bowl",
                "the second bowl from the left",
                "the third bowl from the left",
                "the second bowl from the right",
                "the rightmost bowl"
            ]
        );
    }

    fn random_scene(rng: &mut ChaCha8Rng) -> Vec<SceneObject> {
        let cats = ["chair", "table", "lamp"];
        let n = rng.random_range(1..9);
        (0..n)
            .map(|i| {
                let cat = cats[rng.random_range(0..cats.len())];
                let c = [rng.random_range(-2.0..2.0), rng.random_range(-0.5..1.0), rng.random_range(1.0..6.0)];
                let h = [rng.random_range(0.1..0.6), rng.random_range(0.1..0.6), rng.random_range(0.1..0.6)];
                obj(i, cat, c, h)
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn every_candidate_resolves_to_its_object(seed in any::<u64>(), gx in -0.2f64..0.2) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let objects = random_scene(&mut rng);
            let g = Vec3::new(gx, 1.0, 0.1).normalize();
            let frame = gravity_frame([g.x, g.y, g.z]).unwrap();
            let (guards, cfg) = (Guards::default(), ReferenceConfig::default());
            for r in spatial_candidates(&objects, &frame, &guards, &cfg) {
                prop_assert_eq!(resolve(&r.spec, &objects, &frame, &guards, &cfg, &[]), Some(r.object_id), "{}", r.text);
                prop_assert_eq!(parse_reference(&r.text), Some(r.spec.clone()));
            }
            let assigned = assign_references(&objects, &frame, &BTreeMap::new(), &guards, &cfg);
            prop_assert_eq!(assigned.len(), objects.len());
            let highlights: Vec<ObjectReference> = assigned.values().filter(|r| r.kind == ReferenceKind::BoxFallback).cloned().collect();
            for (id, r) in &assigned {
                let spec = parse_reference(&r.text).unwrap();
                prop_assert_eq!(resolve(&spec, &objects, &frame, &guards, &cfg, &highlights), Some(*id));
            }
        }

        #[test]
        fn linearity_is_scale_invariant(seed in any::<u64>(), scale in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(3..8);
            let pts: Vec<Vec3> = (0..n)
                .map(|i| v([i as f64 + rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)]))
                .collect();
            let cfg = ReferenceConfig::default();
            let a = linear_arrangement(&pts, &cfg);
            let scaled: Vec<Vec3> = pts.iter().map(|p| p * scale).collect();
            let b = linear_arrangement(&scaled, &cfg);
            prop_assert_eq!(a.is_some(), b.is_some());
            if let (Some(a), Some(b)) = (a, b) {
                prop_assert!((a.ratio - b.ratio).abs() < 1e-9);
                prop_assert_eq!(a.side, b.side);
            }
        }
    }
}
