use serde::{Deserialize, Serialize};

use super::{Guards, RelationError};
use crate::geometry::{facing_world, heading_world, GravityFrame, Vec3};
use crate::scene::SceneObject;

/// Qualitative direction along one axis of the labeling frame.
///
/// The labeling frame is the gravity-aligned frame seen from the viewer: +x right,
/// +y down, +z forward (away from the viewer).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxisLabel {
    Left,
    Right,
    Above,
    Below,
    Front,
    Behind,
}

impl AxisLabel {
    pub const ALL: [AxisLabel; 6] = [
        AxisLabel::Left,
        AxisLabel::Right,
        AxisLabel::Above,
        AxisLabel::Below,
        AxisLabel::Front,
        AxisLabel::Behind,
    ];

    pub fn axis(self) -> usize {
        match self {
            AxisLabel::Left | AxisLabel::Right => 0,
            AxisLabel::Above | AxisLabel::Below => 1,
            AxisLabel::Front | AxisLabel::Behind => 2,
        }
    }

    pub fn antonym(self) -> AxisLabel {
        match self {
            AxisLabel::Left => AxisLabel::Right,
            AxisLabel::Right => AxisLabel::Left,
            AxisLabel::Above => AxisLabel::Below,
            AxisLabel::Below => AxisLabel::Above,
            AxisLabel::Front => AxisLabel::Behind,
            AxisLabel::Behind => AxisLabel::Front,
        }
    }

    /// Label for the sign of a component on `axis`.
    pub fn from_sign(axis: usize, positive: bool) -> AxisLabel {
        match (axis, positive) {
            (0, true) => AxisLabel::Right,
            (0, false) => AxisLabel::Left,
            (1, true) => AxisLabel::Below,
            (1, false) => AxisLabel::Above,
            (_, true) => AxisLabel::Front,
            (_, false) => AxisLabel::Behind,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AxisLabel::Left => "left",
            AxisLabel::Right => "right",
            AxisLabel::Above => "above",
            AxisLabel::Below => "below",
            AxisLabel::Front => "front",
            AxisLabel::Behind => "behind",
        }
    }

    pub fn parse(s: &str) -> Option<AxisLabel> {
        AxisLabel::ALL.into_iter().find(|l| l.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionResult {
    /// Unit vector from A to B in the camera frame.
    pub vector: [f64; 3],
    /// The same direction in the labeling frame.
    pub frame_vector: [f64; 3],
    /// Per-axis label (x, y, z); `None` when inside the guard band.
    pub labels: [Option<AxisLabel>; 3],
    /// Per-axis angle (degrees) beyond the guard boundary; negative when suppressed.
    pub margins_deg: [f64; 3],
}

impl DirectionResult {
    pub fn emitted(&self) -> impl Iterator<Item = AxisLabel> + '_ {
        self.labels.iter().flatten().copied()
    }

    fn build(camera: Vec3, frame: Vec3, guards: &Guards) -> Self {
        let c = camera.normalize();
        let f = frame.normalize();
        let min = guards.direction_min_component();
        let mut labels = [None; 3];
        let mut margins_deg = [0.0; 3];
        for k in 0..3 {
            let comp = f[k];
            margins_deg[k] = comp.abs().min(1.0).asin().to_degrees() - guards.direction_deg;
            if comp.abs() >= min && comp != 0.0 {
                labels[k] = Some(AxisLabel::from_sign(k, comp > 0.0));
            }
        }
        DirectionResult {
            vector: [c.x, c.y, c.z],
            frame_vector: [f.x, f.y, f.z],
            labels,
            margins_deg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceResult {
    pub euclidean: f64,
    /// Along gravity.
    pub vertical: f64,
    /// Left-right gap (world x).
    pub horizontal: f64,
    /// Forward gap (world z).
    pub depthwise: f64,
    /// Norm of the horizontal-plane offset.
    pub horizontal_planar: f64,
}

impl DistanceResult {
    fn from_delta(d: Vec3) -> Self {
        DistanceResult {
            euclidean: d.norm(),
            vertical: d.y.abs(),
            horizontal: d.x.abs(),
            depthwise: d.z.abs(),
            horizontal_planar: d.x.hypot(d.z),
        }
    }
}

/// Center and distance from the camera.
pub fn object_position(obj: &SceneObject) -> ([f64; 3], f64) {
    (obj.bbox.center, obj.camera_distance())
}

pub fn relative_direction(
    a: &SceneObject,
    b: &SceneObject,
    frame: &GravityFrame,
    guards: &Guards,
) -> Result<DirectionResult, RelationError> {
    let d = b.center() - a.center();
    if d.norm() == 0.0 {
        return Err(RelationError::Coincident);
    }
    Ok(DirectionResult::build(d, frame.to_world(&d), guards))
}

pub fn relative_distance(a: &SceneObject, b: &SceneObject, frame: &GravityFrame) -> DistanceResult {
    DistanceResult::from_delta(frame.to_world(&(b.center() - a.center())))
}

/// Viewpoint for perspective taking.
#[derive(Debug, Clone, Copy)]
pub enum Anchor<'a> {
    /// Stand at the object, facing where it faces.
    Object(&'a SceneObject),
    /// Stand at `position` (camera frame) looking along `heading_deg` (0 = camera forward,
    /// positive turns right).
    Observer { position: [f64; 3], heading_deg: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerspectiveResult {
    /// Target offset in the anchor frame (right, down, forward).
    pub local: [f64; 3],
    pub direction: DirectionResult,
    pub distance: DistanceResult,
}

/// Expresses `target` in a frame standing at the anchor: forward is the anchor's horizontal
/// facing, down is gravity, right completes the frame.
pub fn perspective_transform(
    anchor: Anchor<'_>,
    target: &SceneObject,
    frame: &GravityFrame,
    guards: &Guards,
) -> Result<PerspectiveResult, RelationError> {
    let (origin, facing) = match anchor {
        Anchor::Object(obj) => {
            let yaw = obj
                .facing_yaw_deg
                .ok_or_else(|| RelationError::NotApplicable(format!("object {} has no facing", obj.id)))?;
            (obj.center(), facing_world(yaw))
        }
        Anchor::Observer { position, heading_deg } => (Vec3::from(position), heading_world(heading_deg)),
    };
    let down = Vec3::y();
    let forward = facing - down * facing.dot(&down);
    if !(forward.norm() > 1e-9) {
        return Err(RelationError::Degenerate);
    }
    let forward = forward.normalize();
    let right = down.cross(&forward);
    let d = target.center() - origin;
    if d.norm() == 0.0 {
        return Err(RelationError::Coincident);
    }
    let w = frame.to_world(&d);
    let local = Vec3::new(right.dot(&w), down.dot(&w), forward.dot(&w));
    Ok(PerspectiveResult {
        local: [local.x, local.y, local.z],
        direction: DirectionResult::build(d, local, guards),
        distance: DistanceResult::from_delta(local),
    })
}

/// Number of `category` objects (other than the anchor) whose direction from the anchor
/// carries `relation`. `None` when any candidate's label on that axis is suppressed.
pub fn spatial_count(
    objects: &[SceneObject],
    category: &str,
    anchor: &SceneObject,
    relation: AxisLabel,
    frame: &GravityFrame,
    guards: &Guards,
) -> Option<usize> {
    let mut count = 0;
    for obj in objects.iter().filter(|o| o.category == category && o.id != anchor.id) {
        let dir = relative_direction(anchor, obj, frame, guards).ok()?;
        match dir.labels[relation.axis()] {
            None => return None,
            Some(l) if l == relation => count += 1,
            Some(_) => {}
        }
    }
    Some(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{gravity_frame, Box3D};
    use proptest::prelude::*;

    fn obj(id: u32, cat: &str, c: [f64; 3], yaw: Option<f64>) -> SceneObject {
        SceneObject {
            id,
            category: cat.into(),
            bbox: Box3D { center: c, half_extents: [0.2, 0.3, 0.2], yaw_deg: yaw.unwrap_or(0.0) },
            facing_yaw_deg: yaw,
            bbox2d: None,
        }
    }

    #[test]
    fn positions() {
        assert_eq!(object_position(&obj(0, "a", [0.0, 0.0, 4.0], None)).1, 4.0);
        assert_eq!(object_position(&obj(0, "a", [3.0, 0.0, 4.0], None)).1, 5.0);
    }

    #[test]
    fn directly_right() {
        let g = Guards::default();
        let f = GravityFrame::identity();
        let r = relative_direction(&obj(0, "a", [0.0, 0.0, 3.0], None), &obj(1, "b", [1.0, 0.0, 3.0], None), &f, &g).unwrap();
        assert_eq!(r.vector, [1.0, 0.0, 0.0]);
        assert_eq!(r.labels, [Some(AxisLabel::Right), None, None]);
    }

    #[test]
    fn small_lateral_offset_is_suppressed() {
        let g = Guards::default();
        let f = GravityFrame::identity();
        let r = relative_direction(&obj(0, "a", [0.0, 0.0, 2.0], None), &obj(1, "b", [0.01, 0.0, 3.0], None), &f, &g).unwrap();
        assert_eq!(r.labels, [None, None, Some(AxisLabel::Front)]);
        assert!(r.margins_deg[0] < 0.0 && r.margins_deg[2] > 0.0);
        let same = relative_direction(&obj(0, "a", [0.0; 3], None), &obj(1, "b", [0.0; 3], None), &f, &g);
        assert_eq!(same, Err(RelationError::Coincident));
    }

    #[test]
    fn distance_components() {
        let f = GravityFrame::identity();
        let a = obj(0, "a", [0.0, 0.0, 3.0], None);
        let d = relative_distance(&a, &obj(1, "b", [0.0, 2.0, 3.0], None), &f);
        assert_eq!((d.vertical, d.horizontal, d.depthwise, d.euclidean), (2.0, 0.0, 0.0, 2.0));
        let d = relative_distance(&a, &obj(1, "b", [1.0, 2.0, 5.0], None), &f);
        assert_eq!(d.euclidean, 3.0);
    }

    #[test]
    fn perspective_in_front_and_flipped() {
        let f = GravityFrame::identity();
        let g = Guards::default();
        // Yaw 180 faces away from the camera (+z).
        let anchor = obj(0, "chair", [0.0, 0.0, 3.0], Some(180.0));
        let ahead = obj(1, "lamp", [0.0, 0.0, 5.0], None);
        let r = perspective_transform(Anchor::Object(&anchor), &ahead, &f, &g).unwrap();
        assert_eq!(r.direction.labels[2], Some(AxisLabel::Front));
        let side = obj(2, "lamp", [1.0, 0.0, 3.0], None);
        let r0 = perspective_transform(Anchor::Object(&anchor), &side, &f, &g).unwrap();
        let turned = obj(0, "chair", [0.0, 0.0, 3.0], Some(0.0));
        let r1 = perspective_transform(Anchor::Object(&turned), &side, &f, &g).unwrap();
        assert_eq!(r0.direction.labels[0], Some(AxisLabel::Right));
        assert_eq!(r1.direction.labels[0], Some(AxisLabel::Left));
        let none = obj(3, "x", [0.0, 0.0, 3.0], None);
        assert!(perspective_transform(Anchor::Object(&none), &side, &f, &g).is_err());
    }

    #[test]
    fn counting() {
        let f = GravityFrame::identity();
        let g = Guards::default();
        let table = obj(0, "table", [0.0, 0.0, 4.0], None);
        let mut objs = vec![table.clone()];
        for (k, x) in [-1.0, -1.5, -2.0, 1.2].into_iter().enumerate() {
            objs.push(obj(k as u32 + 1, "chair", [x, 0.0, 4.2], None));
        }
        assert_eq!(spatial_count(&objs, "chair", &table, AxisLabel::Left, &f, &g), Some(3));
        assert_eq!(spatial_count(&objs, "sofa", &table, AxisLabel::Left, &f, &g), Some(0));
        objs.push(obj(9, "chair", [0.1, 0.0, 6.0], None));
        assert_eq!(spatial_count(&objs, "chair", &table, AxisLabel::Left, &f, &g), None);
    }

    fn arb_obj(id: u32) -> impl Strategy<Value = SceneObject> {
        (-3.0f64..3.0, -1.0f64..1.0, 1.0f64..8.0, 0.0f64..360.0)
            .prop_map(move |(x, y, z, yaw)| obj(id, "o", [x, y, z], Some(yaw)))
    }

    fn tilted() -> impl Strategy<Value = GravityFrame> {
        (-15.0f64..15.0, -10.0f64..10.0).prop_map(|(p, r)| {
            let (p, r) = (p.to_radians(), r.to_radians());
            gravity_frame([r.sin(), r.cos() * p.cos(), r.cos() * p.sin()]).unwrap()
        })
    }

    fn rotate_about_gravity(o: &SceneObject, frame: &GravityFrame, deg: f64) -> SceneObject {
        let w = frame.to_world(&o.center());
        let v = frame.to_camera(&(crate::geometry::yaw_rotation(deg) * w));
        let mut out = o.clone();
        out.bbox.center = [v.x, v.y, v.z];
        out.facing_yaw_deg = o.facing_yaw_deg.map(|y| y + deg);
        out
    }

    proptest! {
        #[test]
        fn direction_is_antisymmetric(a in arb_obj(0), b in arb_obj(1), f in tilted()) {
            let g = Guards::default();
            let ab = relative_direction(&a, &b, &f, &g).unwrap();
            let ba = relative_direction(&b, &a, &f, &g).unwrap();
            for k in 0..3 {
                prop_assert_eq!(ab.vector[k], -ba.vector[k]);
                prop_assert_eq!(ab.labels[k].map(AxisLabel::antonym), ba.labels[k]);
            }
        }

        #[test]
        fn distance_decomposes(a in arb_obj(0), b in arb_obj(1), f in tilted()) {
            let d = relative_distance(&a, &b, &f);
            let sum = d.vertical.powi(2) + d.horizontal.powi(2) + d.depthwise.powi(2);
            prop_assert!((sum - d.euclidean.powi(2)).abs() < 1e-6);
            prop_assert!((d.horizontal_planar.powi(2) + d.vertical.powi(2) - d.euclidean.powi(2)).abs() < 1e-6);
        }

        #[test]
        fn rigid_rotation_about_gravity(a in arb_obj(0), b in arb_obj(1), f in tilted(), phi in 0.0f64..360.0) {
            let g = Guards::default();
            let (ra, rb) = (rotate_about_gravity(&a, &f, phi), rotate_about_gravity(&b, &f, phi));
            let d0 = relative_distance(&a, &b, &f);
            let d1 = relative_distance(&ra, &rb, &f);
            prop_assert!((d0.euclidean - d1.euclidean).abs() < 1e-9);
            prop_assert!((d0.vertical - d1.vertical).abs() < 1e-9);
            prop_assert!((d0.horizontal_planar - d1.horizontal_planar).abs() < 1e-9);
            let p0 = perspective_transform(Anchor::Object(&a), &b, &f, &g).unwrap();
            let p1 = perspective_transform(Anchor::Object(&ra), &rb, &f, &g).unwrap();
            for k in 0..3 {
                prop_assert!((p0.local[k] - p1.local[k]).abs() < 1e-9);
                if p0.direction.margins_deg[k].abs() > 1e-6 {
                    prop_assert_eq!(p0.direction.labels[k], p1.direction.labels[k]);
                }
            }
        }

        #[test]
        fn camera_anchor_reproduces_relative(a in arb_obj(0), b in arb_obj(1), f in tilted()) {
            let g = Guards::default();
            let rel = relative_direction(&a, &b, &f, &g).unwrap();
            let dist = relative_distance(&a, &b, &f);
            let p = perspective_transform(Anchor::Observer { position: a.bbox.center, heading_deg: 0.0 }, &b, &f, &g).unwrap();
            prop_assert_eq!(p.direction.labels, rel.labels);
            for k in 0..3 {
                prop_assert!((p.direction.frame_vector[k] - rel.frame_vector[k]).abs() < 1e-12);
                prop_assert!((p.direction.vector[k] - rel.vector[k]).abs() < 1e-12);
            }
            prop_assert!((p.distance.euclidean - dist.euclidean).abs() < 1e-12);
            prop_assert!((p.distance.horizontal - dist.horizontal).abs() < 1e-12);
            prop_assert!((p.distance.vertical - dist.vertical).abs() < 1e-12);
            prop_assert!((p.distance.depthwise - dist.depthwise).abs() < 1e-12);
        }
    }
}
