//! Answers recomputed from the sampled layout.
//!
//! Everything here works on world-frame centers, half extents and yaws directly: facing
//! directions are compared as vectors rather than binned yaws, surfaces are intersected
//! face by face rather than by slabs, and comparisons sort plain numbers.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::{Background, OracleObject, OracleScene};
use crate::eval::{parse_numeric, parse_triple, score_label};
use crate::geometry::Vec3;
use crate::qa::{
    CmpOp, Derivation, Dimension, DistanceComponent, Expr, ProblemCandidate, ProblemKind, QaFormat, QaItem, Query,
    SceneDigest, Truth, Viewpoint,
};
use crate::relations::{Attribute, AxisLabel, Guards};
use crate::seed::rng_for;

/// Printed answers carry centimeters, so values agree "within print rounding" when they
/// differ by at most half a centimeter.
pub const PRINT_TOLERANCE: f64 = 0.005 + 1e-9;

struct Gt<'a> {
    scene: &'a OracleScene,
    guards: &'a Guards,
}

impl Gt<'_> {
    fn obj(&self, id: u32) -> Result<&OracleObject, String> {
        self.scene.object(id).ok_or_else(|| format!("object {id} not in scene"))
    }

    fn center(&self, id: u32) -> Result<Vec3, String> {
        Ok(Vec3::from(self.obj(id)?.center))
    }

    fn facing(&self, id: u32) -> Result<Vec3, String> {
        let o = self.obj(id)?;
        if !o.facing {
            return Err(format!("object {id} has no front"));
        }
        // Objects face along their local -depth axis; yaw 0 faces the camera.
        Ok(-o.axes()[2])
    }

    fn min_component(&self) -> f64 {
        self.guards.direction_deg.to_radians().sin()
    }

    /// Label of `d` on `axis` of a right/down/forward frame, or an error in the guard band.
    fn axis_label(&self, d: Vec3, axis: usize) -> Result<AxisLabel, String> {
        let n = d.norm();
        if n == 0.0 {
            return Err("coincident centers".into());
        }
        let c = d[axis] / n;
        if c.abs() < self.min_component() {
            return Err(format!("component {c:.4} on axis {axis} inside the guard band"));
        }
        Ok(match (axis, c > 0.0) {
            (0, true) => AxisLabel::Right,
            (0, false) => AxisLabel::Left,
            (1, true) => AxisLabel::Below,
            (1, false) => AxisLabel::Above,
            (_, true) => AxisLabel::Front,
            (_, false) => AxisLabel::Behind,
        })
    }

    fn attribute(&self, id: u32, attribute: Attribute) -> Result<f64, String> {
        let o = self.obj(id)?;
        let h = o.half_extents;
        Ok(match attribute {
            Attribute::CameraDistance => Vec3::from(o.center).norm(),
            Attribute::Width => 2.0 * h[0],
            Attribute::Height => 2.0 * h[1],
            Attribute::Volume => 8.0 * h[0] * h[1] * h[2],
        })
    }

    fn sorted(&self, ids: &[u32], attribute: Attribute) -> Result<Vec<(f64, u32)>, String> {
        let mut v: Vec<(f64, u32)> = ids.iter().map(|&id| Ok((self.attribute(id, attribute)?, id))).collect::<Result<_, String>>()?;
        v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Ok(v)
    }

    fn clearly_larger(&self, lo: f64, hi: f64) -> bool {
        hi > lo && hi >= lo + lo * self.guards.comparison_ratio
    }

    /// Nearest surface point along the pixel ray, intersecting every face plane.
    fn surface_point(&self, pixel: [u32; 2]) -> Result<Vec3, String> {
        let s = self.scene;
        let r = s.pixel_ray(pixel[0] as f64, pixel[1] as f64);
        let mut best = f64::INFINITY;
        for o in &s.objects {
            let ax = o.axes();
            let c = Vec3::from(o.center);
            for k in 0..3 {
                for sign in [-1.0, 1.0] {
                    let n = ax[k];
                    let p0 = c + n * (sign * o.half_extents[k]);
                    let denom = n.dot(&r);
                    if denom.abs() < 1e-15 {
                        continue;
                    }
                    let t = n.dot(&p0) / denom;
                    if !(t > 0.0 && t < best) {
                        continue;
                    }
                    let q = r * t - c;
                    let on_face = (0..3).filter(|&j| j != k).all(|j| q.dot(&ax[j]).abs() <= o.half_extents[j] + 1e-9);
                    if on_face {
                        best = t;
                    }
                }
            }
        }
        if let Background::Planes { wall_distance } = s.background {
            // Floor: world y equals the camera height. Wall: world z equals wall_distance.
            if r.y > 0.0 {
                best = best.min(s.camera_height / r.y);
            }
            if r.z > 0.0 {
                best = best.min(wall_distance / r.z);
            }
        }
        if best.is_finite() {
            Ok(s.to_camera(&(r * best)))
        } else {
            Err(format!("pixel {pixel:?} sees nothing"))
        }
    }

    /// Offset of `target` in the frame of a viewpoint: (right, down, forward).
    fn local(&self, viewpoint: &Viewpoint, target: u32) -> Result<Vec3, String> {
        let (origin, forward) = match *viewpoint {
            Viewpoint::Object { object } => (self.center(object)?, self.facing(object)?),
            Viewpoint::Observer { at, toward } => {
                let d = self.center(toward)? - self.center(at)?;
                (self.center(at)?, Vec3::new(d.x, 0.0, d.z))
            }
        };
        let f = Vec3::new(forward.x, 0.0, forward.z);
        if f.norm() < 1e-9 {
            return Err("viewpoint has no horizontal heading".into());
        }
        let f = f.normalize();
        // Right-handed with y down: right = down x forward.
        let right = Vec3::new(f.z, 0.0, -f.x);
        let d = self.center(target)? - origin;
        Ok(Vec3::new(right.dot(&d), d.y, f.dot(&d)))
    }

    fn expr(&self, e: &Expr) -> Result<f64, String> {
        let fold = |args: &[Expr], f: fn(f64, f64) -> f64| -> Result<f64, String> {
            let mut it = args.iter();
            let first = self.expr(it.next().ok_or("empty arguments")?)?;
            it.try_fold(first, |acc, a| Ok(f(acc, self.expr(a)?)))
        };
        Ok(match e {
            Expr::Const { value } => *value,
            Expr::Size { object, dimension } => 2.0 * self.obj(*object)?.half_extents[dimension.index()],
            Expr::CameraDistance { object } => self.center(*object)?.norm(),
            Expr::Distance { a, b, component } => distance(self.center(*b)? - self.center(*a)?, *component),
            Expr::Add { args } => fold(args, |a, b| a + b)?,
            Expr::Mul { args } => fold(args, |a, b| a * b)?,
            Expr::Min { args } => fold(args, f64::min)?,
            Expr::Max { args } => fold(args, f64::max)?,
            Expr::Sub { lhs, rhs } => self.expr(lhs)? - self.expr(rhs)?,
            Expr::Div { lhs, rhs } => self.expr(lhs)? / self.expr(rhs)?,
        })
    }
}

fn distance(d: Vec3, component: DistanceComponent) -> f64 {
    match component {
        DistanceComponent::Euclidean => (d.x * d.x + d.y * d.y + d.z * d.z).sqrt(),
        DistanceComponent::Vertical => d.y.abs(),
        DistanceComponent::Horizontal => d.x.abs(),
        DistanceComponent::Depthwise => d.z.abs(),
    }
}

fn angle_deg(a: Vec3, b: Vec3) -> f64 {
    (a.dot(&b) / (a.norm() * b.norm())).clamp(-1.0, 1.0).acos().to_degrees()
}

/// The ground-truth answer to an item's query, or why the layout does not support an
/// unambiguous one.
pub fn oracle_answer(scene: &OracleScene, item: &QaItem, guards: &Guards) -> Result<Truth, String> {
    let gt = Gt { scene, guards };
    match &item.query {
        Query::PointQuery { pixel } => {
            let p = gt.surface_point(*pixel)?;
            Ok(Truth::Point { xyz: [p.x, p.y, p.z] })
        }
        Query::DepthOrder { first, second } => {
            let (a, b) = (gt.surface_point(*first)?.z, gt.surface_point(*second)?.z);
            if (a - b).abs() <= guards.depth_tie_m {
                return Err(format!("depths {a:.4} and {b:.4} tie"));
            }
            Ok(Truth::Label { label: if a < b { "A" } else { "B" }.into() })
        }
        Query::Orientation { object } => {
            let f = gt.facing(*object)?;
            let canonical = [
                ("front", Vec3::new(0.0, 0.0, -1.0)),
                ("left", Vec3::new(-1.0, 0.0, 0.0)),
                ("back", Vec3::new(0.0, 0.0, 1.0)),
                ("right", Vec3::new(1.0, 0.0, 0.0)),
            ];
            canonical
                .iter()
                .find(|(_, c)| angle_deg(f, *c) <= guards.orientation_deg + 1e-9)
                .map(|(l, _)| Truth::Label { label: l.to_string() })
                .ok_or_else(|| "facing between canonical directions".into())
        }
        Query::Size { object, dimension } => {
            Ok(Truth::Quantity { value: 2.0 * gt.obj(*object)?.half_extents[dimension.index()] })
        }
        Query::Location { object } => {
            let c = scene.to_camera(&gt.center(*object)?);
            Ok(Truth::Point { xyz: [c.x, c.y, c.z] })
        }
        Query::CameraDistance { object } => Ok(Truth::Quantity { value: gt.center(*object)?.norm() }),
        Query::DirectionLabel { a, b, axis } => {
            let l = gt.axis_label(gt.center(*b)? - gt.center(*a)?, *axis)?;
            Ok(Truth::Label { label: l.as_str().into() })
        }
        Query::DirectionVector { a, b } => {
            let d = scene.to_camera(&(gt.center(*b)? - gt.center(*a)?));
            let d = d / d.norm();
            Ok(Truth::Vector { xyz: [d.x, d.y, d.z] })
        }
        Query::Distance { a, b, component } => {
            Ok(Truth::Quantity { value: distance(gt.center(*b)? - gt.center(*a)?, *component) })
        }
        Query::Extreme { objects, attribute, max } => {
            let v = gt.sorted(objects, *attribute)?;
            let n = v.len();
            if n < 2 {
                return Err("fewer than two objects".into());
            }
            let (winner, ok) = if *max {
                (v[n - 1].1, gt.clearly_larger(v[n - 2].0, v[n - 1].0))
            } else {
                (v[0].1, gt.clearly_larger(v[0].0, v[1].0))
            };
            if !ok {
                return Err("extreme not separated from the runner-up".into());
            }
            Ok(Truth::Objects { ids: vec![winner] })
        }
        Query::Order { objects, attribute } => {
            let v = gt.sorted(objects, *attribute)?;
            if !v.windows(2).all(|w| gt.clearly_larger(w[0].0, w[1].0)) {
                return Err("neighbors in the order are too close".into());
            }
            Ok(Truth::Objects { ids: v.iter().map(|x| x.1).collect() })
        }
        Query::Consistency { a, b } => {
            let angle = angle_deg(gt.facing(*a)?, gt.facing(*b)?);
            let tol = guards.consistency_deg + 1e-9;
            let label = if angle <= tol {
                "similar"
            } else if (angle - 90.0).abs() <= tol {
                "orthogonal"
            } else if angle >= 180.0 - tol {
                "opposite"
            } else {
                return Err(format!("facings {angle:.2} degrees apart"));
            };
            Ok(Truth::Label { label: label.into() })
        }
        Query::PerspectiveLabel { viewpoint, target, axis } => {
            let l = gt.axis_label(gt.local(viewpoint, *target)?, *axis)?;
            Ok(Truth::Label { label: l.as_str().into() })
        }
        Query::PerspectiveDistance { viewpoint, target, label } => {
            let local = gt.local(viewpoint, *target)?;
            if gt.axis_label(local, label.axis())? != *label {
                return Err(format!("target is not {}", label.as_str()));
            }
            Ok(Truth::Quantity { value: local[label.axis()].abs() })
        }
        Query::Count { anchor, category, relation } => {
            let a = gt.center(*anchor)?;
            let mut n = 0;
            for o in scene.objects.iter().filter(|o| &o.category == category && o.id != *anchor) {
                if gt.axis_label(Vec3::from(o.center) - a, relation.axis())? == *relation {
                    n += 1;
                }
            }
            Ok(Truth::Count { n })
        }
        Query::Problem { derivation } => match derivation {
            Derivation::Numeric { expr } => Ok(Truth::Quantity { value: gt.expr(expr)? }),
            Derivation::Compare { lhs, op, rhs } => {
                let (l, r) = (gt.expr(lhs)?, gt.expr(rhs)?);
                let (lo, hi) = (l.min(r), l.max(r));
                if !(lo > 0.0 && hi >= lo * 1.1) {
                    return Err(format!("comparison {l:.4} vs {r:.4} too close"));
                }
                Ok(Truth::Judgement { holds: matches!(op, CmpOp::Lt) == (l < r) })
            }
        },
    }
}

/// Outcome of checking one item against the oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemCheck {
    pub item_id: String,
    pub oracle: Result<Truth, String>,
    /// `None` when the item agrees with the oracle.
    pub mismatch: Option<String>,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= PRINT_TOLERANCE
}

fn close3(a: [f64; 3], b: [f64; 3]) -> bool {
    (0..3).all(|k| close(a[k], b[k]))
}

fn truth_matches(stored: &Truth, oracle: &Truth) -> bool {
    match (stored, oracle) {
        (Truth::Quantity { value: a }, Truth::Quantity { value: b }) => close(*a, *b),
        (Truth::Point { xyz: a }, Truth::Point { xyz: b }) => close3(*a, *b),
        (Truth::Vector { xyz: a }, Truth::Vector { xyz: b }) => {
            angle_deg(Vec3::from(*a), Vec3::from(*b)).to_radians() < 1e-4
        }
        _ => stored == oracle,
    }
}

fn reference_of(item: &QaItem, id: u32) -> Option<&str> {
    let k = item.object_ids.iter().position(|&o| o == id)?;
    item.references.get(k).map(String::as_str)
}

/// Whether an answer text states the oracle truth.
fn text_states(item: &QaItem, text: &str, oracle: &Truth) -> bool {
    match oracle {
        Truth::Quantity { value } => parse_numeric(text).is_some_and(|v| close(v, *value)),
        Truth::Point { xyz } | Truth::Vector { xyz } => parse_triple(text).is_some_and(|p| close3(p, *xyz)),
        Truth::Count { n } => text.trim() == n.to_string(),
        Truth::Judgement { holds } => text == if *holds { "Yes" } else { "No" },
        Truth::Label { label } if item.family == crate::qa::TaskFamily::DepthOrdering => text == format!("point {label}"),
        Truth::Label { label } => score_label(text, label).correct,
        Truth::Objects { ids } => {
            let names: Option<Vec<&str>> = ids.iter().map(|&id| reference_of(item, id)).collect();
            names.is_some_and(|n| text == n.join(", "))
        }
    }
}

fn claim_holds(claim: &Truth, oracle: &Truth) -> bool {
    match (claim, oracle) {
        (Truth::Quantity { value: a }, Truth::Quantity { value: b }) => close(*a, *b),
        _ => claim == oracle,
    }
}

/// Checks an item against the oracle: the stored truth must equal the oracle's answer and
/// the presented answer (text, option, or true/false verdict) must state it.
pub fn check_item(scene: &OracleScene, item: &QaItem, guards: &Guards) -> ItemCheck {
    let oracle = oracle_answer(scene, item, guards);
    let mismatch = match &oracle {
        Err(e) => Some(format!("oracle finds no unambiguous answer: {e}")),
        Ok(o) if !truth_matches(&item.truth, o) => Some(format!("stored {:?} vs oracle {o:?}", item.truth)),
        Ok(o) => match item.format {
            QaFormat::FreeForm => (!text_states(item, &item.answer, o)).then(|| format!("answer {:?} vs oracle {o:?}", item.answer)),
            QaFormat::Mcq => {
                let correct = item.correct_option.and_then(|k| item.options.get(k));
                let stating: Vec<usize> =
                    (0..item.options.len()).filter(|&k| text_states(item, &item.options[k], o)).collect();
                match correct {
                    Some(_) if stating == [item.correct_option.unwrap()] => None,
                    _ => Some(format!("options {:?} with answer {:?} vs oracle {o:?}", item.options, item.correct_option)),
                }
            }
            QaFormat::TrueFalse => {
                let expected = item.claim.as_ref().map(|c| claim_holds(c, o));
                (expected != item.tf_answer()).then(|| format!("claim {:?} judged {:?}, oracle {o:?}", item.claim, item.answer))
            }
        },
    };
    ItemCheck { item_id: item.id.clone(), oracle, mismatch }
}

/// Stands in for the external question writer on oracle scenes: reads only the digest
/// and returns problem candidates in the writer's response format. One candidate per
/// call has a deliberately wrong answer, which validation must reject.
pub fn oracle_problem_candidates(digest: &SceneDigest, seed: u64) -> Vec<ProblemCandidate> {
    let mut rng = rng_for(seed, &format!("{}:problems", digest.image_id));
    let objs = &digest.objects;
    if objs.len() < 2 {
        return vec![];
    }
    let pair: Vec<_> = objs.choose_multiple(&mut rng, 2).collect();
    let (a, b) = (pair[0], pair[1]);
    let size = |o: &crate::qa::DigestObject, d: Dimension| Expr::Size { object: o.id, dimension: d };
    let norm = |c: [f64; 3]| (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    let mut out = Vec::new();

    let stack = a.size[1] + b.size[1];
    out.push(ProblemCandidate {
        question: format!("If {} were placed on top of {}, how tall would the stack be?", a.reference, b.reference),
        answer: format!("About {:.2} m.", stack * rng.random_range(0.9..1.1)),
        kind: ProblemKind::Numeric,
        derivation: Some(Derivation::Numeric {
            expr: Expr::Add { args: vec![size(a, Dimension::Height), size(b, Dimension::Height)] },
        }),
    });

    let fits = a.size[0] < b.size[1];
    out.push(ProblemCandidate {
        question: format!(
            "Would {} fit through an opening as wide as {} is tall?",
            a.reference, b.reference
        ),
        answer: if fits { "Yes" } else { "No" }.into(),
        kind: ProblemKind::Judgement,
        derivation: Some(Derivation::Compare { lhs: size(a, Dimension::Width), op: CmpOp::Lt, rhs: size(b, Dimension::Height) }),
    });

    let (near, far) = if norm(a.center) < norm(b.center) { (a, b) } else { (b, a) };
    let gap = norm(far.center) - norm(near.center);
    out.push(ProblemCandidate {
        question: format!(
            "Walking from the camera, how much farther would you go to reach {} than to reach {}?",
            far.reference, near.reference
        ),
        answer: format!("{:.2} meters", gap),
        kind: ProblemKind::Numeric,
        derivation: Some(Derivation::Numeric {
            expr: Expr::Sub {
                lhs: Box::new(Expr::CameraDistance { object: far.id }),
                rhs: Box::new(Expr::CameraDistance { object: near.id }),
            },
        }),
    });

    out.push(ProblemCandidate {
        question: format!("What is the combined width of {} and {}?", a.reference, b.reference),
        answer: format!("{:.2} meters", 3.0 * (a.size[0] + b.size[0])),
        kind: ProblemKind::Numeric,
        derivation: Some(Derivation::Numeric {
            expr: Expr::Add { args: vec![size(a, Dimension::Width), size(b, Dimension::Width)] },
        }),
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraIntrinsics;
    use crate::qa::{TaskFamily, SCHEMA_VERSION};

    fn obj(id: u32, center: [f64; 3], half: [f64; 3], yaw: f64, facing: bool) -> OracleObject {
        OracleObject { id, category: "box".into(), center, half_extents: half, yaw_deg: yaw, facing, caption: None }
    }

    fn scene(objects: Vec<OracleObject>) -> OracleScene {
        OracleScene {
            image_id: "t".into(),
            seed: 0,
            width: 64,
            height: 48,
            intrinsics: CameraIntrinsics { fx: 50.0, fy: 50.0, cx: 32.0, cy: 24.0 },
            camera_height: 1.5,
            pitch_deg: 0.0,
            roll_deg: 0.0,
            background: Background::Invalid,
            noise_sigma: 0.0,
            objects,
        }
    }

    fn item(query: Query) -> QaItem {
        QaItem {
            schema: SCHEMA_VERSION,
            id: "i".into(),
            image_id: "t".into(),
            level: 1,
            family: TaskFamily::RelativeDirection,
            format: QaFormat::FreeForm,
            prompt: String::new(),
            options: vec![],
            correct_option: None,
            answer: String::new(),
            query,
            truth: Truth::Count { n: 0 },
            claim: None,
            object_ids: vec![],
            highlights: vec![],
            references: vec![],
        }
    }

    #[test]
    fn depth_order_of_two_boxes() {
        let s = scene(vec![obj(0, [-1.0, 0.0, 2.0], [0.2; 3], 0.0, false), obj(1, [1.0, 0.0, 4.0], [0.2; 3], 0.0, false)]);
        let g = Guards::default();
        // Pixel centers of the two front faces.
        let p0 = [(32.0 - 50.0 * 1.0 / 1.8) as u32, 24];
        let p1 = [(32.0f64 + 50.0 / 3.8).round() as u32, 24];
        let t = oracle_answer(&s, &item(Query::DepthOrder { first: p0, second: p1 }), &g).unwrap();
        assert_eq!(t, Truth::Label { label: "A".into() });
        let Truth::Point { xyz } = oracle_answer(&s, &item(Query::PointQuery { pixel: p0 }), &g).unwrap() else { panic!() };
        assert!((xyz[2] - 1.8).abs() < 1e-12);
    }

    #[test]
    fn stacked_boxes_are_above() {
        let s = scene(vec![obj(0, [0.0, 0.5, 4.0], [0.5; 3], 0.0, false), obj(1, [0.0, -0.5, 4.0], [0.3; 3], 0.0, false)]);
        let t = oracle_answer(&s, &item(Query::DirectionLabel { a: 0, b: 1, axis: 1 }), &Guards::default()).unwrap();
        assert_eq!(t, Truth::Label { label: "above".into() });
        assert!(oracle_answer(&s, &item(Query::DirectionLabel { a: 0, b: 1, axis: 0 }), &Guards::default()).is_err());
    }

    #[test]
    fn facing_and_perspective() {
        let s = scene(vec![
            obj(0, [0.0, 0.0, 4.0], [0.3; 3], 0.0, true),
            obj(1, [-2.0, 0.0, 4.0], [0.3; 3], 90.0, true),
            obj(2, [2.0, 0.0, 4.0], [0.3; 3], 100.0, true),
        ]);
        let g = Guards::default();
        assert_eq!(oracle_answer(&s, &item(Query::Orientation { object: 0 }), &g).unwrap(), Truth::Label { label: "front".into() });
        assert_eq!(oracle_answer(&s, &item(Query::Orientation { object: 1 }), &g).unwrap(), Truth::Label { label: "left".into() });
        assert_eq!(
            oracle_answer(&s, &item(Query::Consistency { a: 1, b: 2 }), &g).unwrap(),
            Truth::Label { label: "similar".into() }
        );
        // Object 0 faces the camera, so image-right (object 2) is on its left.
        let q = Query::PerspectiveLabel { viewpoint: Viewpoint::Object { object: 0 }, target: 2, axis: 0 };
        assert_eq!(oracle_answer(&s, &item(q), &g).unwrap(), Truth::Label { label: "left".into() });
    }
}
