//! Per-image item generation.
//!
//! Each draw picks a task family by weight among the families the image can still
//! support, then tries to build one item of that family from randomly chosen pixels or
//! objects. Relations suppressed by a guard band are simply retried; a family that fails
//! `attempts_per_family` times in a row is dropped for the image.

use std::collections::{BTreeMap, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::mcq::{count_options, make_mcq, McqOptions, QUANTITY_DISTRACTORS};
use super::problem::{validate_problem_candidate, ProblemCandidate, SceneDigest};
use super::templates::{capitalize, Templates};
use super::{
    format_point, format_quantity, format_vector, Dimension, DistanceComponent, Highlight, QaConfig, QaFormat, QaItem,
    Query, SamplingConfig, TaskFamily, Truth, Viewpoint, SCHEMA_VERSION,
};
use crate::formats::PointMap;
use crate::geometry::{heading_world, Vec3};
use crate::references::{ObjectReference, ReferenceKind};
use crate::relations::{
    depth_order, orientation_consistency, orientation_label, perspective_transform, query_point,
    relational_comparison, relative_direction, relative_distance, spatial_count, Anchor, Attribute, AxisLabel,
    ComparisonMode, ComparisonOutcome, Consistency, DepthOrder, Facing, Guards,
};
use crate::scene::{Scene, SceneObject};
use crate::seed::rng_for;

/// Weighted choice of task family restricted to the families still available.
#[derive(Debug, Clone)]
pub struct FamilySampler {
    weights: [f64; 11],
}

impl FamilySampler {
    pub fn new(config: &SamplingConfig) -> Self {
        FamilySampler { weights: config.weights }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R, available: &[bool; 11]) -> Option<TaskFamily> {
        let total: f64 = (0..11).filter(|&k| available[k]).map(|k| self.weights[k]).sum();
        if !(total > 0.0) {
            return None;
        }
        let mut u = rng.random::<f64>() * total;
        let mut last = None;
        for k in (0..11).filter(|&k| available[k] && self.weights[k] > 0.0) {
            if u < self.weights[k] {
                return Some(TaskFamily::ALL[k]);
            }
            u -= self.weights[k];
            last = Some(TaskFamily::ALL[k]);
        }
        last
    }
}

/// Everything synthesis needs about one image.
#[derive(Debug, Clone, Copy)]
pub struct SynthInput<'a> {
    pub scene: &'a Scene,
    pub refs: &'a BTreeMap<u32, ObjectReference>,
    pub pointmap: Option<&'a PointMap>,
    /// Problem-solving candidates returned by the question writer, with the digest they
    /// were written against.
    pub problems: Option<(&'a SceneDigest, &'a [ProblemCandidate])>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynthOutput {
    pub items: Vec<QaItem>,
    /// Problem candidates that failed validation, with the reason.
    pub rejected: Vec<(String, String)>,
}

/// A true/false statement about a fact.
struct Statement {
    key: &'static str,
    vars: Vec<(&'static str, String)>,
    claim: Truth,
}

/// One answerable question before it is put into a format.
struct Fact {
    family: TaskFamily,
    query: Query,
    truth: Truth,
    question_key: &'static str,
    question_vars: Vec<(&'static str, String)>,
    answer: String,
    object_ids: Vec<u32>,
    /// Options when the answer is one of the named objects.
    object_options: Option<McqOptions>,
    true_statement: Option<Statement>,
    false_statement: Option<Statement>,
    /// Free-form only, regardless of what the answer type would allow.
    free_form_only: bool,
}

impl Fact {
    fn new(family: TaskFamily, query: Query, truth: Truth, question_key: &'static str, answer: String) -> Self {
        Fact {
            family,
            query,
            truth,
            question_key,
            question_vars: Vec::new(),
            answer,
            object_ids: Vec::new(),
            object_options: None,
            true_statement: None,
            false_statement: None,
            free_form_only: false,
        }
    }
}

struct Ctx<'a> {
    scene: &'a Scene,
    refs: &'a BTreeMap<u32, ObjectReference>,
    pm: Option<&'a PointMap>,
    guards: Guards,
    min_q: f64,
    templates: &'a Templates,
}

impl Ctx<'_> {
    fn name(&self, id: u32) -> String {
        self.refs.get(&id).map(|r| r.text.clone()).unwrap_or_else(|| {
            let cat = self.scene.object(id).map_or("object", |o| o.category.as_str());
            format!("the {cat}")
        })
    }
}

fn list_phrase(names: &[String]) -> String {
    match names.len() {
        0 => String::new(),
        1 => names[0].clone(),
        2 => format!("{} and {}", names[0], names[1]),
        n => format!("{}, and {}", names[..n - 1].join(", "), names[n - 1]),
    }
}

/// English plural of a category name (regular forms only).
pub(crate) fn plural(category: &str) -> String {
    let (head, last) = match category.rsplit_once(' ') {
        Some((h, l)) => (format!("{h} "), l),
        None => (String::new(), category),
    };
    let vowel_before_y = last.len() >= 2 && "aeiou".contains(&last[last.len() - 2..last.len() - 1]);
    let p = if last.ends_with('y') && !vowel_before_y {
        format!("{}ies", &last[..last.len() - 1])
    } else if ["s", "x", "z", "ch", "sh"].iter().any(|s| last.ends_with(s)) {
        format!("{last}es")
    } else {
        format!("{last}s")
    };
    format!("{head}{p}")
}

fn pixel_phrase(p: [u32; 2]) -> String {
    format!("({}, {})", p[0], p[1])
}

fn relation_phrase(label: AxisLabel) -> &'static str {
    match label {
        AxisLabel::Left => "to the left of",
        AxisLabel::Right => "to the right of",
        AxisLabel::Above => "above",
        AxisLabel::Below => "below",
        AxisLabel::Front => "farther from the camera than",
        AxisLabel::Behind => "closer to the camera than",
    }
}

/// Free-form answer for a camera-view direction label.
fn label_answer(label: AxisLabel) -> &'static str {
    match label {
        AxisLabel::Front => "farther",
        AxisLabel::Behind => "closer",
        other => other.as_str(),
    }
}

fn axis_choices(axis: usize) -> &'static str {
    match axis {
        0 => "to the left of or to the right of",
        1 => "above or below",
        _ => "farther from or closer to the camera than",
    }
}

fn egocentric_phrase(label: AxisLabel) -> &'static str {
    match label {
        AxisLabel::Left => "to your left",
        AxisLabel::Right => "to your right",
        AxisLabel::Above => "above you",
        AxisLabel::Below => "below you",
        AxisLabel::Front => "in front of you",
        AxisLabel::Behind => "behind you",
    }
}

fn egocentric_choices(axis: usize) -> &'static str {
    match axis {
        0 => "to your left or to your right",
        1 => "above you or below you",
        _ => "in front of you or behind you",
    }
}

fn facing_phrase(f: Facing) -> &'static str {
    match f {
        Facing::Front => "front, toward the camera",
        Facing::Back => "back, away from the camera",
        Facing::Left => "left",
        Facing::Right => "right",
    }
}

fn superlative(attribute: Attribute, max: bool) -> &'static str {
    match (attribute, max) {
        (Attribute::CameraDistance, false) => "the closest to the camera",
        (Attribute::CameraDistance, true) => "the farthest from the camera",
        (Attribute::Width, false) => "the narrowest",
        (Attribute::Width, true) => "the widest",
        (Attribute::Height, false) => "the shortest",
        (Attribute::Height, true) => "the tallest",
        (Attribute::Volume, false) => "the smallest",
        (Attribute::Volume, true) => "the largest",
    }
}

fn order_ends(attribute: Attribute) -> (&'static str, &'static str) {
    match attribute {
        Attribute::CameraDistance => ("closest to the camera", "farthest from the camera"),
        Attribute::Width => ("narrowest", "widest"),
        Attribute::Height => ("shortest", "tallest"),
        Attribute::Volume => ("smallest", "largest"),
    }
}

fn quantity_statements<R: Rng>(
    key: &'static str,
    vars: Vec<(&'static str, String)>,
    value: f64,
    rng: &mut R,
) -> (Option<Statement>, Option<Statement>) {
    let with = |v: f64| {
        let mut vs = vars.clone();
        vs.push(("value", format_quantity(v)));
        Statement { key, vars: vs, claim: Truth::Quantity { value: v } }
    };
    let wrong = value * QUANTITY_DISTRACTORS.choose(rng).unwrap();
    (Some(with(value)), Some(with(wrong)))
}

fn random_valid_pixel<R: Rng>(pm: &PointMap, rng: &mut R) -> Option<[u32; 2]> {
    for _ in 0..32 {
        let u = rng.random_range(0..pm.width());
        let v = rng.random_range(0..pm.height());
        if pm.is_valid(u, v) {
            return Some([u, v]);
        }
    }
    None
}

fn gen_point_query<R: Rng>(ctx: &Ctx, rng: &mut R) -> Option<Fact> {
    let pm = ctx.pm?;
    let p = random_valid_pixel(pm, rng)?;
    let xyz = query_point(pm, p[0], p[1]).ok()?;
    let mut f = Fact::new(
        TaskFamily::PointQuerying,
        Query::PointQuery { pixel: p },
        Truth::Point { xyz },
        "point_query.question",
        format_point(xyz),
    );
    f.question_vars.push(("pixel", pixel_phrase(p)));
    f.free_form_only = true;
    Some(f)
}

fn gen_depth_order<R: Rng>(ctx: &Ctx, rng: &mut R) -> Option<Fact> {
    let pm = ctx.pm?;
    let (p1, p2) = (random_valid_pixel(pm, rng)?, random_valid_pixel(pm, rng)?);
    let order = depth_order(pm, (p1[0], p1[1]), (p2[0], p2[1]), ctx.guards.depth_tie_m).ok()?;
    let near = match order {
        DepthOrder::First => "A",
        DepthOrder::Second => "B",
        DepthOrder::Tie => return None,
    };
    let name_a = format!("point A at pixel {}", pixel_phrase(p1));
    let name_b = format!("point B at pixel {}", pixel_phrase(p2));
    let mut f = Fact::new(
        TaskFamily::DepthOrdering,
        Query::DepthOrder { first: p1, second: p2 },
        Truth::Label { label: near.into() },
        "depth_order.question",
        format!("point {near}"),
    );
    f.question_vars = vec![("p1", name_a.clone()), ("p2", name_b.clone())];
    let stmt = |n: &str| {
        let (near_name, far_name) = if n == "A" { (name_a.clone(), name_b.clone()) } else { (name_b.clone(), name_a.clone()) };
        Statement {
            key: "depth_order.statement",
            vars: vec![("near", near_name), ("far", far_name)],
            claim: Truth::Label { label: n.into() },
        }
    };
    f.true_statement = Some(stmt(near));
    f.false_statement = Some(stmt(if near == "A" { "B" } else { "A" }));
    Some(f)
}

fn gen_orientation<R: Rng>(ctx: &Ctx, rng: &mut R) -> Option<Fact> {
    let candidates: Vec<&SceneObject> = ctx.scene.objects.iter().filter(|o| o.facing_yaw_deg.is_some()).collect();
    let obj = *candidates.choose(rng)?;
    let facing = orientation_label(obj, &ctx.guards).ok()??;
    let a = ctx.name(obj.id);
    let mut f = Fact::new(
        TaskFamily::Orientation,
        Query::Orientation { object: obj.id },
        Truth::Label { label: facing.as_str().into() },
        "orientation.question",
        facing.as_str().into(),
    );
    f.question_vars.push(("a", a.clone()));
    f.object_ids.push(obj.id);
    let stmt = |fc: Facing| Statement {
        key: "orientation.statement",
        vars: vec![("a", a.clone()), ("label", facing_phrase(fc).into())],
        claim: Truth::Label { label: fc.as_str().into() },
    };
    let wrong = *Facing::ALL.iter().filter(|x| **x != facing).collect::<Vec<_>>().choose(rng).unwrap();
    f.true_statement = Some(stmt(facing));
    f.false_statement = Some(stmt(*wrong));
    Some(f)
}

fn gen_size<R: Rng>(ctx: &Ctx, rng: &mut R) -> Option<Fact> {
    let obj = ctx.scene.objects.choose(rng)?;
    let dim = *Dimension::ALL.choose(rng).unwrap();
    let value = obj.size()[dim.index()];
    if value < ctx.min_q {
        return None;
    }
    let a = ctx.name(obj.id);
    let mut f = Fact::new(
        TaskFamily::Size,
        Query::Size { object: obj.id, dimension: dim },
        Truth::Quantity { value },
        "size.question",
        format_quantity(value),
    );
    f.question_vars = vec![("a", a.clone()), ("dim", dim.as_str().into())];
    f.object_ids.push(obj.id);
    (f.true_statement, f.false_statement) =
        quantity_statements("size.statement", vec![("a", a), ("dim", dim.as_str().into())], value, rng);
    Some(f)
}

fn gen_localization<R: Rng>(ctx: &Ctx, rng: &mut R) -> Option<Fact> {
    let obj = ctx.scene.objects.choose(rng)?;
    let a = ctx.name(obj.id);
    if rng.random_bool(0.5) {
        let xyz = obj.bbox.center;
        let mut f =
            Fact::new(TaskFamily::Localization, Query::Location { object: obj.id }, Truth::Point { xyz }, "location.question", format_point(xyz));
        f.question_vars.push(("a", a));
        f.object_ids.push(obj.id);
        f.free_form_only = true;
        return Some(f);
    }
    let value = obj.camera_distance();
    if value < ctx.min_q {
        return None;
    }
    let mut f = Fact::new(
        TaskFamily::Localization,
        Query::CameraDistance { object: obj.id },
        Truth::Quantity { value },
        "camera_distance.question",
        format_quantity(value),
    );
    f.question_vars.push(("a", a.clone()));
    f.object_ids.push(obj.id);
    (f.true_statement, f.false_statement) = quantity_statements("camera_distance.statement", vec![("a", a)], value, rng);
    Some(f)
}

fn pick_pair<'a, R: Rng>(ctx: &'a Ctx, rng: &mut R) -> Option<(&'a SceneObject, &'a SceneObject)> {
    let objs = &ctx.scene.objects;
    if objs.len() < 2 {
        return None;
    }
    let picked: Vec<&SceneObject> = objs.choose_multiple(rng, 2).collect();
    Some((picked[0], picked[1]))
}

fn gen_relative_direction<R: Rng>(ctx: &Ctx, rng: &mut R) -> Option<Fact> {
    let (a, b) = pick_pair(ctx, rng)?;
    let dir = relative_direction(a, b, &ctx.scene.frame, &ctx.guards).ok()?;
    let (na, nb) = (ctx.name(a.id), ctx.name(b.id));
    if rng.random_bool(0.25) {
        let mut f = Fact::new(
            TaskFamily::RelativeDirection,
            Query::DirectionVector { a: a.id, b: b.id },
            Truth::Vector { xyz: dir.vector },
            "direction_vector.question",
            format_vector(dir.vector),
        );
        f.question_vars = vec![("a", na), ("b", nb)];
        f.object_ids = vec![a.id, b.id];
        f.free_form_only = true;
        return Some(f);
    }
    let emitted: Vec<AxisLabel> = dir.emitted().collect();
    let label = *emitted.choose(rng)?;
    let axis = label.axis();
    let mut f = Fact::new(
        TaskFamily::RelativeDirection,
        Query::DirectionLabel { a: a.id, b: b.id, axis },
        Truth::Label { label: label.as_str().into() },
        "direction_label.question",
        label_answer(label).into(),
    );
    f.question_vars = vec![("a", na.clone()), ("b", nb.clone()), ("choices", axis_choices(axis).into())];
    f.object_ids = vec![a.id, b.id];
    let stmt = |l: AxisLabel| Statement {
        key: "direction_label.statement",
        vars: vec![("a", na.clone()), ("b", nb.clone()), ("relation", relation_phrase(l).into())],
        claim: Truth::Label { label: l.as_str().into() },
    };
    f.true_statement = Some(stmt(label));
    f.false_statement = Some(stmt(label.antonym()));
    Some(f)
}

fn gen_relative_distance<R: Rng>(ctx: &Ctx, rng: &mut R) -> Option<Fact> {
    let (a, b) = pick_pair(ctx, rng)?;
    let d = relative_distance(a, b, &ctx.scene.frame);
    let component = *DistanceComponent::ALL.choose(rng).unwrap();
    let value = match component {
        DistanceComponent::Euclidean => d.euclidean,
        DistanceComponent::Vertical => d.vertical,
        DistanceComponent::Horizontal => d.horizontal,
        DistanceComponent::Depthwise => d.depthwise,
    };
    if value < ctx.min_q {
        return None;
    }
    let (na, nb) = (ctx.name(a.id), ctx.name(b.id));
    let mut f = Fact::new(
        TaskFamily::RelativeDistance,
        Query::Distance { a: a.id, b: b.id, component },
        Truth::Quantity { value },
        "distance.question",
        format_quantity(value),
    );
    let vars = vec![("a", na), ("b", nb), ("component", component.phrase().to_string())];
    f.question_vars = vars.clone();
    f.object_ids = vec![a.id, b.id];
    (f.true_statement, f.false_statement) = quantity_statements("distance.statement", vars, value, rng);
    Some(f)
}

fn gen_comparison<R: Rng>(ctx: &Ctx, rng: &mut R) -> Option<Fact> {
    let objs = &ctx.scene.objects;
    if objs.len() < 2 {
        return None;
    }
    let roll: f64 = rng.random();
    if roll < 0.2 {
        let (a, b) = pick_pair(ctx, rng)?;
        let label = orientation_consistency(a, b, &ctx.guards).ok()??;
        let (na, nb) = (ctx.name(a.id), ctx.name(b.id));
        let mut f = Fact::new(
            TaskFamily::RelationalComparison,
            Query::Consistency { a: a.id, b: b.id },
            Truth::Label { label: label.as_str().into() },
            "consistency.question",
            label.as_str().into(),
        );
        f.question_vars = vec![("a", na.clone()), ("b", nb.clone())];
        f.object_ids = vec![a.id, b.id];
        let stmt = |c: Consistency| Statement {
            key: "consistency.statement",
            vars: vec![("a", na.clone()), ("b", nb.clone()), ("label", c.as_str().into())],
            claim: Truth::Label { label: c.as_str().into() },
        };
        let wrong = *Consistency::ALL.iter().filter(|c| **c != label).collect::<Vec<_>>().choose(rng).unwrap();
        f.true_statement = Some(stmt(label));
        f.false_statement = Some(stmt(*wrong));
        return Some(f);
    }
    let k = rng.random_range(2..=objs.len().min(4));
    let picked: Vec<&SceneObject> = objs.choose_multiple(rng, k).collect();
    let attribute = *Attribute::ALL.choose(rng).unwrap();
    let ids: Vec<u32> = picked.iter().map(|o| o.id).collect();
    let names: Vec<String> = ids.iter().map(|&id| ctx.name(id)).collect();
    let list = list_phrase(&names);
    if roll < 0.4 {
        let ComparisonOutcome::Order(order) =
            relational_comparison(&picked, attribute, ComparisonMode::FullOrder, &ctx.guards).ok()?
        else {
            return None;
        };
        let answer = order.iter().map(|&id| ctx.name(id)).collect::<Vec<_>>().join(", ");
        let (low, high) = order_ends(attribute);
        let mut f = Fact::new(
            TaskFamily::RelationalComparison,
            Query::Order { objects: ids.clone(), attribute },
            Truth::Objects { ids: order },
            "order.question",
            answer,
        );
        f.question_vars = vec![("list", list), ("low", low.into()), ("high", high.into())];
        f.object_ids = ids;
        f.free_form_only = true;
        return Some(f);
    }
    let max = rng.random_bool(0.5);
    let mode = if max { ComparisonMode::ExtremeMax } else { ComparisonMode::ExtremeMin };
    let ComparisonOutcome::Selected(winner) = relational_comparison(&picked, attribute, mode, &ctx.guards).ok()? else {
        return None;
    };
    let sup = superlative(attribute, max);
    let mut f = Fact::new(
        TaskFamily::RelationalComparison,
        Query::Extreme { objects: ids.clone(), attribute, max },
        Truth::Objects { ids: vec![winner] },
        "extreme.question",
        ctx.name(winner),
    );
    f.question_vars = vec![("list", list.clone()), ("superlative", sup.into())];
    if k == 4 {
        let mut order: Vec<usize> = (0..4).collect();
        order.shuffle(rng);
        let correct = order.iter().position(|&i| ids[i] == winner).unwrap();
        f.object_options = Some(McqOptions {
            options: order.iter().map(|&i| names[i].clone()).collect(),
            payloads: order.iter().map(|&i| Truth::Objects { ids: vec![ids[i]] }).collect(),
            correct,
        });
    }
    let stmt = |x: u32| Statement {
        key: "extreme.statement",
        vars: vec![("list", list.clone()), ("superlative", sup.into()), ("x", ctx.name(x))],
        claim: Truth::Objects { ids: vec![x] },
    };
    let loser = *ids.iter().filter(|&&i| i != winner).collect::<Vec<_>>().choose(rng).unwrap();
    f.true_statement = Some(stmt(winner));
    f.false_statement = Some(stmt(*loser));
    f.object_ids = ids;
    Some(f)
}

/// Heading (degrees, 0 = camera forward, positive to the right) of the horizontal
/// direction from `from` to `to`; `None` if they are nearly stacked.
fn observer_heading(ctx: &Ctx, from: &SceneObject, to: &SceneObject) -> Option<f64> {
    let w = ctx.scene.frame.to_world(&(to.center() - from.center()));
    if w.x.hypot(w.z) < 0.1 {
        return None;
    }
    let h = w.x.atan2(w.z).to_degrees();
    debug_assert!((heading_world(h) - Vec3::new(w.x, 0.0, w.z).normalize()).norm() < 1e-9);
    Some(h)
}

fn gen_perspective<R: Rng>(ctx: &Ctx, rng: &mut R) -> Option<Fact> {
    let objs = &ctx.scene.objects;
    if objs.len() < 2 {
        return None;
    }
    let use_object = rng.random_bool(0.5);
    let (viewpoint, anchor, target, vp_text) = if use_object {
        let with_yaw: Vec<&SceneObject> = objs.iter().filter(|o| o.facing_yaw_deg.is_some()).collect();
        let a = *with_yaw.choose(rng)?;
        let b = *objs.iter().filter(|o| o.id != a.id).collect::<Vec<_>>().choose(rng)?;
        let text = ctx.templates.render("viewpoint.object", &[("a", &ctx.name(a.id))], rng);
        (Viewpoint::Object { object: a.id }, Anchor::Object(a), b, text)
    } else {
        if objs.len() < 3 {
            return None;
        }
        let picked: Vec<&SceneObject> = objs.choose_multiple(rng, 3).collect();
        let (a, c, b) = (picked[0], picked[1], picked[2]);
        let heading = observer_heading(ctx, a, c)?;
        let text = ctx.templates.render("viewpoint.observer", &[("a", &ctx.name(a.id)), ("c", &ctx.name(c.id))], rng);
        (
            Viewpoint::Observer { at: a.id, toward: c.id },
            Anchor::Observer { position: a.bbox.center, heading_deg: heading },
            b,
            text,
        )
    };
    let res = perspective_transform(anchor, target, &ctx.scene.frame, &ctx.guards).ok()?;
    let horizontal: Vec<AxisLabel> = res.direction.emitted().filter(|l| l.axis() != 1).collect();
    let label = *horizontal.choose(rng)?;
    let nb = ctx.name(target.id);
    let mut ids = match viewpoint {
        Viewpoint::Object { object } => vec![object],
        Viewpoint::Observer { at, toward } => vec![at, toward],
    };
    ids.push(target.id);
    if rng.random_bool(0.3) {
        let value = res.local[label.axis()].abs();
        if value < ctx.min_q {
            return None;
        }
        let mut f = Fact::new(
            TaskFamily::PerspectiveTaking,
            Query::PerspectiveDistance { viewpoint, target: target.id, label },
            Truth::Quantity { value },
            "perspective_distance.question",
            format_quantity(value),
        );
        let vars = vec![("viewpoint", vp_text), ("b", nb), ("relation", egocentric_phrase(label).to_string())];
        f.question_vars = vars.clone();
        f.object_ids = ids;
        (f.true_statement, f.false_statement) = quantity_statements("perspective_distance.statement", vars, value, rng);
        return Some(f);
    }
    let axis = label.axis();
    let mut f = Fact::new(
        TaskFamily::PerspectiveTaking,
        Query::PerspectiveLabel { viewpoint, target: target.id, axis },
        Truth::Label { label: label.as_str().into() },
        "perspective_label.question",
        label.as_str().into(),
    );
    f.question_vars = vec![("viewpoint", vp_text.clone()), ("b", nb.clone()), ("choices", egocentric_choices(axis).into())];
    f.object_ids = ids;
    let stmt = |l: AxisLabel| Statement {
        key: "perspective_label.statement",
        vars: vec![("viewpoint", vp_text.clone()), ("b", nb.clone()), ("relation", egocentric_phrase(l).into())],
        claim: Truth::Label { label: l.as_str().into() },
    };
    f.true_statement = Some(stmt(label));
    f.false_statement = Some(stmt(label.antonym()));
    Some(f)
}

fn gen_counting<R: Rng>(ctx: &Ctx, rng: &mut R) -> Option<Fact> {
    let objs = &ctx.scene.objects;
    if objs.len() < 2 {
        return None;
    }
    let anchor = objs.choose(rng)?;
    let mut cats: Vec<&str> = objs.iter().filter(|o| o.id != anchor.id).map(|o| o.category.as_str()).collect();
    cats.sort();
    cats.dedup();
    let category = *cats.choose(rng)?;
    let relation = *AxisLabel::ALL.choose(rng).unwrap();
    let n = spatial_count(objs, category, anchor, relation, &ctx.scene.frame, &ctx.guards)?;
    let a = ctx.name(anchor.id);
    let cats_text = plural(category);
    let mut f = Fact::new(
        TaskFamily::SpatialCounting,
        Query::Count { anchor: anchor.id, category: category.into(), relation },
        Truth::Count { n },
        "count.question",
        n.to_string(),
    );
    let vars = vec![("cats", cats_text), ("relation", relation_phrase(relation).to_string()), ("a", a)];
    f.question_vars = vars.clone();
    f.object_ids = vec![anchor.id];
    let stmt = |k: usize| {
        let mut v = vars.clone();
        v.push(("n", k.to_string()));
        Statement { key: "count.statement", vars: v, claim: Truth::Count { n: k } }
    };
    let wrong = count_options(n, rng).payloads.into_iter().find_map(|p| match p {
        Truth::Count { n: k } if k != n => Some(k),
        _ => None,
    })?;
    f.true_statement = Some(stmt(n));
    f.false_statement = Some(stmt(wrong));
    Some(f)
}

fn generate_fact<R: Rng>(family: TaskFamily, ctx: &Ctx, rng: &mut R) -> Option<Fact> {
    match family {
        TaskFamily::PointQuerying => gen_point_query(ctx, rng),
        TaskFamily::DepthOrdering => gen_depth_order(ctx, rng),
        TaskFamily::Orientation => gen_orientation(ctx, rng),
        TaskFamily::Size => gen_size(ctx, rng),
        TaskFamily::Localization => gen_localization(ctx, rng),
        TaskFamily::RelativeDirection => gen_relative_direction(ctx, rng),
        TaskFamily::RelativeDistance => gen_relative_distance(ctx, rng),
        TaskFamily::RelationalComparison => gen_comparison(ctx, rng),
        TaskFamily::PerspectiveTaking => gen_perspective(ctx, rng),
        TaskFamily::SpatialCounting => gen_counting(ctx, rng),
        TaskFamily::ProblemSolving => None,
    }
}

fn vars_ref<'a>(vars: &'a [(&'static str, String)]) -> Vec<(&'static str, &'a str)> {
    vars.iter().map(|(k, v)| (*k, v.as_str())).collect()
}

fn option_block(options: &[String]) -> String {
    let mut s = String::from("\nOptions:");
    for (k, o) in options.iter().enumerate() {
        s.push_str(&format!("\n{}. {}", (b'A' + k as u8) as char, o));
    }
    s.push_str("\nAnswer with the option letter.");
    s
}

/// Renders a fact in one of its applicable formats. `polarity` is the family's next
/// true/false answer; it is flipped when a true/false item is produced.
fn render_fact<R: Rng>(fact: Fact, ctx: &Ctx, polarity: &mut bool, rng: &mut R) -> (Query, Truth, QaFormat, String, Vec<String>, Option<usize>, String, Option<Truth>, Vec<u32>) {
    let mcq = if fact.free_form_only {
        None
    } else {
        fact.object_options.clone().or_else(|| make_mcq(&fact.truth, fact.family, rng))
    };
    let tf_ok = !fact.free_form_only
        && if *polarity { fact.true_statement.is_some() } else { fact.false_statement.is_some() };
    let mut formats = vec![QaFormat::FreeForm];
    if mcq.is_some() {
        formats.push(QaFormat::Mcq);
    }
    if tf_ok {
        formats.push(QaFormat::TrueFalse);
    }
    let format = *formats.choose(rng).unwrap();
    let mut question = || ctx.templates.render(fact.question_key, &vars_ref(&fact.question_vars), rng);
    match format {
        QaFormat::FreeForm => {
            let q = question();
            (fact.query, fact.truth, format, q, vec![], None, fact.answer, None, fact.object_ids)
        }
        QaFormat::Mcq => {
            let m = mcq.unwrap();
            let prompt = format!("{}{}", question(), option_block(&m.options));
            let answer = ((b'A' + m.correct as u8) as char).to_string();
            (fact.query, fact.truth, format, prompt, m.options, Some(m.correct), answer, None, fact.object_ids)
        }
        QaFormat::TrueFalse => {
            let holds = *polarity;
            *polarity = !*polarity;
            let st = if holds { fact.true_statement.unwrap() } else { fact.false_statement.unwrap() };
            let text = ctx.templates.render(st.key, &vars_ref(&st.vars), rng);
            let prompt = format!("True or false: {text}");
            let answer = if holds { "True" } else { "False" };
            (fact.query, fact.truth, format, prompt, vec![], None, answer.into(), Some(st.claim), fact.object_ids)
        }
    }
}

fn highlights(ctx: &Ctx, ids: &[u32]) -> Vec<Highlight> {
    let mut out: Vec<Highlight> = Vec::new();
    for &id in ids {
        if let Some(r) = ctx.refs.get(&id) {
            if r.kind == ReferenceKind::BoxFallback && !out.iter().any(|h| h.object_id == id) {
                out.push(Highlight {
                    object_id: id,
                    color: r.box_color.clone().unwrap_or_default(),
                    bbox: r.pixel_box.unwrap_or([0.0; 4]),
                });
            }
        }
    }
    out
}

/// Items for one image, deterministic in (`seed`, image id, inputs, config, templates).
pub fn synthesize_scene_qa(input: &SynthInput, config: &QaConfig, templates: &Templates, seed: u64) -> SynthOutput {
    let scene = input.scene;
    let mut rng: ChaCha8Rng = rng_for(seed, &scene.image_id);
    let ctx = Ctx { scene, refs: input.refs, pm: input.pointmap, guards: config.guards, min_q: config.min_quantity_m, templates };
    let mut out = SynthOutput::default();

    let mut problems: Vec<(ProblemCandidate, Query, Truth, String)> = Vec::new();
    if let Some((digest, candidates)) = input.problems {
        for c in candidates {
            match validate_problem_candidate(c, digest, config.min_quantity_m) {
                Ok((q, t, a)) => problems.push((c.clone(), q, t, a)),
                Err(reason) => out.rejected.push((c.question.clone(), reason)),
            }
        }
    }
    problems.reverse();

    let n_obj = scene.objects.len();
    let mut available = [false; 11];
    for f in TaskFamily::ALL {
        available[f.index()] = match f {
            TaskFamily::PointQuerying | TaskFamily::DepthOrdering => input.pointmap.is_some_and(|pm| pm.valid_count() > 0),
            TaskFamily::Orientation => scene.objects.iter().any(|o| o.facing_yaw_deg.is_some()),
            TaskFamily::Size | TaskFamily::Localization => n_obj >= 1,
            TaskFamily::RelativeDirection
            | TaskFamily::RelativeDistance
            | TaskFamily::RelationalComparison
            | TaskFamily::PerspectiveTaking
            | TaskFamily::SpatialCounting => n_obj >= 2,
            TaskFamily::ProblemSolving => !problems.is_empty(),
        };
    }
    let sampler = FamilySampler::new(&config.sampling);
    let mut polarity: [bool; 11] = std::array::from_fn(|_| rng.random_bool(0.5));
    let mut seen = HashSet::new();

    while out.items.len() < config.items_per_image {
        let Some(family) = sampler.sample(&mut rng, &available) else { break };
        let id = format!("{}-{:03}", scene.image_id, out.items.len());
        if family == TaskFamily::ProblemSolving {
            let Some((c, query, truth, answer)) = problems.pop() else {
                available[family.index()] = false;
                continue;
            };
            available[family.index()] = !problems.is_empty();
            let ids = query_object_ids(&query);
            out.items.push(QaItem {
                schema: SCHEMA_VERSION,
                id,
                image_id: scene.image_id.clone(),
                level: family.level(),
                family,
                format: QaFormat::FreeForm,
                prompt: capitalize(&c.question),
                options: vec![],
                correct_option: None,
                answer,
                query,
                truth,
                claim: None,
                references: ids.iter().map(|&i| ctx.name(i)).collect(),
                highlights: highlights(&ctx, &ids),
                object_ids: ids,
            });
            continue;
        }
        let mut produced = false;
        for _ in 0..config.attempts_per_family.max(1) {
            let Some(fact) = generate_fact(family, &ctx, &mut rng) else { continue };
            let mut pol = polarity[family.index()];
            let (query, truth, format, prompt, options, correct_option, answer, claim, object_ids) =
                render_fact(fact, &ctx, &mut pol, &mut rng);
            if !seen.insert(prompt.clone()) {
                continue;
            }
            polarity[family.index()] = pol;
            out.items.push(QaItem {
                schema: SCHEMA_VERSION,
                id: id.clone(),
                image_id: scene.image_id.clone(),
                level: family.level(),
                family,
                format,
                prompt,
                options,
                correct_option,
                answer,
                query,
                truth,
                claim,
                references: object_ids.iter().map(|&i| ctx.name(i)).collect(),
                highlights: highlights(&ctx, &object_ids),
                object_ids,
            });
            produced = true;
            break;
        }
        if !produced {
            available[family.index()] = false;
        }
    }
    out
}

/// Object ids mentioned by a problem derivation, in first-use order.
fn query_object_ids(query: &Query) -> Vec<u32> {
    use super::problem::{Derivation, Expr};
    fn walk(e: &Expr, out: &mut Vec<u32>) {
        let mut push = |id: u32| {
            if !out.contains(&id) {
                out.push(id)
            }
        };
        match e {
            Expr::Const { .. } => {}
            Expr::Size { object, .. } | Expr::CameraDistance { object } => push(*object),
            Expr::Distance { a, b, .. } => {
                push(*a);
                push(*b);
            }
            Expr::Add { args } | Expr::Mul { args } | Expr::Min { args } | Expr::Max { args } => {
                args.iter().for_each(|a| walk(a, out))
            }
            Expr::Sub { lhs, rhs } | Expr::Div { lhs, rhs } => {
                walk(lhs, out);
                walk(rhs, out);
            }
        }
    }
    let mut out = Vec::new();
    if let Query::Problem { derivation } = query {
        match derivation {
            Derivation::Numeric { expr } => walk(expr, &mut out),
            Derivation::Compare { lhs, rhs, .. } => {
                walk(lhs, &mut out);
                walk(rhs, &mut out);
            }
        }
    }
    out
}

/// Level-0 items only, for an image without object annotations.
pub fn level0_items(
    image_id: &str,
    pm: &PointMap,
    config: &QaConfig,
    templates: &Templates,
    seed: u64,
) -> Vec<QaItem> {
    let scene = Scene { image_id: image_id.into(), frame: crate::geometry::GravityFrame::identity(), objects: vec![] };
    let refs = BTreeMap::new();
    let input = SynthInput { scene: &scene, refs: &refs, pointmap: Some(pm), problems: None };
    synthesize_scene_qa(&input, config, templates, seed).items
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{gravity_frame, Box3D, GravityFrame};
    use crate::references::{assign_references, ReferenceConfig};
    use rand::SeedableRng;

    fn obj(id: u32, cat: &str, c: [f64; 3], h: [f64; 3], yaw: Option<f64>) -> SceneObject {
        SceneObject {
            id,
            category: cat.into(),
            bbox: Box3D { center: c, half_extents: h, yaw_deg: yaw.unwrap_or(0.0) },
            facing_yaw_deg: yaw,
            bbox2d: Some([0.0, 0.0, 5.0, 5.0]),
        }
    }

    fn scene() -> Scene {
        Scene {
            image_id: "room".into(),
            frame: gravity_frame([0.0, 0.94, 0.34].map(|x: f64| x / (0.94f64 * 0.94 + 0.34 * 0.34).sqrt())).unwrap(),
            objects: vec![
                obj(0, "chair", [-1.0, 0.6, 3.0], [0.25, 0.45, 0.25], Some(0.0)),
                obj(1, "chair", [0.8, 0.6, 3.2], [0.25, 0.45, 0.25], Some(90.0)),
                obj(2, "table", [0.0, 0.5, 4.5], [0.7, 0.4, 0.5], Some(180.0)),
                obj(3, "lamp", [1.5, -0.2, 5.0], [0.15, 0.8, 0.15], None),
                obj(4, "sofa", [-1.8, 0.4, 6.0], [1.0, 0.45, 0.45], Some(0.0)),
            ],
        }
    }

    fn plane_pm() -> PointMap {
        let (w, h) = (16u32, 12u32);
        let mut pts = Vec::new();
        for v in 0..h {
            for u in 0..w {
                let z = 2.0 + 0.25 * u as f32;
                pts.push([(u as f32 - 8.0) * z / 10.0, (v as f32 - 6.0) * z / 10.0, z]);
            }
        }
        PointMap::new(w, h, pts, vec![true; (w * h) as usize]).unwrap().map
    }

    fn run(seed: u64, config: &QaConfig) -> SynthOutput {
        let s = scene();
        let refs = assign_references(&s.objects, &s.frame, &BTreeMap::new(), &config.guards, &ReferenceConfig::default());
        let pm = plane_pm();
        let input = SynthInput { scene: &s, refs: &refs, pointmap: Some(&pm), problems: None };
        synthesize_scene_qa(&input, config, &Templates::builtin(), seed)
    }

    #[test]
    fn deterministic_and_valid() {
        let cfg = QaConfig { items_per_image: 60, ..Default::default() };
        let a = run(0, &cfg);
        let b = run(0, &cfg);
        assert_eq!(serde_json::to_string(&a.items).unwrap(), serde_json::to_string(&b.items).unwrap());
        assert_eq!(a.items.len(), 60);
        for item in &a.items {
            item.check_invariants().unwrap();
        }
        let c = run(1, &cfg);
        assert_ne!(a.items, c.items);
    }

    #[test]
    fn single_object_only_gets_levels_0_and_1() {
        let mut s = scene();
        s.objects.truncate(1);
        let cfg = QaConfig { items_per_image: 40, ..Default::default() };
        let refs = assign_references(&s.objects, &s.frame, &BTreeMap::new(), &cfg.guards, &ReferenceConfig::default());
        let pm = plane_pm();
        let input = SynthInput { scene: &s, refs: &refs, pointmap: Some(&pm), problems: None };
        let out = synthesize_scene_qa(&input, &cfg, &Templates::builtin(), 5);
        assert!(!out.items.is_empty());
        assert!(out.items.iter().all(|i| i.level <= 1));
    }

    #[test]
    fn empty_scene_without_pointmap_is_empty() {
        let s = Scene { image_id: "x".into(), frame: GravityFrame::identity(), objects: vec![] };
        let refs = BTreeMap::new();
        let input = SynthInput { scene: &s, refs: &refs, pointmap: None, problems: None };
        assert!(synthesize_scene_qa(&input, &QaConfig::default(), &Templates::builtin(), 0).items.is_empty());
    }

    #[test]
    fn level0_only() {
        let items = level0_items("p", &plane_pm(), &QaConfig { items_per_image: 10, ..Default::default() }, &Templates::builtin(), 3);
        assert_eq!(items.len(), 10);
        assert!(items.iter().all(|i| i.level == 0));
    }

    #[test]
    fn plurals() {
        assert_eq!(plural("chair"), "chairs");
        assert_eq!(plural("bookshelf"), "bookshelfs");
        assert_eq!(plural("box"), "boxes");
        assert_eq!(plural("bench"), "benches");
        assert_eq!(plural("potted plant"), "potted plants");
        assert_eq!(plural("toy"), "toys");
        assert_eq!(plural("laundry"), "laundries");
    }

    #[test]
    fn sampler_respects_availability() {
        let s = FamilySampler::new(&SamplingConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut avail = [false; 11];
        assert_eq!(s.sample(&mut rng, &avail), None);
        avail[TaskFamily::Size.index()] = true;
        for _ in 0..100 {
            assert_eq!(s.sample(&mut rng, &avail), Some(TaskFamily::Size));
        }
    }

    #[test]
    fn sampler_frequencies() {
        let cfg = SamplingConfig::default();
        let s = FamilySampler::new(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = [0usize; 11];
        let n = 200_000;
        for _ in 0..n {
            counts[s.sample(&mut rng, &[true; 11]).unwrap().index()] += 1;
        }
        for k in 0..11 {
            assert!((counts[k] as f64 / n as f64 - cfg.weights[k]).abs() < 0.005, "{k}");
        }
    }

    #[test]
    fn true_false_is_balanced() {
        let cfg = QaConfig { items_per_image: 60, ..Default::default() };
        let mut per_family: BTreeMap<TaskFamily, (usize, usize)> = BTreeMap::new();
        for seed in 0..40 {
            for item in run(seed, &cfg).items {
                if let Some(b) = item.tf_answer() {
                    let e = per_family.entry(item.family).or_default();
                    e.0 += b as usize;
                    e.1 += 1;
                }
            }
        }
        for (f, (t, n)) in per_family {
            // Alternation within an image keeps each family within one of an even split.
            assert!((t as f64 / n as f64 - 0.5).abs() < 0.1, "{f:?}: {t}/{n}");
        }
    }
}
