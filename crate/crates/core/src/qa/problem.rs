//! Level-3 problem solving: scene digests for an external question writer and validation
//! of the questions it returns.
//!
//! The writer returns each question with a machine-checkable [`Derivation`]. A candidate
//! is accepted only if recomputing its derivation from the digest agrees with the stated
//! answer; the stored answer is the recomputed value.

use serde::{Deserialize, Serialize};

use super::{format_quantity, Dimension, DistanceComponent, Query, Truth};
use crate::eval::parse_numeric;
use crate::geometry::{gravity_frame, GravityFrame, Vec3};
use crate::references::ObjectReference;
use crate::relations::separated;
use crate::scene::Scene;

pub const PROMPT_SCHEMA: &str = "spatialvqa.problem-prompt/1";

/// Accepted ratio between a candidate's numeric answer and the recomputed value.
const ANSWER_BAND: (f64, f64) = (0.75, 1.25);
/// Judgement comparisons must clear this relative margin to be unambiguous.
const JUDGEMENT_MARGIN: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigestObject {
    pub id: u32,
    pub category: String,
    pub reference: String,
    /// Camera frame, meters.
    pub center: [f64; 3],
    /// Width, height, length in meters.
    pub size: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yaw_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDigest {
    pub image_id: String,
    /// Unit gravity direction in the camera frame.
    pub gravity: [f64; 3],
    pub objects: Vec<DigestObject>,
}

impl SceneDigest {
    fn object(&self, id: u32) -> Result<&DigestObject, String> {
        self.objects.iter().find(|o| o.id == id).ok_or_else(|| format!("unknown object {id}"))
    }

    fn frame(&self) -> Result<GravityFrame, String> {
        gravity_frame(self.gravity).map_err(|e| e.to_string())
    }
}

/// Request body sent to the question writer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemPrompt {
    pub schema: String,
    pub image_id: String,
    pub instructions: String,
    pub scene: SceneDigest,
}

pub fn scene_digest(scene: &Scene, refs: &std::collections::BTreeMap<u32, ObjectReference>) -> SceneDigest {
    let g = scene.frame.gravity();
    SceneDigest {
        image_id: scene.image_id.clone(),
        gravity: [g.x, g.y, g.z],
        objects: scene
            .objects
            .iter()
            .map(|o| DigestObject {
                id: o.id,
                category: o.category.clone(),
                reference: refs.get(&o.id).map(|r| r.text.clone()).unwrap_or_else(|| format!("the {}", o.category)),
                center: o.bbox.center,
                size: o.size(),
                yaw_deg: o.facing_yaw_deg,
            })
            .collect(),
    }
}

pub fn level3_problem_prompt(digest: &SceneDigest) -> ProblemPrompt {
    ProblemPrompt {
        schema: PROMPT_SCHEMA.into(),
        image_id: digest.image_id.clone(),
        instructions: "Write spatial problems that need several reasoning steps over the listed objects. \
                       Return a JSON array of candidates with fields question, answer, kind \
                       (numeric or judgement) and derivation."
            .into(),
        scene: digest.clone(),
    }
}

/// Arithmetic over scene quantities, in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum Expr {
    Const { value: f64 },
    Size { object: u32, dimension: Dimension },
    CameraDistance { object: u32 },
    Distance { a: u32, b: u32, component: DistanceComponent },
    Add { args: Vec<Expr> },
    Sub { lhs: Box<Expr>, rhs: Box<Expr> },
    Mul { args: Vec<Expr> },
    Div { lhs: Box<Expr>, rhs: Box<Expr> },
    Min { args: Vec<Expr> },
    Max { args: Vec<Expr> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CmpOp {
    Lt,
    Gt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Derivation {
    Numeric { expr: Expr },
    Compare { lhs: Expr, op: CmpOp, rhs: Expr },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Numeric,
    Judgement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemCandidate {
    pub question: String,
    pub answer: String,
    pub kind: ProblemKind,
    #[serde(default)]
    pub derivation: Option<Derivation>,
}

fn fold(args: &[Expr], digest: &SceneDigest, frame: &GravityFrame, f: fn(f64, f64) -> f64) -> Result<f64, String> {
    let (first, rest) = args.split_first().ok_or("empty argument list")?;
    rest.iter().try_fold(eval_in(first, digest, frame)?, |acc, e| Ok(f(acc, eval_in(e, digest, frame)?)))
}

fn eval_in(expr: &Expr, digest: &SceneDigest, frame: &GravityFrame) -> Result<f64, String> {
    let v = match expr {
        Expr::Const { value } => *value,
        Expr::Size { object, dimension } => digest.object(*object)?.size[dimension.index()],
        Expr::CameraDistance { object } => Vec3::from(digest.object(*object)?.center).norm(),
        Expr::Distance { a, b, component } => {
            let d = Vec3::from(digest.object(*b)?.center) - Vec3::from(digest.object(*a)?.center);
            let w = frame.to_world(&d);
            match component {
                DistanceComponent::Euclidean => w.norm(),
                DistanceComponent::Vertical => w.y.abs(),
                DistanceComponent::Horizontal => w.x.abs(),
                DistanceComponent::Depthwise => w.z.abs(),
            }
        }
        Expr::Add { args } => fold(args, digest, frame, |a, b| a + b)?,
        Expr::Mul { args } => fold(args, digest, frame, |a, b| a * b)?,
        Expr::Min { args } => fold(args, digest, frame, f64::min)?,
        Expr::Max { args } => fold(args, digest, frame, f64::max)?,
        Expr::Sub { lhs, rhs } => eval_in(lhs, digest, frame)? - eval_in(rhs, digest, frame)?,
        Expr::Div { lhs, rhs } => eval_in(lhs, digest, frame)? / eval_in(rhs, digest, frame)?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err("expression is not finite".into())
    }
}

pub fn evaluate_expr(expr: &Expr, digest: &SceneDigest) -> Result<f64, String> {
    eval_in(expr, digest, &digest.frame()?)
}

fn parse_yes_no(s: &str) -> Option<bool> {
    let w = s.trim().trim_end_matches('.').to_lowercase();
    match w.split_whitespace().next()? {
        "yes" | "true" => Some(true),
        "no" | "false" => Some(false),
        _ => None,
    }
}

/// Checks a candidate against the digest. On success returns the query, the recomputed
/// truth and the canonical answer text; on failure, the rejection reason.
pub fn validate_problem_candidate(
    candidate: &ProblemCandidate,
    digest: &SceneDigest,
    min_quantity_m: f64,
) -> Result<(Query, Truth, String), String> {
    let derivation = candidate.derivation.clone().ok_or("no derivation to recompute the answer from")?;
    match (&candidate.kind, &derivation) {
        (ProblemKind::Numeric, Derivation::Numeric { expr }) => {
            let truth = evaluate_expr(expr, digest)?;
            if truth < min_quantity_m {
                return Err(format!("recomputed value {truth:.3} m is below the minimum quantity"));
            }
            let stated = parse_numeric(&candidate.answer).ok_or_else(|| format!("answer {:?} has no quantity", candidate.answer))?;
            let ratio = stated / truth;
            if !(ANSWER_BAND.0..=ANSWER_BAND.1).contains(&ratio) {
                return Err(format!("stated {stated:.3} m disagrees with recomputed {truth:.3} m"));
            }
            Ok((Query::Problem { derivation }, Truth::Quantity { value: truth }, format_quantity(truth)))
        }
        (ProblemKind::Judgement, Derivation::Compare { lhs, op, rhs }) => {
            let (l, r) = (evaluate_expr(lhs, digest)?, evaluate_expr(rhs, digest)?);
            if !(l > 0.0 && r > 0.0 && separated(l.min(r), l.max(r), JUDGEMENT_MARGIN)) {
                return Err(format!("comparison {l:.3} vs {r:.3} is too close to call"));
            }
            let holds = match op {
                CmpOp::Lt => l < r,
                CmpOp::Gt => l > r,
            };
            let stated = parse_yes_no(&candidate.answer).ok_or_else(|| format!("answer {:?} is not yes/no", candidate.answer))?;
            if stated != holds {
                return Err("stated judgement contradicts the recomputed comparison".into());
            }
            let answer = if holds { "Yes" } else { "No" };
            Ok((Query::Problem { derivation }, Truth::Judgement { holds }, answer.into()))
        }
        _ => Err("derivation does not match the candidate kind".into()),
    }
}
