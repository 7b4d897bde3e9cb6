//! Question/answer synthesis over the task taxonomy.
//!
//! Every item records the structured [`Query`] it asks, the [`Truth`] payload computed by
//! the relation ops, and its rendering in one of three formats. Keeping the query
//! structured lets an independent checker recompute the answer from ground truth.

mod mcq;
mod problem;
mod quantity;
mod synth;
mod templates;

pub use mcq::{count_options, label_options, make_mcq, quantity_options, McqOptions, QUANTITY_DISTRACTORS};
pub use problem::{
    evaluate_expr, level3_problem_prompt, scene_digest, validate_problem_candidate, CmpOp, Derivation, DigestObject, Expr,
    ProblemCandidate, ProblemKind, ProblemPrompt, SceneDigest,
};
pub use quantity::{format_decimal, format_point, format_quantity, format_vector};
pub use synth::{level0_items, synthesize_scene_qa, FamilySampler, SynthInput, SynthOutput};
pub use templates::{TemplateError, Templates, DEFAULT_TEMPLATES};

use serde::{Deserialize, Serialize};

use crate::relations::{Attribute, AxisLabel, Guards};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskFamily {
    PointQuerying,
    DepthOrdering,
    Orientation,
    Size,
    Localization,
    RelativeDirection,
    RelativeDistance,
    RelationalComparison,
    PerspectiveTaking,
    SpatialCounting,
    ProblemSolving,
}

impl TaskFamily {
    pub const ALL: [TaskFamily; 11] = [
        TaskFamily::PointQuerying,
        TaskFamily::DepthOrdering,
        TaskFamily::Orientation,
        TaskFamily::Size,
        TaskFamily::Localization,
        TaskFamily::RelativeDirection,
        TaskFamily::RelativeDistance,
        TaskFamily::RelationalComparison,
        TaskFamily::PerspectiveTaking,
        TaskFamily::SpatialCounting,
        TaskFamily::ProblemSolving,
    ];

    pub fn level(self) -> u8 {
        match self {
            TaskFamily::PointQuerying | TaskFamily::DepthOrdering => 0,
            TaskFamily::Orientation | TaskFamily::Size | TaskFamily::Localization => 1,
            TaskFamily::RelativeDirection | TaskFamily::RelativeDistance | TaskFamily::RelationalComparison => 2,
            TaskFamily::PerspectiveTaking | TaskFamily::SpatialCounting | TaskFamily::ProblemSolving => 3,
        }
    }

    pub fn index(self) -> usize {
        TaskFamily::ALL.iter().position(|f| *f == self).unwrap()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskFamily::PointQuerying => "point-querying",
            TaskFamily::DepthOrdering => "depth-ordering",
            TaskFamily::Orientation => "orientation",
            TaskFamily::Size => "size",
            TaskFamily::Localization => "localization",
            TaskFamily::RelativeDirection => "relative-direction",
            TaskFamily::RelativeDistance => "relative-distance",
            TaskFamily::RelationalComparison => "relational-comparison",
            TaskFamily::PerspectiveTaking => "perspective-taking",
            TaskFamily::SpatialCounting => "spatial-counting",
            TaskFamily::ProblemSolving => "problem-solving",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QaFormat {
    FreeForm,
    Mcq,
    TrueFalse,
}

impl QaFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            QaFormat::FreeForm => "free-form",
            QaFormat::Mcq => "mcq",
            QaFormat::TrueFalse => "true-false",
        }
    }
}

/// Object dimension asked about by size questions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dimension {
    Width,
    Height,
    Length,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Width, Dimension::Height, Dimension::Length];

    pub fn index(self) -> usize {
        match self {
            Dimension::Width => 0,
            Dimension::Height => 1,
            Dimension::Length => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Width => "width",
            Dimension::Height => "height",
            Dimension::Length => "length",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceComponent {
    Euclidean,
    Vertical,
    Horizontal,
    Depthwise,
}

impl DistanceComponent {
    pub const ALL: [DistanceComponent; 4] = [
        DistanceComponent::Euclidean,
        DistanceComponent::Vertical,
        DistanceComponent::Horizontal,
        DistanceComponent::Depthwise,
    ];

    pub fn phrase(self) -> &'static str {
        match self {
            DistanceComponent::Euclidean => "straight-line",
            DistanceComponent::Vertical => "vertical",
            DistanceComponent::Horizontal => "horizontal",
            DistanceComponent::Depthwise => "depth-wise",
        }
    }
}

/// Viewpoint of a perspective-taking question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Viewpoint {
    /// Standing at the object, facing where it faces.
    Object { object: u32 },
    /// Standing at `at`, looking horizontally toward `toward`.
    Observer { at: u32, toward: u32 },
}

/// What an item asks, in structured form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Query {
    PointQuery { pixel: [u32; 2] },
    /// Which of two pixels is closer to the camera (smaller depth).
    DepthOrder { first: [u32; 2], second: [u32; 2] },
    Orientation { object: u32 },
    Size { object: u32, dimension: Dimension },
    Location { object: u32 },
    CameraDistance { object: u32 },
    /// Qualitative direction of `b` relative to `a` along one world axis.
    DirectionLabel { a: u32, b: u32, axis: usize },
    /// Unit vector from `a` to `b` in the camera frame.
    DirectionVector { a: u32, b: u32 },
    Distance { a: u32, b: u32, component: DistanceComponent },
    Extreme { objects: Vec<u32>, attribute: Attribute, max: bool },
    /// Ascending order by attribute.
    Order { objects: Vec<u32>, attribute: Attribute },
    Consistency { a: u32, b: u32 },
    PerspectiveLabel { viewpoint: Viewpoint, target: u32, axis: usize },
    PerspectiveDistance { viewpoint: Viewpoint, target: u32, label: AxisLabel },
    Count { anchor: u32, category: String, relation: AxisLabel },
    Problem { derivation: Derivation },
}

/// Ground-truth payload of a query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Truth {
    /// Meters.
    Quantity { value: f64 },
    /// Camera-frame coordinates, meters.
    Point { xyz: [f64; 3] },
    /// Unit vector.
    Vector { xyz: [f64; 3] },
    Label { label: String },
    /// Object ids: one for a selection, several for an ordering.
    Objects { ids: Vec<u32> },
    Count { n: usize },
    Judgement { holds: bool },
}

/// Colored box drawn on the image for a box-fallback reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Highlight {
    pub object_id: u32,
    pub color: String,
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaItem {
    pub schema: u32,
    pub id: String,
    pub image_id: String,
    pub level: u8,
    pub family: TaskFamily,
    pub format: QaFormat,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
    /// Index of the correct option (multiple choice only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_option: Option<usize>,
    pub answer: String,
    pub query: Query,
    pub truth: Truth,
    /// The value a true/false statement asserts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim: Option<Truth>,
    pub object_ids: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub highlights: Vec<Highlight>,
    /// Surface text used for each referenced object, in `object_ids` order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub references: Vec<String>,
}

impl QaItem {
    /// The answer as a boolean for true/false items.
    pub fn tf_answer(&self) -> Option<bool> {
        match self.format {
            QaFormat::TrueFalse => Some(self.answer == "True"),
            _ => None,
        }
    }

    /// Checks the format invariants. Returns a description of the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        match self.format {
            QaFormat::Mcq => {
                if self.options.len() != 4 {
                    return Err(format!("{}: {} options", self.id, self.options.len()));
                }
                let mut sorted = self.options.clone();
                sorted.sort();
                sorted.dedup();
                if sorted.len() != 4 {
                    return Err(format!("{}: duplicate options", self.id));
                }
                if self.correct_option.is_none_or(|k| k >= 4) {
                    return Err(format!("{}: no correct option", self.id));
                }
            }
            QaFormat::TrueFalse => {
                if self.answer != "True" && self.answer != "False" {
                    return Err(format!("{}: answer {:?}", self.id, self.answer));
                }
                if self.claim.is_none() {
                    return Err(format!("{}: no claim", self.id));
                }
            }
            QaFormat::FreeForm => {
                if !self.options.is_empty() {
                    return Err(format!("{}: free-form item with options", self.id));
                }
            }
        }
        if self.level != self.family.level() {
            return Err(format!("{}: level {} for {:?}", self.id, self.level, self.family));
        }
        if matches!(self.truth, Truth::Quantity { .. }) && self.format != QaFormat::TrueFalse {
            let text = if self.format == QaFormat::Mcq { &self.options[self.correct_option.unwrap()] } else { &self.answer };
            if !(text.ends_with("meters") || text.ends_with("centimeters") || text.ends_with("centimeter")) {
                return Err(format!("{}: quantity without unit: {text:?}", self.id));
            }
        }
        Ok(())
    }
}

/// Per-family sampling weights and the general-data mix hook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    /// Weights in [`TaskFamily::ALL`] order.
    pub weights: [f64; 11],
    /// General VQA items per spatial items, as (general, spatial).
    pub general_mix: [u32; 2],
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            weights: [0.1051, 0.0269, 0.0351, 0.1156, 0.0831, 0.2609, 0.1349, 0.1153, 0.0422, 0.0752, 0.0057],
            general_mix: [1, 7],
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err("sampling weights must be finite and nonnegative".into());
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(format!("sampling weights sum to {sum}, expected 1"));
        }
        if self.general_mix[1] == 0 {
            return Err("general mix needs a nonzero spatial share".into());
        }
        Ok(())
    }

    pub fn weight(&self, family: TaskFamily) -> f64 {
        self.weights[family.index()]
    }

    /// Number of general VQA items to interleave with `spatial` spatial items.
    pub fn general_items_for(&self, spatial: usize) -> usize {
        spatial * self.general_mix[0] as usize / self.general_mix[1] as usize
    }
}

/// Knobs of per-image synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QaConfig {
    pub items_per_image: usize,
    /// Quantities below this (meters) are not asked about.
    pub min_quantity_m: f64,
    /// Attempts per family before it is considered exhausted for an image.
    pub attempts_per_family: usize,
    pub guards: Guards,
    pub sampling: SamplingConfig,
}

impl Default for QaConfig {
    fn default() -> Self {
        QaConfig {
            items_per_image: 24,
            min_quantity_m: 0.05,
            attempts_per_family: 24,
            guards: Guards::default(),
            sampling: SamplingConfig::default(),
        }
    }
}
