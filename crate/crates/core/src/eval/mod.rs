//! Scoring of model responses.
//!
//! All boundaries are inclusive: a ratio of exactly 0.75 or 1.25 is inside the tight band,
//! exactly 0.5 or 2.0 inside the wide band, and an angle of exactly 30 degrees counts as
//! correct. Comparisons allow a relative slack of 1e-9 so that values equal to a boundary
//! in decimal are not rejected because of binary rounding.

mod parse;
mod report;

pub use parse::{normalize_answer, normalize_text, parse_count, parse_numeric, parse_triple};
pub use report::{report, GroupRow, Grouping, Report};

use serde::{Deserialize, Serialize};

use crate::qa::{QaFormat, QaItem, TaskFamily, Truth};

const SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Band {
    /// 0.75x to 1.25x of the truth.
    Tight,
    /// 0.5x to 2x of the truth.
    Wide,
}

impl Band {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            Band::Tight => (0.75, 1.25),
            Band::Wide => (0.5, 2.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    RatioTight,
    RatioWide,
    /// Angle to the true direction at most 30 degrees.
    Direction,
    /// Euclidean error at most 25% of the true point's distance from the camera.
    Point,
    /// Relative error at most 25%.
    ProblemNumeric,
    ProblemJudgement,
    Label,
    Count,
    MultipleChoice,
    TrueFalse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum Prediction {
    Quantity(f64),
    Triple([f64; 3]),
    Text(String),
    Count(usize),
    Choice(usize),
    Bool(bool),
    Unparsed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub item_id: String,
    pub response: String,
    pub prediction: Prediction,
    pub rule: Rule,
    pub correct: bool,
    /// Prediction over truth for ratio rules, degrees for directions, relative error for
    /// points and problem answers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<f64>,
    #[serde(default)]
    pub missing: bool,
}

impl EvalRecord {
    fn new(rule: Rule, prediction: Prediction, correct: bool, error: Option<f64>) -> Self {
        EvalRecord { item_id: String::new(), response: String::new(), prediction, rule, correct, error, missing: false }
    }
}

/// Ratio-band check. `gt` must be positive.
pub fn score_ratio(pred: f64, gt: f64, band: Band) -> EvalRecord {
    assert!(gt > 0.0, "ground truth must be positive");
    let (lo, hi) = band.bounds();
    let ratio = pred / gt;
    let correct = ratio.is_finite() && ratio >= lo * (1.0 - SLACK) && ratio <= hi * (1.0 + SLACK);
    let rule = match band {
        Band::Tight => Rule::RatioTight,
        Band::Wide => Rule::RatioWide,
    };
    EvalRecord::new(rule, Prediction::Quantity(pred), correct, Some(ratio))
}

fn angle_deg(a: [f64; 3], b: [f64; 3]) -> Option<f64> {
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    if !(na > 0.0 && nb > 0.0) || !dot.is_finite() {
        return None;
    }
    Some((dot / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees())
}

pub fn score_direction(pred: [f64; 3], gt: [f64; 3]) -> EvalRecord {
    match angle_deg(pred, gt) {
        Some(a) => EvalRecord::new(Rule::Direction, Prediction::Triple(pred), a <= 30.0 * (1.0 + SLACK), Some(a)),
        None => EvalRecord::new(Rule::Direction, Prediction::Triple(pred), false, None),
    }
}

pub fn score_point(pred: [f64; 3], gt: [f64; 3]) -> EvalRecord {
    let err = ((pred[0] - gt[0]).powi(2) + (pred[1] - gt[1]).powi(2) + (pred[2] - gt[2]).powi(2)).sqrt();
    let scale = (gt[0] * gt[0] + gt[1] * gt[1] + gt[2] * gt[2]).sqrt();
    let rel = err / scale;
    EvalRecord::new(Rule::Point, Prediction::Triple(pred), rel <= 0.25 * (1.0 + SLACK), Some(rel))
}

/// Problem-solving answers. Numeric answers are correct within 25% of the truth (the
/// 0.75-1.25 ratio band); judgements use the judge's verdict when one is supplied and
/// otherwise a normalized exact match.
pub fn score_problem_solving(response: &str, truth: &Truth, expected_text: &str, verdict: Option<bool>) -> EvalRecord {
    match truth {
        Truth::Quantity { value } => match parse_numeric(response) {
            Some(p) => {
                let mut r = score_ratio(p, *value, Band::Tight);
                r.rule = Rule::ProblemNumeric;
                r.error = Some((p - value).abs() / value);
                r
            }
            None => EvalRecord::new(Rule::ProblemNumeric, Prediction::Unparsed, false, None),
        },
        _ => {
            let pred = normalize_answer(response);
            let correct = verdict.unwrap_or_else(|| !pred.is_empty() && pred == normalize_answer(expected_text));
            EvalRecord::new(Rule::ProblemJudgement, Prediction::Text(pred), correct, None)
        }
    }
}

/// Option letter named by a response, either directly ("B", "(b) the chair",
/// "Option B") or by repeating an option's text.
pub fn parse_choice(response: &str, options: &[String]) -> Option<usize> {
    let norm = normalize_text(response);
    let stripped = ["the answer is ", "answer ", "option "]
        .iter()
        .fold(norm.as_str(), |s, p| s.strip_prefix(p).unwrap_or(s));
    let mut words = stripped.split(' ');
    if let Some(first) = words.next() {
        if first.len() == 1 {
            let c = first.as_bytes()[0];
            if (b'a'..b'a' + options.len() as u8).contains(&c) {
                return Some((c - b'a') as usize);
            }
        }
    }
    let target = normalize_answer(response);
    let hits: Vec<usize> = (0..options.len()).filter(|&k| normalize_answer(&options[k]) == target).collect();
    (hits.len() == 1).then(|| hits[0])
}

pub fn score_mcq(response: &str, options: &[String], correct: usize) -> EvalRecord {
    match parse_choice(response, options) {
        Some(k) => EvalRecord::new(Rule::MultipleChoice, Prediction::Choice(k), k == correct, None),
        None => EvalRecord::new(Rule::MultipleChoice, Prediction::Unparsed, false, None),
    }
}

pub fn parse_bool(response: &str) -> Option<bool> {
    let norm = normalize_answer(response);
    match norm.split(' ').next()? {
        "true" | "yes" | "correct" => Some(true),
        "false" | "no" | "incorrect" => Some(false),
        _ => None,
    }
}

pub fn score_tf(response: &str, gt: bool) -> EvalRecord {
    match parse_bool(response) {
        Some(b) => EvalRecord::new(Rule::TrueFalse, Prediction::Bool(b), b == gt, None),
        None => EvalRecord::new(Rule::TrueFalse, Prediction::Unparsed, false, None),
    }
}

/// Canonical form of a qualitative label, folding common phrasings ("to the left",
/// "in front of it", "farther") onto the label words used in answers. Camera-view depth
/// relations are asked as farther/closer, which fold onto front/behind.
fn canonical_label(text: &str) -> String {
    let s = normalize_answer(text);
    let words: Vec<&str> = s.split(' ').filter(|w| !["to", "the", "of", "it", "is", "in", "on", "side", "facing", "point", "from", "camera", "than", "away", "you", "your"].contains(w)).collect();
    let joined = words.join(" ");
    match joined.as_str() {
        "front" | "forward" | "ahead" | "farther" | "further" => "front".into(),
        "closer" | "nearer" => "behind".into(),
        "behind" | "back" | "backward" => {
            // "back" is the facing label, "behind" the direction label; both name the rear.
            if s.contains("behind") {
                "behind".into()
            } else {
                "back".into()
            }
        }
        "above" | "up" | "over" => "above".into(),
        "below" | "under" | "underneath" | "down" => "below".into(),
        _ => joined,
    }
}

pub fn score_label(response: &str, expected: &str) -> EvalRecord {
    let pred = canonical_label(response);
    let correct = !pred.is_empty() && pred == canonical_label(expected);
    EvalRecord::new(Rule::Label, Prediction::Text(pred), correct, None)
}

/// Ordered object answers: the response must list the same references in order.
fn score_sequence(response: &str, expected: &[String]) -> EvalRecord {
    let parts: Vec<String> = response
        .split([',', ';', '\n'])
        .flat_map(|p| p.split(" then "))
        .map(|p| p.trim().trim_start_matches("and "))
        .map(normalize_answer)
        .filter(|p| !p.is_empty())
        .collect();
    let want: Vec<String> = expected.iter().map(|e| normalize_answer(e)).collect();
    let correct = parts == want;
    EvalRecord::new(Rule::Label, Prediction::Text(parts.join(", ")), correct, None)
}

pub fn score_count(response: &str, gt: usize) -> EvalRecord {
    match parse_count(response) {
        Some(n) => EvalRecord::new(Rule::Count, Prediction::Count(n), n == gt, Some(n as f64 - gt as f64)),
        None => EvalRecord::new(Rule::Count, Prediction::Unparsed, false, None),
    }
}

/// Scores a response to a generated item with the rule its family and format call for.
/// `verdict` is a cached judge decision for open-ended problem answers.
pub fn score_item(item: &QaItem, response: &str, band: Band, verdict: Option<bool>) -> EvalRecord {
    let mut rec = match item.format {
        QaFormat::Mcq => score_mcq(response, &item.options, item.correct_option.unwrap_or(usize::MAX)),
        QaFormat::TrueFalse => score_tf(response, item.tf_answer().unwrap_or(false)),
        QaFormat::FreeForm => match &item.truth {
            _ if item.family == TaskFamily::ProblemSolving => {
                score_problem_solving(response, &item.truth, &item.answer, verdict)
            }
            Truth::Quantity { value } => match parse_numeric(response) {
                Some(p) => score_ratio(p, *value, band),
                None => EvalRecord::new(
                    if band == Band::Tight { Rule::RatioTight } else { Rule::RatioWide },
                    Prediction::Unparsed,
                    false,
                    None,
                ),
            },
            Truth::Point { xyz } => match parse_triple(response) {
                Some(p) => score_point(p, *xyz),
                None => EvalRecord::new(Rule::Point, Prediction::Unparsed, false, None),
            },
            Truth::Vector { xyz } => match parse_triple(response) {
                Some(p) => score_direction(p, *xyz),
                None => EvalRecord::new(Rule::Direction, Prediction::Unparsed, false, None),
            },
            Truth::Count { n } => score_count(response, *n),
            Truth::Objects { ids } if ids.len() > 1 => {
                let expected: Vec<String> = item.answer.split(", ").map(String::from).collect();
                score_sequence(response, &expected)
            }
            Truth::Label { .. } | Truth::Objects { .. } | Truth::Judgement { .. } => score_label(response, &item.answer),
        },
    };
    rec.item_id = item.id.clone();
    rec.response = response.to_string();
    rec
}

/// Record for an item without a response.
pub fn missing_record(item: &QaItem, band: Band) -> EvalRecord {
    let mut rec = score_item(item, "", band, None);
    rec.correct = false;
    rec.missing = true;
    rec
}
