//! Multiple-choice option construction.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::{format_quantity, TaskFamily, Truth};
use crate::relations::Facing;

/// Multipliers applied to a true quantity to build the wrong options. None of them lands
/// inside the 0.75-1.25 scoring band around the truth.
pub const QUANTITY_DISTRACTORS: [f64; 3] = [0.5, 1.5, 2.5];

#[derive(Debug, Clone, PartialEq)]
pub struct McqOptions {
    pub options: Vec<String>,
    /// Payload behind each option.
    pub payloads: Vec<Truth>,
    pub correct: usize,
}

fn shuffled<R: Rng>(entries: Vec<(String, Truth)>, rng: &mut R) -> McqOptions {
    let mut idx: Vec<usize> = (0..entries.len()).collect();
    idx.shuffle(rng);
    McqOptions {
        options: idx.iter().map(|&i| entries[i].0.clone()).collect(),
        payloads: idx.iter().map(|&i| entries[i].1.clone()).collect(),
        correct: idx.iter().position(|&i| i == 0).unwrap(),
    }
}

pub fn quantity_options<R: Rng>(meters: f64, rng: &mut R) -> McqOptions {
    let mut entries = vec![(format_quantity(meters), Truth::Quantity { value: meters })];
    for m in QUANTITY_DISTRACTORS {
        let v = meters * m;
        entries.push((format_quantity(v), Truth::Quantity { value: v }));
    }
    shuffled(entries, rng)
}

/// Three wrong labels drawn from `label_set`. `None` when the set is too small.
pub fn label_options<R: Rng>(truth: &str, label_set: &[&str], rng: &mut R) -> Option<McqOptions> {
    let others: Vec<&str> = label_set.iter().copied().filter(|l| *l != truth).collect();
    if others.len() < 3 {
        return None;
    }
    let mut entries = vec![(truth.to_string(), Truth::Label { label: truth.into() })];
    for l in others.choose_multiple(rng, 3) {
        entries.push((l.to_string(), Truth::Label { label: l.to_string() }));
    }
    Some(shuffled(entries, rng))
}

/// Three other nonnegative counts within a few of the truth.
pub fn count_options<R: Rng>(n: usize, rng: &mut R) -> McqOptions {
    let pool: Vec<usize> = (n.saturating_sub(2)..=n + 3).filter(|&k| k != n).collect();
    let mut entries = vec![(n.to_string(), Truth::Count { n })];
    for &k in pool.choose_multiple(rng, 3) {
        entries.push((k.to_string(), Truth::Count { n: k }));
    }
    shuffled(entries, rng)
}

/// Options for a family's answer payload, when multiple choice applies to it.
///
/// Binary label sets (depth order, a single direction axis) and the three consistency
/// labels cannot supply three wrong options, so they return `None`.
pub fn make_mcq<R: Rng>(truth: &Truth, family: TaskFamily, rng: &mut R) -> Option<McqOptions> {
    match truth {
        Truth::Quantity { value } => Some(quantity_options(*value, rng)),
        Truth::Count { n } => Some(count_options(*n, rng)),
        Truth::Label { label } if family == TaskFamily::Orientation => {
            let set: Vec<&str> = Facing::ALL.iter().map(|f| f.as_str()).collect();
            label_options(label, &set, rng)
        }
        _ => None,
    }
}
