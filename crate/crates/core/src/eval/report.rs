//! Accuracy tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::EvalRecord;
use crate::qa::{QaFormat, QaItem, TaskFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grouping {
    Overall,
    Level,
    Family,
    Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub grouping: Grouping,
    pub key: String,
    pub n: usize,
    pub correct: usize,
    /// `None` for an empty group.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub benchmark: String,
    pub total: usize,
    pub correct: usize,
    pub missing: usize,
    pub rows: Vec<GroupRow>,
}

/// Accuracy per level, family and format. Every level and family appears, with empty
/// groups reported as n = 0 and no accuracy.
pub fn report(benchmark: &str, scored: &[(&QaItem, &EvalRecord)]) -> Report {
    let mut counts: BTreeMap<(Grouping, String), (usize, usize)> = BTreeMap::new();
    counts.insert((Grouping::Overall, "all".into()), (0, 0));
    for level in 0..=3u8 {
        counts.insert((Grouping::Level, format!("level-{level}")), (0, 0));
    }
    for f in TaskFamily::ALL {
        counts.insert((Grouping::Family, f.as_str().into()), (0, 0));
    }
    for f in [QaFormat::FreeForm, QaFormat::Mcq, QaFormat::TrueFalse] {
        counts.insert((Grouping::Format, f.as_str().into()), (0, 0));
    }
    let mut missing = 0;
    for (item, rec) in scored {
        missing += rec.missing as usize;
        for key in [
            (Grouping::Overall, "all".to_string()),
            (Grouping::Level, format!("level-{}", item.level)),
            (Grouping::Family, item.family.as_str().to_string()),
            (Grouping::Format, item.format.as_str().to_string()),
        ] {
            let e = counts.entry(key).or_default();
            e.0 += 1;
            e.1 += rec.correct as usize;
        }
    }
    let (total, correct) = counts[&(Grouping::Overall, "all".to_string())];
    let mut rows: Vec<GroupRow> = counts
        .into_iter()
        .map(|((grouping, key), (n, c))| GroupRow {
            grouping,
            key,
            n,
            correct: c,
            accuracy: (n > 0).then(|| c as f64 / n as f64),
        })
        .collect();
    let family_pos = |k: &str| TaskFamily::ALL.iter().position(|f| f.as_str() == k).unwrap_or(usize::MAX);
    rows.sort_by(|a, b| {
        a.grouping.cmp(&b.grouping).then_with(|| match a.grouping {
            Grouping::Family => family_pos(&a.key).cmp(&family_pos(&b.key)),
            _ => a.key.cmp(&b.key),
        })
    });
    Report { benchmark: benchmark.into(), total, correct, missing, rows }
}

fn fmt_accuracy(acc: Option<f64>) -> String {
    match acc {
        Some(a) => format!("{:.2}%", a * 100.0),
        None => "n/a".into(),
    }
}

impl Report {
    pub fn row(&self, grouping: Grouping, key: &str) -> Option<&GroupRow> {
        self.rows.iter().find(|r| r.grouping == grouping && r.key == key)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "benchmark: {}", self.benchmark);
        let _ = writeln!(out, "missing responses: {}", self.missing);
        let _ = writeln!(out, "{:<8} {:<24} {:>8} {:>8} {:>9}", "group", "key", "n", "correct", "accuracy");
        for r in &self.rows {
            let g = match r.grouping {
                Grouping::Overall => "overall",
                Grouping::Level => "level",
                Grouping::Family => "family",
                Grouping::Format => "format",
            };
            let _ = writeln!(out, "{:<8} {:<24} {:>8} {:>8} {:>9}", g, r.key, r.n, r.correct, fmt_accuracy(r.accuracy));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::score_tf;
    use crate::qa::{Query, Truth, SCHEMA_VERSION};

    fn item(id: &str, family: TaskFamily) -> QaItem {
        QaItem {
            schema: SCHEMA_VERSION,
            id: id.into(),
            image_id: "img".into(),
            level: family.level(),
            family,
            format: QaFormat::TrueFalse,
            prompt: String::new(),
            options: vec![],
            correct_option: None,
            answer: "True".into(),
            query: Query::Orientation { object: 0 },
            truth: Truth::Label { label: "front".into() },
            claim: Some(Truth::Label { label: "front".into() }),
            object_ids: vec![0],
            highlights: vec![],
            references: vec![],
        }
    }

    #[test]
    fn three_of_four() {
        let items: Vec<QaItem> = (0..4).map(|k| item(&k.to_string(), TaskFamily::Orientation)).collect();
        let recs: Vec<EvalRecord> = ["True", "true", "yes", "False"].iter().map(|r| score_tf(r, true)).collect();
        let pairs: Vec<(&QaItem, &EvalRecord)> = items.iter().zip(&recs).collect();
        let rep = report("custom", &pairs);
        assert_eq!((rep.total, rep.correct), (4, 3));
        let row = rep.row(Grouping::Family, "orientation").unwrap();
        assert_eq!(fmt_accuracy(row.accuracy), "75.00%");
        let empty = rep.row(Grouping::Family, "size").unwrap();
        assert_eq!((empty.n, empty.accuracy), (0, None));
        assert!(rep.to_text().contains("n/a"));
        let level_sum: usize = rep.rows.iter().filter(|r| r.grouping == Grouping::Level).map(|r| r.n).sum();
        assert_eq!(level_sum, rep.total);
        let family_sum: usize = rep.rows.iter().filter(|r| r.grouping == Grouping::Family).map(|r| r.n).sum();
        assert_eq!(family_sum, rep.total);
    }
}
