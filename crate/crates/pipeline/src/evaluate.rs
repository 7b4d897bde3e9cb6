//! Scoring a model's responses against a generated corpus.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use spatialvqa::eval::{missing_record, report, score_item, Band, EvalRecord, Report};
use spatialvqa::qa::{QaFormat, QaItem, TaskFamily, Truth};

use crate::client::Client;
use crate::error::PipelineError;
use crate::services::{JudgeRequest, JudgeResponse, Verdict};

/// One line of a responses file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseLine {
    pub id: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: Report,
    pub records: Vec<EvalRecord>,
    /// Response ids that match no corpus item.
    pub unknown_responses: usize,
    pub judged: usize,
}

pub fn read_responses(path: &Path) -> Result<BTreeMap<String, String>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |detail: String| PipelineError::Parse { path: path.display().to_string(), line: i + 1, detail };
        let r: ResponseLine = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        if out.insert(r.id.clone(), r.response).is_some() {
            return Err(parse_err(format!("duplicate response id {:?}", r.id)));
        }
    }
    Ok(out)
}

fn needs_judge(item: &QaItem) -> bool {
    item.family == TaskFamily::ProblemSolving
        && item.format == QaFormat::FreeForm
        && !matches!(item.truth, Truth::Quantity { .. })
}

/// Scores every corpus item. Items without a response count as wrong. Open-ended problem
/// answers go to the judge when it is enabled and to normalized exact match otherwise.
pub fn run_evaluate(
    benchmark: &str,
    corpus: &[QaItem],
    responses: &BTreeMap<String, String>,
    judge: &Client,
    band: Band,
) -> Result<Evaluation, PipelineError> {
    let mut records = Vec::with_capacity(corpus.len());
    let mut judged = 0;
    for item in corpus {
        let Some(resp) = responses.get(&item.id) else {
            records.push(missing_record(item, band));
            continue;
        };
        let verdict = if needs_judge(item) && judge.is_enabled() && !resp.trim().is_empty() {
            let req = JudgeRequest {
                item_id: item.id.clone(),
                question: item.prompt.clone(),
                reference_answer: item.answer.clone(),
                response: resp.clone(),
            };
            let r: JudgeResponse = judge.call_as(&req)?;
            judged += 1;
            Some(r.verdict == Verdict::Match)
        } else {
            None
        };
        records.push(score_item(item, resp, band, verdict));
    }
    let known: std::collections::BTreeSet<&str> = corpus.iter().map(|i| i.id.as_str()).collect();
    let unknown_responses = responses.keys().filter(|k| !known.contains(k.as_str())).count();
    let pairs: Vec<(&QaItem, &EvalRecord)> = corpus.iter().zip(&records).collect();
    Ok(Evaluation { report: report(benchmark, &pairs), records, unknown_responses, judged })
}
