//! Pipeline inputs for synthetic oracle scenes: rendered files, a manifest, and a
//! question-writer transcript answering the exact prompts `generate` will send.

use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use spatialvqa::formats::{write_manifest, ImageManifest};
use spatialvqa::oracle::{oracle_problem_candidates, sample_scene, write_scene, ManifestOptions, OracleConfig};

use crate::client::{write_transcript, Clients, Exchange, Role};
use crate::config::PipelineConfig;
use crate::error::PipelineError;
use crate::generate::{prepare_scene, problem_request};
use crate::services::ProblemResponse;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleInputs {
    pub entries: Vec<ImageManifest>,
    /// Recorded question-writer exchanges.
    pub exchanges: usize,
}

/// Writes scenes for `seeds` into `out` with `out/manifest.jsonl` and
/// `out/fixtures/llm-generator.jsonl`. `cfg` must match the configuration the corpus will
/// be generated with, since the transcript is keyed by the exact prompts.
pub fn write_oracle_inputs(
    out: &Path,
    seeds: Range<u64>,
    ocfg: &OracleConfig,
    opts: &ManifestOptions,
    cfg: &PipelineConfig,
) -> Result<OracleInputs, PipelineError> {
    std::fs::create_dir_all(out).map_err(|e| PipelineError::io(out, e))?;
    let mut cfg = cfg.clone();
    cfg.clients.clear();
    let clients = Clients::from_config(&cfg, out);
    let per_scene = |seed: u64| -> Result<(ImageManifest, Option<Exchange>), PipelineError> {
        let scene = sample_scene(seed, ocfg);
        let entry = write_scene(out, &scene, opts)?;
        let prep = prepare_scene(&entry, out, &cfg, &clients).map_err(PipelineError::Other)?;
        let exchange = problem_request(&prep).map(|req| {
            let resp = ProblemResponse { candidates: oracle_problem_candidates(&prep.digest, seed) };
            Exchange {
                request: serde_json::to_value(&req).expect("prompts serialize"),
                response: serde_json::to_value(&resp).expect("candidates serialize"),
            }
        });
        Ok((entry, exchange))
    };
    let written: Vec<_> = seeds.into_par_iter().map(per_scene).collect::<Result<_, _>>()?;
    let (entries, exchanges): (Vec<ImageManifest>, Vec<Option<Exchange>>) = written.into_iter().unzip();
    let exchanges: Vec<Exchange> = exchanges.into_iter().flatten().collect();
    write_manifest(out.join("manifest.jsonl"), &entries)?;
    let path = out.join("fixtures").join(format!("{}.jsonl", Role::LlmGenerator.as_str()));
    write_transcript(&path, &exchanges).map_err(|e| PipelineError::io(&path, e))?;
    Ok(OracleInputs { entries, exchanges: exchanges.len() })
}
