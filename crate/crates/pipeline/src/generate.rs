//! Corpus generation over a manifest.
//!
//! Output directory layout:
//!
//! - `shards/{image}.jsonl`: items of one image, written atomically.
//! - `ledger.jsonl`: one status line per processed image.
//! - `corpus.jsonl`: shards of all done images concatenated in manifest order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spatialvqa::formats::{
    heuristic_image_filter, read_manifest, read_mask, read_pointmap, tag_vote_filter, validate_manifest,
    CaptionCandidate, Grounding, ImageManifest, Mask, PointMap,
};
use spatialvqa::qa::{
    level3_problem_prompt, scene_digest, synthesize_scene_qa, ProblemPrompt, QaItem, SceneDigest, SynthInput, Templates,
};
use spatialvqa::references::{assign_references, ObjectReference};
use spatialvqa::scene::{apply_detections, build_scene, textual_candidates, BuiltScene};

use crate::client::{write_atomic, Clients, Role};
use crate::config::PipelineConfig;
use crate::error::PipelineError;
use crate::ledger::{Ledger, LedgerEntry, Status};
use crate::services::{
    CaptionRequest, CaptionResponse, DepthRequest, DepthResponse, GroundRequest, GroundResponse, ProblemResponse,
};

#[derive(Debug, Clone, Default)]
pub struct GenerateOptions {
    /// Process at most this many pending images, then stop as if interrupted.
    pub limit: Option<usize>,
    /// Process images whose last ledger status is `failed` again.
    pub retry_failed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub images: usize,
    pub done: usize,
    pub failed: usize,
    pub skipped: usize,
    /// Manifest images without a ledger entry (interrupted or limited runs).
    pub pending: usize,
    /// Images processed by this invocation.
    pub processed: usize,
    pub items: usize,
    pub families: BTreeMap<String, usize>,
    pub elapsed_ms: u64,
    pub upstream_calls: u64,
}

enum Outcome {
    Done { items: Vec<QaItem>, rejected: usize, dropped: usize },
    Skipped(String),
}

/// File name for an image's shard: the id itself when it is path-safe, else its hash.
pub fn shard_name(image_id: &str) -> String {
    let safe = !image_id.is_empty()
        && !image_id.starts_with('.')
        && image_id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if safe {
        format!("{image_id}.jsonl")
    } else {
        format!("{}.jsonl", &hex::encode(Sha256::digest(image_id.as_bytes()))[..32])
    }
}

fn filter_image(entry: &ImageManifest, cfg: &PipelineConfig) -> Result<Option<String>, String> {
    if let Some(stats) = &entry.pixel_stats {
        let d = heuristic_image_filter(stats, &cfg.filter.thresholds);
        if !d.keep {
            return Ok(Some(format!("image filter: {:?}", d.reasons)));
        }
    }
    if let (Some(tags), false) = (&entry.retrieved_tags, cfg.filter.include_tags.is_empty()) {
        let d = tag_vote_filter(tags, &cfg.filter.include_tags, &cfg.filter.exclude_tags).map_err(|e| e.to_string())?;
        if !d.keep {
            return Ok(Some("tag vote".into()));
        }
    }
    Ok(None)
}

fn load_pointmap(entry: &mut ImageManifest, base: &Path, clients: &Clients) -> Result<PointMap, String> {
    let pm = match &entry.pointmap {
        Some(rel) => read_pointmap(ImageManifest::resolve(base, rel)).map_err(|e| e.to_string())?.map,
        None => {
            let req = DepthRequest {
                image_id: entry.image_id.clone(),
                image: entry.image.clone(),
                width: entry.width,
                height: entry.height,
            };
            let resp: DepthResponse = clients.get(Role::DepthEstimator).call_as(&req).map_err(|e| e.to_string())?;
            if entry.gravity.is_none() {
                entry.gravity = resp.gravity;
            }
            if entry.intrinsics.is_none() {
                entry.intrinsics = resp.intrinsics;
            }
            resp.to_pointmap().map_err(|e| format!("depth-estimator response: {e}"))?
        }
    };
    if (pm.width(), pm.height()) != (entry.width, entry.height) {
        return Err(format!(
            "point map is {}x{}, image is {}x{}",
            pm.width(),
            pm.height(),
            entry.width,
            entry.height
        ));
    }
    Ok(pm)
}

/// Fills in captions and groundings from the captioner and grounder when they are enabled.
fn enrich_captions(entry: &mut ImageManifest, clients: &Clients) -> Result<(), String> {
    let captioner = clients.get(Role::Captioner);
    let grounder = clients.get(Role::Grounder);
    for obj in &mut entry.objects {
        if obj.captions.is_empty() && captioner.is_enabled() {
            let req = CaptionRequest {
                image_id: entry.image_id.clone(),
                image: entry.image.clone(),
                object_id: obj.id,
                category: obj.category.clone(),
                bbox: obj.bbox,
            };
            let resp: CaptionResponse = captioner.call_as(&req).map_err(|e| e.to_string())?;
            obj.captions = resp.captions.into_iter().map(|text| CaptionCandidate { text, grounding: None }).collect();
        }
        if !grounder.is_enabled() {
            continue;
        }
        for cap in obj.captions.iter_mut().filter(|c| c.grounding.is_none()) {
            let req = GroundRequest {
                image_id: entry.image_id.clone(),
                image: entry.image.clone(),
                object_id: obj.id,
                caption: cap.text.clone(),
                mask: obj.mask.clone(),
            };
            let resp: GroundResponse = grounder.call_as(&req).map_err(|e| e.to_string())?;
            cap.grounding = Some(Grounding { boxes: resp.boxes, mask_iou: resp.mask_iou });
        }
    }
    Ok(())
}

/// An image taken up to the point where questions are written.
pub struct PreparedScene {
    pub built: BuiltScene,
    pub refs: BTreeMap<u32, ObjectReference>,
    pub digest: SceneDigest,
    pub pointmap: PointMap,
    /// Objects removed for lacking a matching detection.
    pub relabel_dropped: Vec<(u32, String)>,
}

/// Detections, point map, masks, captions, scene and references for one image. Services
/// are called as needed; `base` anchors the entry's relative paths.
pub fn prepare_scene(
    entry: &ImageManifest,
    base: &Path,
    cfg: &PipelineConfig,
    clients: &Clients,
) -> Result<PreparedScene, String> {
    let (mut entry, relabel_dropped) = apply_detections(entry, cfg.references.label_iou);
    let pointmap = load_pointmap(&mut entry, base, clients)?;
    let mut masks = BTreeMap::<u32, Mask>::new();
    for obj in &entry.objects {
        if let Some(rel) = &obj.mask {
            let m = read_mask(ImageManifest::resolve(base, rel)).map_err(|e| format!("object {}: {e}", obj.id))?;
            if (m.width, m.height) != (entry.width, entry.height) {
                return Err(format!("object {}: mask is {}x{}", obj.id, m.width, m.height));
            }
            masks.insert(obj.id, m);
        }
    }
    enrich_captions(&mut entry, clients)?;
    let built = build_scene(&entry, Some(&pointmap), &masks, &cfg.box_fit).map_err(|e| e.to_string())?;
    let textual = textual_candidates(&entry, cfg.references.caption_iou);
    let refs = assign_references(&built.scene.objects, &built.scene.frame, &textual, &cfg.qa.guards, &cfg.references);
    let digest = scene_digest(&built.scene, &refs);
    Ok(PreparedScene { built, refs, digest, pointmap, relabel_dropped })
}

/// The request sent to the `llm-generator` role for a prepared scene, if any.
pub fn problem_request(prep: &PreparedScene) -> Option<ProblemPrompt> {
    (!prep.built.scene.objects.is_empty()).then(|| level3_problem_prompt(&prep.digest))
}

fn process_image(
    entry: &ImageManifest,
    base: &Path,
    cfg: &PipelineConfig,
    clients: &Clients,
    templates: &Templates,
) -> Result<Outcome, String> {
    if let Some(reason) = filter_image(entry, cfg)? {
        return Ok(Outcome::Skipped(reason));
    }
    let prep = prepare_scene(entry, base, cfg, clients)?;
    let llm = clients.get(Role::LlmGenerator);
    let candidates = match problem_request(&prep) {
        Some(req) if llm.is_enabled() => {
            let resp: ProblemResponse = llm.call_as(&req).map_err(|e| e.to_string())?;
            Some(resp.candidates)
        }
        _ => None,
    };
    let input = SynthInput {
        scene: &prep.built.scene,
        refs: &prep.refs,
        pointmap: Some(&prep.pointmap),
        problems: candidates.as_ref().map(|c| (&prep.digest, c.as_slice())),
    };
    let out = synthesize_scene_qa(&input, &cfg.qa, templates, cfg.seed);
    Ok(Outcome::Done {
        items: out.items,
        rejected: out.rejected.len(),
        dropped: prep.built.dropped.len() + prep.relabel_dropped.len(),
    })
}

fn shard_bytes(items: &[QaItem]) -> Vec<u8> {
    let mut buf = Vec::new();
    for it in items {
        serde_json::to_writer(&mut buf, it).expect("items serialize");
        buf.push(b'\n');
    }
    buf
}

/// Runs generation, resuming from any ledger already in `out`.
pub fn run_generate(
    manifest: &Path,
    cfg: &PipelineConfig,
    out: &Path,
    clients: &Clients,
    templates: &Templates,
    opts: &GenerateOptions,
) -> Result<RunSummary, PipelineError> {
    let started = Instant::now();
    let report = validate_manifest(manifest)?;
    if let Some(v) = report.violations.first() {
        return Err(PipelineError::InvalidManifest {
            path: manifest.display().to_string(),
            count: report.violations.len(),
            first: format!("line {}: {}", v.line, v.message),
        });
    }
    let images = read_manifest(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
    let shards = out.join("shards");
    std::fs::create_dir_all(&shards).map_err(|e| PipelineError::io(&shards, e))?;
    let ledger = Ledger::open(&out.join("ledger.jsonl"))?;

    let shard_path = |id: &str| -> PathBuf { shards.join(shard_name(id)) };
    let mut pending: Vec<&ImageManifest> = images
        .iter()
        .filter(|e| match ledger.previous(&e.image_id) {
            None => true,
            Some(prev) => match prev.status {
                Status::Done => !shard_path(&e.image_id).is_file(),
                Status::Failed => opts.retry_failed,
                Status::Skipped => false,
            },
        })
        .collect();
    if let Some(n) = opts.limit {
        pending.truncate(n);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| PipelineError::Other(format!("worker pool: {e}")))?;
    let first_error: Mutex<Option<PipelineError>> = Mutex::new(None);
    pool.install(|| {
        pending.par_iter().for_each(|entry| {
            let t0 = Instant::now();
            let outcome = process_image(entry, &base, cfg, clients, templates);
            let mut rec = LedgerEntry {
                image_id: entry.image_id.clone(),
                status: Status::Done,
                reason: None,
                items: 0,
                families: BTreeMap::new(),
                rejected_problems: 0,
                dropped_objects: 0,
                elapsed_ms: 0,
            };
            match outcome {
                Ok(Outcome::Done { items, rejected, dropped }) => {
                    let path = shard_path(&entry.image_id);
                    if let Err(e) = write_atomic(&path, &shard_bytes(&items)) {
                        rec.status = Status::Failed;
                        rec.reason = Some(format!("writing {}: {e}", path.display()));
                    } else {
                        rec.items = items.len();
                        for it in &items {
                            *rec.families.entry(it.family.as_str().to_string()).or_default() += 1;
                        }
                    }
                    rec.rejected_problems = rejected;
                    rec.dropped_objects = dropped;
                }
                Ok(Outcome::Skipped(reason)) => {
                    rec.status = Status::Skipped;
                    rec.reason = Some(reason);
                }
                Err(reason) => {
                    rec.status = Status::Failed;
                    rec.reason = Some(reason);
                }
            }
            rec.elapsed_ms = t0.elapsed().as_millis() as u64;
            if let Err(e) = ledger.append(&rec) {
                first_error.lock().unwrap_or_else(|p| p.into_inner()).get_or_insert(e);
            }
        })
    });
    if let Some(e) = first_error.into_inner().unwrap_or_else(|p| p.into_inner()) {
        return Err(e);
    }

    let entries = Ledger::read(&out.join("ledger.jsonl"))?;
    let mut summary = RunSummary { images: images.len(), processed: pending.len(), ..Default::default() };
    let mut corpus = Vec::new();
    for img in &images {
        match entries.get(&img.image_id) {
            None => summary.pending += 1,
            Some(e) => match e.status {
                Status::Done => {
                    let path = shard_path(&img.image_id);
                    let bytes = std::fs::read(&path).map_err(|err| PipelineError::io(&path, err))?;
                    corpus.extend_from_slice(&bytes);
                    summary.done += 1;
                    summary.items += e.items;
                    for (f, n) in &e.families {
                        *summary.families.entry(f.clone()).or_default() += n;
                    }
                }
                Status::Failed => summary.failed += 1,
                Status::Skipped => summary.skipped += 1,
            },
        }
    }
    let corpus_path = out.join("corpus.jsonl");
    write_atomic(&corpus_path, &corpus).map_err(|e| PipelineError::io(&corpus_path, e))?;
    summary.elapsed_ms = started.elapsed().as_millis() as u64;
    summary.upstream_calls = clients.upstream_calls();
    Ok(summary)
}

/// Reads a JSON-lines corpus.
pub fn read_corpus(path: &Path) -> Result<Vec<QaItem>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PipelineError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                detail: e.to_string(),
            })
        })
        .collect()
}
