use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::Value;
use spatialvqa::eval::Band;
use spatialvqa::formats::{read_manifest, read_pointmap, write_manifest};
use spatialvqa::oracle::{ManifestOptions, OracleConfig};
use spatialvqa::qa::{QaItem, Templates};
use spatialvqa_pipeline::client::{write_transcript, Transport, TransportError};
use spatialvqa_pipeline::ledger::{Ledger, Status};
use spatialvqa_pipeline::services::{DepthResponse, JudgeRequest};
use spatialvqa_pipeline::{
    read_corpus, run_evaluate, run_generate, write_oracle_inputs, Clients, GenerateOptions, PipelineConfig, Role,
    RunSummary,
};

/// Counts requests and answers them with a closure.
struct Fake<F> {
    calls: AtomicUsize,
    reply: F,
}

impl<F> Fake<F> {
    fn new(reply: F) -> Arc<Self> {
        Arc::new(Fake { calls: AtomicUsize::new(0), reply })
    }
    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<F> Transport for Fake<F>
where
    F: Fn(usize, &str, &Value) -> Result<Value, TransportError> + Send + Sync,
{
    fn post_json(&self, url: &str, body: &[u8], _timeout: Duration) -> Result<Vec<u8>, TransportError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        let req: Value = serde_json::from_slice(body).unwrap();
        (self.reply)(n, url, &req).map(|v| serde_json::to_vec(&v).unwrap())
    }
}

fn refuse() -> Arc<Fake<impl Fn(usize, &str, &Value) -> Result<Value, TransportError> + Send + Sync>> {
    Fake::new(|_: usize, _: &str, _: &Value| Err(TransportError::Network("offline".into())))
}

fn scenes(dir: &Path, n: u64) -> PathBuf {
    let cfg = PipelineConfig::default();
    write_oracle_inputs(dir, 0..n, &OracleConfig::default(), &ManifestOptions::default(), &cfg).unwrap();
    dir.join("manifest.jsonl")
}

fn generate(manifest: &Path, out: &Path, workers: usize, opts: &GenerateOptions) -> RunSummary {
    let fixtures = manifest.parent().unwrap().join("fixtures");
    let cfg = PipelineConfig { workers, ..Default::default() }.with_fixtures(&fixtures);
    let clients = Clients::with_transport(&cfg, out, refuse());
    run_generate(manifest, &cfg, out, &clients, &Templates::builtin(), opts).unwrap()
}

fn corpus_bytes(out: &Path) -> Vec<u8> {
    std::fs::read(out.join("corpus.jsonl")).unwrap()
}

#[test]
fn worker_count_does_not_change_the_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = scenes(&dir.path().join("scenes"), 16);
    let one = generate(&manifest, &dir.path().join("w1"), 1, &GenerateOptions::default());
    let eight = generate(&manifest, &dir.path().join("w8"), 8, &GenerateOptions::default());
    assert_eq!((one.done, one.failed, one.upstream_calls), (16, 0, 0));
    assert_eq!(one.items, eight.items);
    let a = corpus_bytes(&dir.path().join("w1"));
    assert!(!a.is_empty());
    assert_eq!(a, corpus_bytes(&dir.path().join("w8")));
    let items = read_corpus(&dir.path().join("w1").join("corpus.jsonl")).unwrap();
    assert_eq!(items.len(), one.items);
    // manifest order, then item order within an image
    let order: Vec<&str> = items.iter().map(|i| i.image_id.as_str()).collect();
    let mut sorted = order.clone();
    sorted.sort();
    assert_eq!(order, sorted);
}

#[test]
fn interrupted_runs_resume_to_the_same_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = scenes(&dir.path().join("scenes"), 12);
    let full = dir.path().join("full");
    generate(&manifest, &full, 4, &GenerateOptions::default());
    let expected = corpus_bytes(&full);

    let out = dir.path().join("resumed");
    let first = generate(&manifest, &out, 4, &GenerateOptions { limit: Some(5), ..Default::default() });
    assert_eq!((first.done, first.pending, first.processed), (5, 7, 5));

    // A kill during a ledger write leaves a partial line; a lost shard forces a redo.
    let ledger = out.join("ledger.jsonl");
    let mut text = std::fs::read_to_string(&ledger).unwrap();
    text.push_str("{\"image_id\":\"oracle-0000");
    std::fs::write(&ledger, &text).unwrap();
    let first_line: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let victim = first_line["image_id"].as_str().unwrap().to_string();
    std::fs::remove_file(out.join("shards").join(format!("{victim}.jsonl"))).unwrap();

    let second = generate(&manifest, &out, 4, &GenerateOptions::default());
    assert_eq!((second.done, second.pending, second.processed), (12, 0, 8));
    assert_eq!(corpus_bytes(&out), expected);

    let third = generate(&manifest, &out, 4, &GenerateOptions::default());
    assert_eq!(third.processed, 0);
    assert_eq!(corpus_bytes(&out), expected);
}

#[test]
fn a_corrupt_point_map_fails_only_its_image() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("scenes");
    let manifest = scenes(&sc, 6);
    let entries = read_manifest(&manifest).unwrap();
    let bad = &entries[2];
    let pmap = sc.join(bad.pointmap.as_ref().unwrap());
    let mut bytes = std::fs::read(&pmap).unwrap();
    bytes[0] = b'X';
    std::fs::write(&pmap, bytes).unwrap();

    let out = dir.path().join("out");
    let s = generate(&manifest, &out, 3, &GenerateOptions::default());
    assert_eq!((s.done, s.failed), (5, 1));
    let ledger = Ledger::read(&out.join("ledger.jsonl")).unwrap();
    let entry = &ledger[&bad.image_id];
    assert_eq!(entry.status, Status::Failed);
    assert!(entry.reason.as_deref().unwrap().contains("offset 0"), "{:?}", entry.reason);
    let items = read_corpus(&out.join("corpus.jsonl")).unwrap();
    assert!(items.iter().all(|i| i.image_id != bad.image_id));

    // Failed images stay failed on resume unless retried.
    let again = generate(&manifest, &out, 3, &GenerateOptions::default());
    assert_eq!((again.processed, again.failed), (0, 1));
    let retried = generate(&manifest, &out, 3, &GenerateOptions { retry_failed: true, ..Default::default() });
    assert_eq!((retried.processed, retried.failed), (1, 1));
}

#[test]
fn fixture_mode_sends_nothing_and_misses_are_failures() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = scenes(&dir.path().join("scenes"), 4);
    let fixtures = dir.path().join("scenes").join("fixtures");
    let mut cfg = PipelineConfig::default();
    cfg.clients.entry("llm-generator".into()).or_default().endpoint = Some("http://127.0.0.1:9/llm".into());
    let cfg = cfg.with_fixtures(&fixtures);
    let transport = refuse();
    let out = dir.path().join("out");
    let clients = Clients::with_transport(&cfg, &out, transport.clone());
    let s = run_generate(&manifest, &cfg, &out, &clients, &Templates::builtin(), &GenerateOptions::default()).unwrap();
    assert_eq!((s.done, s.upstream_calls), (4, 0));
    assert_eq!(transport.calls(), 0);
    assert!(!clients.get(Role::Judge).is_enabled());

    // An empty transcript turns every question-writer call into a miss.
    let empty = dir.path().join("empty");
    write_transcript(&empty.join("llm-generator.jsonl"), &[]).unwrap();
    let cfg = PipelineConfig::default().with_fixtures(&empty);
    let out = dir.path().join("out-empty");
    let clients = Clients::with_transport(&cfg, &out, transport.clone());
    let s = run_generate(&manifest, &cfg, &out, &clients, &Templates::builtin(), &GenerateOptions::default()).unwrap();
    assert_eq!((s.done, s.failed), (0, 4));
    let ledger = Ledger::read(&out.join("ledger.jsonl")).unwrap();
    assert!(ledger.values().all(|e| e.reason.as_deref().unwrap().contains("no recorded response")));
    assert_eq!(transport.calls(), 0);
}

#[test]
fn depth_estimator_fills_missing_point_maps_with_retries() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("scenes");
    let manifest = scenes(&sc, 3);
    let mut entries = read_manifest(&manifest).unwrap();
    let mut maps = BTreeMap::new();
    for e in &mut entries {
        let pm = read_pointmap(sc.join(e.pointmap.take().unwrap())).unwrap().map;
        let image = format!("{}.png", e.image_id);
        std::fs::write(sc.join(&image), b"").unwrap();
        e.image = Some(image);
        maps.insert(e.image_id.clone(), pm);
    }
    let stripped = sc.join("no-depth.jsonl");
    write_manifest(&stripped, &entries).unwrap();
    let gravity: BTreeMap<String, Option<[f64; 3]>> = entries.iter().map(|e| (e.image_id.clone(), e.gravity)).collect();

    let attempts = Mutex::new(BTreeMap::<String, usize>::new());
    let transport = Fake::new(move |_: usize, url: &str, req: &Value| {
        assert_eq!(url, "http://depth.invalid/v1");
        let id = req["image_id"].as_str().unwrap().to_string();
        let mut a = attempts.lock().unwrap();
        let n = a.entry(id.clone()).or_default();
        *n += 1;
        if *n == 1 {
            return Err(TransportError::Status(503));
        }
        let pm = &maps[&id];
        let points: Vec<f32> = pm.points().iter().flat_map(|p| *p).collect();
        let resp = DepthResponse {
            width: pm.width(),
            height: pm.height(),
            points,
            valid: Some(pm.validity().to_vec()),
            gravity: gravity[&id],
            intrinsics: None,
        };
        Ok(serde_json::to_value(resp).unwrap())
    });

    let mut cfg = PipelineConfig::default().with_fixtures(&sc.join("fixtures"));
    let depth = cfg.clients.entry("depth-estimator".into()).or_default();
    depth.endpoint = Some("http://depth.invalid/v1".into());
    depth.backoff_ms = 1;
    cfg.validate().unwrap();

    let out = dir.path().join("out");
    let clients = Clients::with_transport(&cfg, &out, transport.clone());
    let s = run_generate(&stripped, &cfg, &out, &clients, &Templates::builtin(), &GenerateOptions::default()).unwrap();
    assert_eq!((s.done, s.upstream_calls), (3, 6));
    assert_eq!(transport.calls(), 6);

    // Same corpus as reading the point maps from disk.
    let reference = dir.path().join("reference");
    generate(&manifest, &reference, 2, &GenerateOptions::default());
    assert_eq!(corpus_bytes(&out), corpus_bytes(&reference));

    // A second run in a fresh output directory sharing the cache makes no calls.
    let mut cached = cfg.clone();
    cached.cache_dir = out.join("cache");
    let clients = Clients::with_transport(&cached, &dir.path().join("out2"), transport.clone());
    run_generate(&stripped, &cached, &dir.path().join("out2"), &clients, &Templates::builtin(), &GenerateOptions::default())
        .unwrap();
    assert_eq!(transport.calls(), 6);
}

fn judgement_items(corpus: &[QaItem]) -> Vec<QaItem> {
    let base = corpus.iter().find(|i| i.family.as_str() == "problem-solving").expect("a problem item");
    (0..3)
        .map(|k| {
            let mut v = serde_json::to_value(base).unwrap();
            v["id"] = format!("judged-{k}").into();
            v["truth"] = serde_json::json!({"kind": "judgement", "holds": k != 1});
            v["answer"] = if k != 1 { "Yes" } else { "No" }.into();
            serde_json::from_value(v).unwrap()
        })
        .collect()
}

#[test]
fn judge_verdicts_are_cached_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = scenes(&dir.path().join("scenes"), 20);
    let out = dir.path().join("gen");
    generate(&manifest, &out, 4, &GenerateOptions::default());
    let mut corpus = read_corpus(&out.join("corpus.jsonl")).unwrap();
    corpus.extend(judgement_items(&corpus));
    let mut responses: BTreeMap<String, String> = corpus.iter().map(|i| (i.id.clone(), i.answer.clone())).collect();
    responses.insert("judged-0".into(), "yes, it would fit".into());
    responses.insert("judged-2".into(), "no".into());
    responses.remove(&corpus[0].id);
    responses.insert("stray".into(), "42".into());

    // The judge accepts a response when its first word matches the reference.
    let transport = Fake::new(|_: usize, _: &str, req: &Value| {
        let r: JudgeRequest = serde_json::from_value(req.clone()).unwrap();
        let first = |s: &str| s.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("").to_lowercase();
        let verdict = if first(&r.response) == first(&r.reference_answer) { "match" } else { "mismatch" };
        Ok(serde_json::json!({ "verdict": verdict }))
    });
    let mut cfg = PipelineConfig::default();
    cfg.clients.entry("judge".into()).or_default().endpoint = Some("http://judge.invalid".into());
    let eval_dir = dir.path().join("eval");
    let clients = Clients::with_transport(&cfg, &eval_dir, transport.clone());
    let judge = clients.get(Role::Judge);
    let first = run_evaluate("oracle", &corpus, &responses, judge, Band::Tight).unwrap();
    assert_eq!(first.unknown_responses, 1);
    assert_eq!(first.judged, 3);
    assert_eq!(transport.calls(), 3);
    let by_id: BTreeMap<&str, bool> = first.records.iter().map(|r| (r.item_id.as_str(), r.correct)).collect();
    assert_eq!((by_id["judged-0"], by_id["judged-1"], by_id["judged-2"]), (true, true, false));
    let missing: Vec<_> = first.records.iter().filter(|r| r.missing).collect();
    assert_eq!(missing.len(), 1);
    assert!(!missing[0].correct);
    assert_eq!(first.report.total, corpus.len());
    assert_eq!(first.report.missing, 1);

    let again = run_evaluate("oracle", &corpus, &responses, judge, Band::Tight).unwrap();
    assert_eq!(transport.calls(), 3);
    assert_eq!(again, first);

    // The cache doubles as a transcript for a hermetic rerun.
    let fx = dir.path().join("judge-fixtures");
    write_transcript(&fx.join("judge.jsonl"), &judge.cached_exchanges()).unwrap();
    let replay_cfg = PipelineConfig::default().with_fixtures(&fx);
    let replay = Clients::with_transport(&replay_cfg, &dir.path().join("replay"), refuse());
    let replayed = run_evaluate("oracle", &corpus, &responses, replay.get(Role::Judge), Band::Tight).unwrap();
    assert_eq!(replayed, first);
    assert_eq!(replay.upstream_calls(), 0);
}

#[test]
fn invalid_manifests_are_rejected_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.jsonl");
    std::fs::write(&manifest, "{\"image_id\":\"a\",\"width\":0,\"height\":4}\nnot json\n").unwrap();
    let cfg = PipelineConfig::default();
    let out = dir.path().join("out");
    let clients = Clients::with_transport(&cfg, &out, refuse());
    let err = run_generate(&manifest, &cfg, &out, &clients, &Templates::builtin(), &GenerateOptions::default())
        .unwrap_err();
    assert!(err.to_string().contains("line 1"), "{err}");
    assert!(!out.join("ledger.jsonl").exists());
}
