use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde_json::json;
use spatialvqa::encoding::{patchify, sinusoidal_encode, write_tensor, Linear, CHANNELS, PATCH};
use spatialvqa::eval::Band;
use spatialvqa::formats::{read_pointmap, validate_manifest};
use spatialvqa::oracle::{
    check_item, oracle_answer, read_scene, ManifestOptions, OracleConfig,
};
use spatialvqa::qa::{Templates, Truth};
use spatialvqa::seed::rng_for;
use spatialvqa_pipeline::evaluate::read_responses;
use spatialvqa_pipeline::{
    read_corpus, run_evaluate, run_generate, write_oracle_inputs, Clients, GenerateOptions, PipelineConfig,
    PipelineError, Role,
};

#[derive(Parser)]
#[command(name = "spatialvqa", version, about = "Spatial VQA corpus generation and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replay recorded transcripts from this directory and make no network calls.
    #[arg(long)]
    fixtures: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig, PipelineError> {
        let cfg = PipelineConfig::load(self.config.as_deref(), std::env::vars())?;
        Ok(match &self.fixtures {
            Some(dir) => cfg.with_fixtures(dir),
            None => cfg,
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BandArg {
    Tight,
    Wide,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a QA corpus from a manifest; resumes from an existing output directory.
    Generate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Question templates (TOML); the built-in set when omitted.
        #[arg(long)]
        templates: Option<PathBuf>,
        /// Stop after processing this many images.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        retry_failed: bool,
    },
    /// Score model responses (`{"id", "response"}` lines) against a corpus.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "tight")]
        band: BandArg,
        #[arg(long, default_value = "corpus")]
        benchmark: String,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Synthetic scenes with exact ground truth.
    Oracle {
        #[command(subcommand)]
        command: OracleCommand,
    },
    /// Check a manifest and, optionally, a configuration.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write the sinusoidal encoding of a point map and its patch embedding as tensors.
    EncodeDump {
        #[arg(long)]
        pointmap: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = PATCH)]
        patch: usize,
        /// Seed of the random patch-embedding weights.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Render scenes, a manifest and a question-writer transcript into a directory.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        /// Scene sampler settings (TOML).
        #[arg(long)]
        oracle_config: Option<PathBuf>,
        /// Depth noise in meters; overrides the sampler settings.
        #[arg(long)]
        noise: Option<f64>,
        /// Leave 3D boxes out of the manifest so they are fitted from the point map.
        #[arg(long)]
        fit_boxes: bool,
        /// Pipeline configuration the corpus will be generated with.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare a generated corpus with the oracle's answers.
    Check {
        /// Directory written by `oracle gen`.
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Only check quantities, against the tight ratio band instead of exact values.
        #[arg(long)]
        band: bool,
        /// Lowest agreement rate that passes.
        #[arg(long, default_value_t = 1.0)]
        min_rate: f64,
    },
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("summaries serialize"));
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<(), PipelineError> {
    let bytes = serde_json::to_vec_pretty(v).expect("summaries serialize");
    std::fs::write(path, bytes).map_err(|e| PipelineError::io(path, e))
}

fn load_templates(path: Option<&Path>) -> Result<Templates, PipelineError> {
    match path {
        None => Ok(Templates::builtin()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| PipelineError::io(p, e))?;
            Templates::parse(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn run(cli: Cli) -> Result<bool, PipelineError> {
    match cli.command {
        Command::Generate { manifest, out, cfg, templates, limit, retry_failed } => {
            let cfg = cfg.load()?;
            let templates = load_templates(templates.as_deref())?;
            std::fs::create_dir_all(&out).map_err(|e| PipelineError::io(&out, e))?;
            let clients = Clients::from_config(&cfg, &out);
            let summary = run_generate(&manifest, &cfg, &out, &clients, &templates, &GenerateOptions { limit, retry_failed })?;
            write_json(&out.join("summary.json"), &summary)?;
            print_json(&summary);
            Ok(summary.failed == 0)
        }
        Command::Evaluate { corpus, responses, out, band, benchmark, cfg } => {
            let cfg = cfg.load()?;
            let band = match band {
                BandArg::Tight => Band::Tight,
                BandArg::Wide => Band::Wide,
            };
            std::fs::create_dir_all(&out).map_err(|e| PipelineError::io(&out, e))?;
            let clients = Clients::from_config(&cfg, &out);
            let items = read_corpus(&corpus)?;
            let responses = read_responses(&responses)?;
            let ev = run_evaluate(&benchmark, &items, &responses, clients.get(Role::Judge), band)?;
            let mut lines = Vec::new();
            for r in &ev.records {
                serde_json::to_writer(&mut lines, r).expect("records serialize");
                lines.push(b'\n');
            }
            let records = out.join("records.jsonl");
            std::fs::write(&records, lines).map_err(|e| PipelineError::io(&records, e))?;
            write_json(&out.join("report.json"), &ev.report)?;
            for row in &ev.report.rows {
                let acc = row.accuracy.map_or("-".to_string(), |a| format!("{:.2}", 100.0 * a));
                println!("{:<8} {:<28} {:>7} {:>7}", format!("{:?}", row.grouping).to_lowercase(), row.key, row.n, acc);
            }
            if ev.unknown_responses > 0 {
                eprintln!("{} responses match no corpus item", ev.unknown_responses);
            }
            Ok(true)
        }
        Command::Oracle { command } => oracle(command),
        Command::Validate { manifest, config } => {
            if let Some(c) = &config {
                PipelineConfig::load(Some(c), std::env::vars())?;
            }
            let report = validate_manifest(&manifest)?;
            for v in &report.violations {
                println!("line {}: {}", v.line, v.message);
            }
            println!("{} images, {} violations", report.images, report.violations.len());
            Ok(report.is_ok())
        }
        Command::EncodeDump { pointmap, out, patch, seed } => {
            let pm = read_pointmap(&pointmap)?.map;
            let enc = sinusoidal_encode(&pm);
            std::fs::create_dir_all(&out).map_err(|e| PipelineError::io(&out, e))?;
            let err = |e: spatialvqa::encoding::EncodingError| PipelineError::Other(e.to_string());
            write_tensor(out.join("encoded.tnsr"), &[enc.height, enc.width, CHANNELS], &enc.data).map_err(err)?;
            let in_dim = Linear::patch_input_dim(patch);
            let out_dim = spatialvqa::encoding::FEATURE_DIM;
            let mut rng = rng_for(seed, "patch-embedding");
            let scale = (1.0 / in_dim as f32).sqrt();
            let weight = (0..in_dim * out_dim).map(|_| rng.random_range(-scale..scale)).collect();
            let lin = Linear::new(in_dim, out_dim, weight, vec![0.0; out_dim]).map_err(err)?;
            let grid = patchify(&enc, &lin, patch).map_err(err)?;
            write_tensor(out.join("patches.tnsr"), &[grid.rows, grid.cols, grid.dim], &grid.data).map_err(err)?;
            print_json(&json!({
                "encoded": [enc.height, enc.width, CHANNELS],
                "patches": [grid.rows, grid.cols, grid.dim],
            }));
            Ok(true)
        }
    }
}

fn oracle(command: OracleCommand) -> Result<bool, PipelineError> {
    match command {
        OracleCommand::Gen { out, count, first_seed, oracle_config, noise, fit_boxes, config } => {
            let mut ocfg = match &oracle_config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| PipelineError::io(p, e))?;
                    toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?
                }
                None => OracleConfig::default(),
            };
            if let Some(s) = noise {
                ocfg.noise_sigma = s;
            }
            let cfg = PipelineConfig::load(config.as_deref(), std::env::vars())?;
            let opts = ManifestOptions { with_boxes: !fit_boxes, with_captions: true };
            let r = write_oracle_inputs(&out, first_seed..first_seed + count, &ocfg, &opts, &cfg)?;
            print_json(&json!({ "scenes": r.entries.len(), "transcript": r.exchanges }));
            Ok(true)
        }
        OracleCommand::Check { scenes, corpus, config, band, min_rate } => {
            let cfg = PipelineConfig::load(config.as_deref(), std::env::vars())?;
            let items = read_corpus(&corpus)?;
            let mut loaded = BTreeMap::new();
            let (mut checked, mut agree) = (0usize, 0usize);
            let mut shown = 0;
            for item in &items {
                if !loaded.contains_key(&item.image_id) {
                    let s = read_scene(&scenes.join(format!("{}.scene.json", item.image_id)))?;
                    loaded.insert(item.image_id.clone(), s);
                }
                let scene = &loaded[&item.image_id];
                let ok = if band {
                    let Truth::Quantity { value } = item.truth else { continue };
                    match oracle_answer(scene, item, &cfg.qa.guards) {
                        Ok(Truth::Quantity { value: gt }) => (0.75..=1.25).contains(&(value / gt)),
                        _ => false,
                    }
                } else {
                    let c = check_item(scene, item, &cfg.qa.guards);
                    if let (Some(m), true) = (&c.mismatch, shown < 20) {
                        eprintln!("{}: {m}", item.id);
                        shown += 1;
                    }
                    c.mismatch.is_none()
                };
                checked += 1;
                agree += ok as usize;
            }
            let rate = if checked == 0 { 0.0 } else { agree as f64 / checked as f64 };
            print_json(&json!({ "items": checked, "agree": agree, "rate": rate }));
            Ok(checked > 0 && rate >= min_rate)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
