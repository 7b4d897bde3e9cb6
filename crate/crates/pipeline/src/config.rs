//! Pipeline configuration: a TOML file plus `SPATIALVQA_*` environment overrides.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spatialvqa::formats::FilterThresholds;
use spatialvqa::geometry::BoxFitOptions;
use spatialvqa::qa::QaConfig;
use spatialvqa::references::ReferenceConfig;

use crate::client::Role;
use crate::error::PipelineError;

pub const ENV_PREFIX: &str = "SPATIALVQA_";

/// Connection settings for one external service role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    /// HTTP endpoint receiving JSON POST requests.
    pub endpoint: Option<String>,
    /// Directory of recorded transcripts (`{role}.jsonl`); replaces the endpoint.
    pub fixtures: Option<PathBuf>,
    pub timeout_ms: u64,
    pub max_attempts: u32,
    /// First retry delay; doubles per attempt up to `max_backoff_ms`.
    pub backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            endpoint: None,
            fixtures: None,
            timeout_ms: 30_000,
            max_attempts: 3,
            backoff_ms: 250,
            max_backoff_ms: 5_000,
        }
    }
}

impl ClientConfig {
    pub fn is_enabled(&self) -> bool {
        self.endpoint.is_some() || self.fixtures.is_some()
    }
}

/// Image-level filters applied before any processing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub thresholds: FilterThresholds,
    /// Tag vote include set; the vote runs only when this is nonempty.
    pub include_tags: BTreeSet<String>,
    pub exclude_tags: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub workers: usize,
    pub seed: u64,
    /// Response cache for live clients; relative paths resolve against the output directory.
    pub cache_dir: PathBuf,
    pub qa: QaConfig,
    pub references: ReferenceConfig,
    pub box_fit: BoxFitOptions,
    pub filter: FilterConfig,
    /// Keyed by role name (`depth-estimator`, `grounder`, `captioner`, `judge`, `llm-generator`).
    pub clients: BTreeMap<String, ClientConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            workers: 4,
            seed: 0,
            cache_dir: PathBuf::from("cache"),
            qa: QaConfig::default(),
            references: ReferenceConfig::default(),
            box_fit: BoxFitOptions::default(),
            filter: FilterConfig::default(),
            clients: BTreeMap::new(),
        }
    }
}

fn env_role(role: Role) -> String {
    role.as_str().to_uppercase().replace('-', "_")
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Reads `path` (defaults when `None`), applies overrides from `env`, and validates.
    pub fn load<I>(path: Option<&Path>, env: I) -> Result<Self, PipelineError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| PipelineError::io(p, e))?;
                Self::from_toml(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?
            }
            None => PipelineConfig::default(),
        };
        cfg.apply_env(env)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Recognized variables: `SPATIALVQA_WORKERS`, `SPATIALVQA_SEED`, `SPATIALVQA_CACHE_DIR`
    /// and per role `SPATIALVQA_{ROLE}_ENDPOINT` / `SPATIALVQA_{ROLE}_FIXTURES`, with the
    /// role upper-cased and dashes as underscores (`SPATIALVQA_LLM_GENERATOR_ENDPOINT`).
    /// An override naming one of endpoint/fixtures clears the other. Unknown
    /// `SPATIALVQA_` variables are errors.
    pub fn apply_env<I>(&mut self, env: I) -> Result<(), PipelineError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut vars: Vec<(String, String)> =
            env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        vars.sort();
        for (key, value) in vars {
            let name = &key[ENV_PREFIX.len()..];
            let bad = |e: String| PipelineError::Config(format!("{key}={value}: {e}"));
            match name {
                "WORKERS" => self.workers = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "SEED" => self.seed = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "CACHE_DIR" => self.cache_dir = PathBuf::from(&value),
                _ => {
                    let hit = Role::ALL.iter().find_map(|r| {
                        let prefix = env_role(*r);
                        name.strip_prefix(&prefix).and_then(|rest| rest.strip_prefix('_')).map(|field| (*r, field))
                    });
                    let Some((role, field)) = hit else {
                        return Err(bad("unknown setting".into()));
                    };
                    let entry = self.clients.entry(role.as_str().to_string()).or_default();
                    match field {
                        "ENDPOINT" => {
                            entry.endpoint = Some(value.clone());
                            entry.fixtures = None;
                        }
                        "FIXTURES" => {
                            entry.fixtures = Some(PathBuf::from(&value));
                            entry.endpoint = None;
                        }
                        _ => return Err(bad("unknown client setting".into())),
                    }
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.workers == 0 {
            return Err(PipelineError::Config("workers must be at least 1".into()));
        }
        self.qa.sampling.validate().map_err(PipelineError::Config)?;
        for (name, c) in &self.clients {
            if Role::parse(name).is_none() {
                return Err(PipelineError::Config(format!("unknown client role {name:?}")));
            }
            if c.endpoint.is_some() && c.fixtures.is_some() {
                return Err(PipelineError::Config(format!("client {name}: set endpoint or fixtures, not both")));
            }
            if c.max_attempts == 0 {
                return Err(PipelineError::Config(format!("client {name}: max_attempts must be at least 1")));
            }
        }
        Ok(())
    }

    pub fn client(&self, role: Role) -> ClientConfig {
        self.clients.get(role.as_str()).cloned().unwrap_or_default()
    }

    /// Replay-only setup: roles with a `{role}.jsonl` transcript in `dir` replay it, and
    /// every other role is disabled, so no request leaves the process.
    pub fn with_fixtures(mut self, dir: &Path) -> Self {
        for role in Role::ALL {
            let c = self.clients.entry(role.as_str().to_string()).or_default();
            c.endpoint = None;
            c.fixtures = dir.join(format!("{}.jsonl", role.as_str())).is_file().then(|| dir.to_path_buf());
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_env_layers() {
        let text = r#"
workers = 2
seed = 9

[qa]
items_per_image = 10

[qa.guards]
orientation_deg = 25.0

[clients.grounder]
endpoint = "http://localhost:9000/ground"
max_attempts = 5
"#;
        let mut cfg = PipelineConfig::from_toml(text).unwrap();
        assert_eq!((cfg.workers, cfg.seed, cfg.qa.items_per_image), (2, 9, 10));
        assert_eq!(cfg.qa.guards.orientation_deg, 25.0);
        assert_eq!(cfg.qa.guards.direction_deg, 30.0);
        let env = [
            ("SPATIALVQA_SEED", "3"),
            ("SPATIALVQA_GROUNDER_FIXTURES", "/fx"),
            ("SPATIALVQA_LLM_GENERATOR_ENDPOINT", "http://h/llm"),
            ("HOME", "/root"),
        ]
        .map(|(k, v)| (k.to_string(), v.to_string()));
        cfg.apply_env(env).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.seed, 3);
        let g = cfg.client(Role::Grounder);
        assert_eq!((g.endpoint, g.fixtures, g.max_attempts), (None, Some(PathBuf::from("/fx")), 5));
        assert_eq!(cfg.client(Role::LlmGenerator).endpoint.as_deref(), Some("http://h/llm"));
        assert!(!cfg.client(Role::Judge).is_enabled());
    }

    #[test]
    fn rejects_bad_settings() {
        assert!(PipelineConfig::from_toml("wrokers = 2").is_err());
        let mut cfg = PipelineConfig::default();
        assert!(cfg.apply_env([("SPATIALVQA_COLOR".to_string(), "1".to_string())]).is_err());
        assert!(cfg.apply_env([("SPATIALVQA_WORKERS".to_string(), "x".to_string())]).is_err());
        let both = "[clients.judge]\nendpoint = \"http://a\"\nfixtures = \"b\"\n";
        assert!(PipelineConfig::from_toml(both).unwrap().validate().is_err());
        let unknown = "[clients.painter]\nendpoint = \"http://a\"\n";
        assert!(PipelineConfig::from_toml(unknown).unwrap().validate().is_err());
    }
}
