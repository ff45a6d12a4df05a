//! Configuration: defaults, overridden by a TOML file, overridden by
//! `MATHSEARCH_*` environment variables. Command-line flags win over all
//! three.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use mathsearch::provider::{MockEmbedder, MockGenerator, RemoteConfig, RemoteEmbedder, RemoteGenerator};
use mathsearch::{Embedder, HnswParams, PresetPair, TextGenerator};
use serde::{Deserialize, Serialize};

pub const ENV_PREFIX: &str = "MATHSEARCH_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub listen: String,
    /// Directory holding the pipeline manifest and stage outputs.
    pub artifacts: PathBuf,
    pub index_path: Option<PathBuf>,
    pub corpus_path: Option<PathBuf>,
    pub informal_path: Option<PathBuf>,
    pub default_k: usize,
    pub augment: bool,
    pub request_timeout_secs: f64,
    pub max_query_chars: usize,
    pub cors: bool,
    /// Put `timing_ms` in search bodies. Off by default so identical requests
    /// get identical bodies; the timing is always sent as a header.
    pub timing_in_body: bool,
    pub preset: String,
    pub mock_providers: bool,
    pub mock_dim: usize,
    pub concurrency: usize,
    pub hnsw: HnswSettings,
    pub generation: Option<ProviderSection>,
    pub embedding: Option<ProviderSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HnswSettings {
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
}

impl Default for HnswSettings {
    fn default() -> Self {
        let p = HnswParams::default();
        HnswSettings {
            m: p.m,
            ef_construction: p.ef_construction,
            ef_search: p.ef_search,
            seed: p.seed,
        }
    }
}

impl HnswSettings {
    pub fn params(&self) -> HnswParams {
        HnswParams {
            ef_construction: self.ef_construction,
            ef_search: self.ef_search,
            seed: self.seed,
            ..HnswParams::with_m(self.m)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSection {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout_secs: Option<f64>,
    /// Embedding dimension; ignored for generation.
    pub dim: Option<usize>,
}

impl ProviderSection {
    fn remote(&self, what: &str) -> anyhow::Result<RemoteConfig> {
        if self.endpoint.is_empty() || self.model.is_empty() {
            bail!("{what} provider needs both `endpoint` and `model`");
        }
        Ok(RemoteConfig {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            api_key: self.api_key.clone(),
            timeout_secs: self.timeout_secs.unwrap_or(20.0),
        })
    }
}

impl Default for Config {
    fn default() -> Self {
        Config {
            listen: "127.0.0.1:8080".into(),
            artifacts: PathBuf::from("artifacts"),
            index_path: None,
            corpus_path: None,
            informal_path: None,
            default_k: 20,
            augment: true,
            request_timeout_secs: 30.0,
            max_query_chars: 2000,
            cors: false,
            timing_in_body: false,
            preset: "bilingual".into(),
            mock_providers: false,
            mock_dim: 256,
            concurrency: 4,
            hnsw: HnswSettings::default(),
            generation: None,
            embedding: None,
        }
    }
}

fn parse_env<T: std::str::FromStr>(name: &str, value: &str) -> anyhow::Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow::anyhow!("{ENV_PREFIX}{name}={value:?}: {e}"))
}

fn parse_bool(name: &str, value: &str) -> anyhow::Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => bail!("{ENV_PREFIX}{name}={value:?}: expected a boolean"),
    }
}

impl Config {
    /// Reads `path` if given, then applies environment overrides looked up
    /// through `env` (which receives names without the prefix).
    pub fn load(path: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> anyhow::Result<Config> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("invalid config {}", p.display()))?
            }
            None => Config::default(),
        };
        config.apply_env(env)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_process_env(path: Option<&Path>) -> anyhow::Result<Config> {
        Config::load(path, |name| std::env::var(format!("{ENV_PREFIX}{name}")).ok())
    }

    fn apply_env(&mut self, env: impl Fn(&str) -> Option<String>) -> anyhow::Result<()> {
        let get = |name: &str| env(name).filter(|v| !v.is_empty());
        if let Some(v) = get("LISTEN") {
            self.listen = v;
        }
        if let Some(v) = get("ARTIFACTS") {
            self.artifacts = v.into();
        }
        if let Some(v) = get("INDEX_PATH") {
            self.index_path = Some(v.into());
        }
        if let Some(v) = get("CORPUS_PATH") {
            self.corpus_path = Some(v.into());
        }
        if let Some(v) = get("INFORMAL_PATH") {
            self.informal_path = Some(v.into());
        }
        if let Some(v) = get("DEFAULT_K") {
            self.default_k = parse_env("DEFAULT_K", &v)?;
        }
        if let Some(v) = get("AUGMENT") {
            self.augment = parse_bool("AUGMENT", &v)?;
        }
        if let Some(v) = get("REQUEST_TIMEOUT_SECS") {
            self.request_timeout_secs = parse_env("REQUEST_TIMEOUT_SECS", &v)?;
        }
        if let Some(v) = get("MAX_QUERY_CHARS") {
            self.max_query_chars = parse_env("MAX_QUERY_CHARS", &v)?;
        }
        if let Some(v) = get("CORS") {
            self.cors = parse_bool("CORS", &v)?;
        }
        if let Some(v) = get("PRESET") {
            self.preset = v;
        }
        if let Some(v) = get("MOCK_PROVIDERS") {
            self.mock_providers = parse_bool("MOCK_PROVIDERS", &v)?;
        }
        for (prefix, section) in [("GENERATION", &mut self.generation), ("EMBEDDING", &mut self.embedding)] {
            let field = |f: &str| get(&format!("{prefix}_{f}"));
            let endpoint = field("ENDPOINT");
            let model = field("MODEL");
            let api_key = field("API_KEY");
            let timeout = field("TIMEOUT_SECS");
            let dim = field("DIM");
            if endpoint.is_none() && model.is_none() && api_key.is_none() && timeout.is_none() && dim.is_none() {
                continue;
            }
            let s = section.get_or_insert_with(ProviderSection::default);
            if let Some(v) = endpoint {
                s.endpoint = v;
            }
            if let Some(v) = model {
                s.model = v;
            }
            if let Some(v) = api_key {
                s.api_key = Some(v);
            }
            if let Some(v) = timeout {
                s.timeout_secs = Some(parse_env(&format!("{prefix}_TIMEOUT_SECS"), &v)?);
            }
            if let Some(v) = dim {
                s.dim = Some(parse_env(&format!("{prefix}_DIM"), &v)?);
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.max_query_chars < 1 {
            bail!("max_query_chars must be at least 1");
        }
        if !(1..=100).contains(&self.default_k) {
            bail!("default_k must be between 1 and 100, got {}", self.default_k);
        }
        if !(self.request_timeout_secs.is_finite() && self.request_timeout_secs > 0.0) {
            bail!("request_timeout_secs must be positive");
        }
        if self.concurrency < 1 {
            bail!("concurrency must be at least 1");
        }
        if self.mock_dim < 8 {
            bail!("mock_dim must be at least 8");
        }
        self.presets()?;
        self.hnsw.params().validate()?;
        Ok(())
    }

    pub fn presets(&self) -> anyhow::Result<PresetPair> {
        PresetPair::named(&self.preset).with_context(|| {
            let known: Vec<_> = PresetPair::names().collect();
            format!("unknown preset `{}` (known: {})", self.preset, known.join(", "))
        })
    }

    pub fn generator(&self) -> anyhow::Result<Arc<dyn TextGenerator>> {
        if self.mock_providers {
            return Ok(Arc::new(MockGenerator));
        }
        let section = self
            .generation
            .as_ref()
            .context("no generation provider configured (set [generation] or use --mock-providers)")?;
        Ok(Arc::new(RemoteGenerator::new(section.remote("generation")?)?))
    }

    pub fn embedder(&self) -> anyhow::Result<Arc<dyn Embedder>> {
        if self.mock_providers {
            return Ok(Arc::new(MockEmbedder::new(self.mock_dim)));
        }
        let section = self
            .embedding
            .as_ref()
            .context("no embedding provider configured (set [embedding] or use --mock-providers)")?;
        let dim = section.dim.context("embedding provider needs `dim`")?;
        Ok(Arc::new(RemoteEmbedder::new(section.remote("embedding")?, dim)?))
    }
}
