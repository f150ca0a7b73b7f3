//! TOML service configuration. Secrets are never read from this file; the
//! remote providers take them from the environment.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ragforge_core::chunker::{chunk_all, ChunkParams};
use ragforge_core::corpus::read_documents;
use ragforge_core::embed::{read_chunks, IndexRetriever, Retriever, VectorIndex};
use ragforge_core::engine::{GenerationConfig, RagPipeline, SystemClock};
use serde::{Deserialize, Serialize};

use crate::providers::{embedder_from_spec, llm_from_spec};
use crate::service::{ChatService, UuidIds};
use crate::store::{load_events, FileSink, EVENTS_FILE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default = "default_port")]
    pub port: u16,
    /// Directory holding the event log.
    pub data_dir: PathBuf,
    /// Document corpus, used when `index` is absent.
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    /// Saved index; its chunks are read from `<index>.chunks.jsonl`.
    #[serde(default)]
    pub index: Option<PathBuf>,
    /// Directory served at `/` (the web client build).
    #[serde(default)]
    pub static_dir: Option<PathBuf>,
    #[serde(default = "default_llm")]
    pub llm: String,
    #[serde(default = "default_embedder")]
    pub embedder: String,
    #[serde(default)]
    pub embed_dim: Option<usize>,
    #[serde(default)]
    pub chunk_size: Option<usize>,
    #[serde(default)]
    pub chunk_overlap: Option<usize>,
    /// fsync the event log after every record.
    #[serde(default = "default_true")]
    pub sync_writes: bool,
    #[serde(default)]
    pub generation: GenerationConfig,
}

fn default_bind() -> String {
    "127.0.0.1".into()
}

fn default_port() -> u16 {
    8080
}

fn default_llm() -> String {
    "extractive".into()
}

fn default_embedder() -> String {
    "local".into()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("startup failed: {0}")]
    Startup(String),
}

impl ServiceConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let cfg: ServiceConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text, path)?;
        cfg.resolve_relative_to(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data_dir);
        for p in [&mut self.corpus, &mut self.index, &mut self.static_dir].into_iter().flatten() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.corpus.is_none() && self.index.is_none() {
            return Err(ConfigError::Invalid("one of `corpus` or `index` is required".into()));
        }
        self.generation
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.addr()?;
        Ok(())
    }

    pub fn addr(&self) -> Result<SocketAddr, ConfigError> {
        format!("{}:{}", self.bind, self.port)
            .parse()
            .map_err(|e| ConfigError::Invalid(format!("bind address: {e}")))
    }

    pub fn chunk_params(&self) -> Result<ChunkParams, ConfigError> {
        let d = ChunkParams::default();
        ChunkParams::new(
            self.chunk_size.unwrap_or(d.chunk_size),
            self.chunk_overlap.unwrap_or(d.overlap),
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn retriever(&self) -> Result<Arc<dyn Retriever>, ConfigError> {
        let startup = |e: &dyn std::fmt::Display| ConfigError::Startup(e.to_string());
        let embedder = embedder_from_spec(&self.embedder, self.embed_dim).map_err(|e| startup(&e))?;
        let retriever = match (&self.index, &self.corpus) {
            (Some(index_path), _) => {
                let index = VectorIndex::load(index_path).map_err(|e| startup(&e))?;
                let mut chunks_path = index_path.as_os_str().to_owned();
                chunks_path.push(".chunks.jsonl");
                let chunks = read_chunks(Path::new(&chunks_path)).map_err(|e| startup(&e))?;
                IndexRetriever::new(index, chunks, embedder).map_err(|e| startup(&e))?
            }
            (None, Some(corpus)) => {
                let docs = read_documents(corpus).map_err(|e| startup(&e))?;
                let chunks = chunk_all(&docs, self.chunk_params()?).map_err(|e| startup(&e))?;
                IndexRetriever::build(chunks, embedder).map_err(|e| startup(&e))?
            }
            (None, None) => unreachable!("validated"),
        };
        Ok(Arc::new(retriever))
    }

    /// Builds the production service: configured providers, system clock,
    /// random session ids, and the on-disk event log.
    pub fn build_service(&self) -> Result<ChatService, ConfigError> {
        let startup = |e: &dyn std::fmt::Display| ConfigError::Startup(e.to_string());
        let llm = llm_from_spec(&self.llm).map_err(|e| startup(&e))?;
        let pipeline =
            RagPipeline::new(self.retriever()?, llm, self.generation.clone()).map_err(|e| startup(&e))?;
        let log_path = self.data_dir.join(EVENTS_FILE);
        let events = load_events(&log_path).map_err(|e| startup(&e))?;
        let sink = FileSink::open(&log_path, self.sync_writes).map_err(|e| startup(&e))?;
        ChatService::new(
            pipeline,
            events,
            Box::new(sink),
            Box::new(UuidIds),
            Arc::new(SystemClock),
        )
        .map_err(|e| startup(&e))
    }
}
