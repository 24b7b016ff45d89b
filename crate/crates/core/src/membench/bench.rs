//! Benchmark runs: every η level times every mechanism over a dataset.

use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{aggregate_report, run_episode, BenchReport, Clock, EpisodeResult, Mechanism, Retriever};
use super::{ChatResponder, HashedEmbedder, HttpEmbedder, HttpEmbedderConfig, Responder, ScriptedResponder, DEFAULT_BATCHES, DEFAULT_DIM};
use crate::dataset::{mix_eta, Dataset, EtaMode, FillerPool};
use crate::error::{Error, Result};
use crate::hintgen::ReasoningFactor;
use crate::schema::Schema;
use crate::surface::llm::{ChatClient, ClientConfig, Prompts};
use crate::surface::{Reader, TemplateSet};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case", deny_unknown_fields)]
pub enum ResponderConfig {
    #[default]
    Scripted,
    Chat(ClientConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbedderConfig {
    Hashed { dim: usize },
    Http(HttpEmbedderConfig),
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig::Hashed { dim: DEFAULT_DIM }
    }
}

fn default_etas() -> Vec<u32> {
    vec![1]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub mechanisms: Vec<Mechanism>,
    #[serde(default = "default_etas")]
    pub etas: Vec<u32>,
    pub eta_mode: EtaMode,
    pub batches: usize,
    pub seed: u64,
    /// Filler posts for η > 1; the shipped pool when unset.
    pub filler: Option<PathBuf>,
    pub responder: ResponderConfig,
    pub embedder: EmbedderConfig,
    /// Chat backend for LLM retrieval when the responder is scripted.
    pub retrieval_llm: Option<ClientConfig>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            mechanisms: Vec::new(),
            etas: default_etas(),
            eta_mode: EtaMode::Total,
            batches: DEFAULT_BATCHES,
            seed: 0,
            filler: None,
            responder: ResponderConfig::Scripted,
            embedder: EmbedderConfig::default(),
            retrieval_llm: None,
        }
    }
}

impl BenchConfig {
    pub fn check(&self) -> Result<()> {
        if self.mechanisms.is_empty() {
            return Err(Error::Validation("bench config lists no mechanisms".into()));
        }
        if self.etas.is_empty() {
            return Err(Error::Validation("bench config lists no η levels".into()));
        }
        for eta in &self.etas {
            self.eta_mode.fillers(*eta, 1)?;
        }
        self.mechanisms.iter().try_for_each(Mechanism::check)
    }
}

/// Backends built from a config.
pub struct Backends {
    pub responder: Box<dyn Responder>,
    pub retriever: Retriever,
    pub pool: FillerPool,
}

impl Backends {
    pub fn build(cfg: &BenchConfig, schema: &Schema, templates: &TemplateSet, factors: &[ReasoningFactor]) -> Result<Self> {
        let prompts = Prompts::shipped();
        let (responder, chat): (Box<dyn Responder>, Option<Arc<ChatClient>>) = match &cfg.responder {
            ResponderConfig::Scripted => {
                (Box::new(ScriptedResponder::new(Reader::new(schema, templates, factors)?, cfg.seed)), None)
            }
            ResponderConfig::Chat(c) => {
                let client = ChatClient::new(c.clone())?;
                (Box::new(ChatResponder::new(client, prompts.clone())), Some(Arc::new(ChatClient::new(c.clone())?)))
            }
        };
        let chat = match &cfg.retrieval_llm {
            Some(c) => Some(Arc::new(ChatClient::new(c.clone())?)),
            None => chat,
        };
        let embedder: Arc<dyn super::Embedder> = match &cfg.embedder {
            EmbedderConfig::Hashed { dim } => Arc::new(HashedEmbedder::new(*dim)?),
            EmbedderConfig::Http(c) => Arc::new(HttpEmbedder::new(c.clone())?),
        };
        let pool = match &cfg.filler {
            Some(p) => FillerPool::from_file(p)?,
            None => FillerPool::shipped(),
        };
        Ok(Backends { responder, retriever: Retriever { embedder, llm: chat.map(|c| (c, prompts)) }, pool })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    pub report: BenchReport,
    pub episodes: Vec<(u32, EpisodeResult)>,
}

/// Runs every (η, mechanism, trajectory) episode. Episodes run in
/// parallel; each one owns its mechanism instance.
pub fn run_bench(ds: &Dataset, cfg: &BenchConfig, backends: &Backends, clock: &dyn Clock) -> Result<BenchRun> {
    cfg.check()?;
    let mut run = BenchRun { report: BenchReport { batches: cfg.batches, rows: Vec::new() }, ..Default::default() };
    for &eta in &cfg.etas {
        let mixed = mix_eta(ds, &backends.pool, eta, cfg.eta_mode, cfg.seed)?;
        let trajs: Vec<_> = mixed.records().map(|r| &r.trajectory).collect();
        let mut results = Vec::new();
        for &m in &cfg.mechanisms {
            let rs: Vec<EpisodeResult> = trajs
                .par_iter()
                .map(|t| run_episode(t, m, &backends.retriever, backends.responder.as_ref(), clock))
                .collect();
            for r in rs.iter().filter(|r| r.error.is_some()) {
                log::warn!("η={eta} {}: {}", r.id, r.error.as_deref().unwrap_or_default());
            }
            results.extend(rs);
        }
        run.report.rows.extend(aggregate_report(&results, Some(eta), cfg.batches).rows);
        run.episodes.extend(results.into_iter().map(|r| (eta, r)));
    }
    Ok(run)
}
