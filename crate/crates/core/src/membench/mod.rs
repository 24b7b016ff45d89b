//! Benchmark harness: replays trajectories against memory mechanisms and
//! measures accuracy, Recall@5 and timing.

mod bench;
mod embed;
mod report;
mod responder;

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hintgen::QaType;
use crate::qa::{Message, Trajectory};
use crate::surface::llm::{ChatClient, Prompts};

pub use bench::{run_bench, Backends, BenchConfig, BenchRun, EmbedderConfig, ResponderConfig};
pub use embed::{cosine, Embedder, HashedEmbedder, HttpEmbedder, HttpEmbedderConfig, DEFAULT_DIM, EMBED_TOKEN_ENV};
pub use report::{aggregate_report, BenchReport, ReportRow, Stat, DEFAULT_BATCHES};
pub use responder::{memory_prompt, parse_letter, ChatResponder, Responder, ScriptedResponder};

pub const RECALL_K: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMethod {
    Embedding,
    Recency,
    Llm,
}

/// How an agent stores messages and what it shows the responder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Mechanism {
    /// Every message.
    Full,
    /// The latest `k` messages.
    Recent { k: usize },
    /// The `k` messages most relevant to the question.
    Retrieved { k: usize, method: RetrievalMethod },
    /// Nothing.
    None,
    /// Only the messages outside the retrieval target.
    Noisy,
    /// Only the retrieval target.
    Oracle,
}

impl Mechanism {
    pub fn check(&self) -> Result<()> {
        match self {
            Mechanism::Recent { k: 0 } | Mechanism::Retrieved { k: 0, .. } => {
                Err(Error::Config(format!("{self}: k must be at least 1")))
            }
            _ => Ok(()),
        }
    }

    /// Whether the mechanism selects messages, so recall is defined.
    pub fn retrieves(&self) -> bool {
        matches!(self, Mechanism::Recent { .. } | Mechanism::Retrieved { .. })
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mechanism::Full => write!(f, "full"),
            Mechanism::Recent { k } => write!(f, "recent({k})"),
            Mechanism::Retrieved { k, method } => {
                let m = match method {
                    RetrievalMethod::Embedding => "embedding",
                    RetrievalMethod::Recency => "recency",
                    RetrievalMethod::Llm => "llm",
                };
                write!(f, "retrieved({k}, {m})")
            }
            Mechanism::None => write!(f, "none"),
            Mechanism::Noisy => write!(f, "noisy"),
            Mechanism::Oracle => write!(f, "oracle"),
        }
    }
}

/// Monotonic time source, injectable so tests can fix durations.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
}

pub struct SystemClock(Instant);

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock(Instant::now())
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.0.elapsed()
    }
}

/// Advances by a fixed step on every reading.
pub struct FakeClock {
    nanos: AtomicU64,
    step: u64,
}

impl FakeClock {
    pub fn new(step: Duration) -> Self {
        FakeClock { nanos: AtomicU64::new(0), step: step.as_nanos() as u64 }
    }
}

impl Clock for FakeClock {
    fn now(&self) -> Duration {
        Duration::from_nanos(self.nanos.fetch_add(self.step, Ordering::SeqCst))
    }
}

/// Backends the retrieval methods need.
#[derive(Clone)]
pub struct Retriever {
    pub embedder: Arc<dyn Embedder>,
    pub llm: Option<(Arc<ChatClient>, Prompts)>,
}

impl Default for Retriever {
    fn default() -> Self {
        Retriever { embedder: Arc::new(HashedEmbedder::default()), llm: None }
    }
}

/// Top-`k` by cosine to the query, ties to the lower index.
pub fn rank_by_embedding(embeddings: &[Vec<f32>], query: &[f32], k: usize) -> Result<Vec<usize>> {
    let mut scored: Vec<(f64, usize)> =
        embeddings.iter().enumerate().map(|(i, e)| Ok((cosine(e, query)?, i))).collect::<Result<_>>()?;
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().take(k).map(|(_, i)| i).collect())
}

/// The latest `k` by timestamp, latest first; ties to the higher index.
pub fn rank_by_recency(times: &[chrono::NaiveDateTime], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..times.len()).collect();
    idx.sort_by(|&a, &b| times[b].cmp(&times[a]).then(b.cmp(&a)));
    idx.truncate(k);
    idx
}

/// Message numbers from a model reply. Anything that is not a valid,
/// unseen index below `n` is dropped.
pub fn parse_indices(reply: &str, n: usize, k: usize) -> Vec<usize> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for tok in reply.split(|c: char| !c.is_ascii_digit()).filter(|t| !t.is_empty()) {
        match tok.parse::<usize>() {
            Ok(i) if i < n && seen.insert(i) => out.push(i),
            _ => log::debug!("dropping index `{tok}` from retrieval reply"),
        }
        if out.len() == k {
            break;
        }
    }
    out
}

impl Retriever {
    /// Indices into `messages`, most relevant first.
    pub fn retrieve_topk(
        &self,
        item: &str,
        messages: &[Message],
        embeddings: &[Vec<f32>],
        question: &str,
        method: RetrievalMethod,
        k: usize,
    ) -> Result<Vec<usize>> {
        if messages.is_empty() {
            return Ok(Vec::new());
        }
        match method {
            RetrievalMethod::Recency => {
                Ok(rank_by_recency(&messages.iter().map(|m| m.time).collect::<Vec<_>>(), k))
            }
            RetrievalMethod::Embedding => {
                let q = self.embedder.embed(&[question])?.pop().unwrap_or_default();
                rank_by_embedding(embeddings, &q, k)
            }
            RetrievalMethod::Llm => {
                let (client, prompts) = self
                    .llm
                    .as_ref()
                    .ok_or_else(|| Error::Config("llm retrieval needs a chat backend".into()))?;
                let listed: Vec<String> = messages.iter().enumerate().map(|(i, m)| format!("{i}. {}", m.text)).collect();
                let (system, user) = prompts.retrieval(&listed.join("\n"), question, k)?;
                let reply = client.complete(item, &system, &user)?;
                Ok(parse_indices(&reply, messages.len(), k))
            }
        }
    }
}

/// Fraction of the target found among the first `k` retrieved.
pub fn recall_at_k(retrieved: &[usize], target: &[usize], k: usize) -> f64 {
    if target.is_empty() {
        return 0.0;
    }
    let top: BTreeSet<usize> = retrieved.iter().take(k).copied().collect();
    let target: BTreeSet<usize> = target.iter().copied().collect();
    top.intersection(&target).count() as f64 / target.len() as f64
}

/// One mechanism instance, confined to one episode.
struct Store<'a> {
    mechanism: Mechanism,
    retriever: &'a Retriever,
    messages: Vec<Message>,
    /// Trajectory index of each stored message.
    origin: Vec<usize>,
    embeddings: Vec<Vec<f32>>,
    window: VecDeque<usize>,
}

impl<'a> Store<'a> {
    fn new(mechanism: Mechanism, retriever: &'a Retriever) -> Self {
        Store { mechanism, retriever, messages: Vec::new(), origin: Vec::new(), embeddings: Vec::new(), window: VecDeque::new() }
    }

    fn store(&mut self, m: &Message, is_target: bool) -> Result<()> {
        match self.mechanism {
            Mechanism::None => return Ok(()),
            Mechanism::Oracle if !is_target => return Ok(()),
            Mechanism::Noisy if is_target => return Ok(()),
            _ => {}
        }
        if let Mechanism::Retrieved { method: RetrievalMethod::Embedding, .. } = self.mechanism {
            self.embeddings.push(self.retriever.embedder.embed(&[&m.text])?.pop().unwrap_or_default());
        }
        self.messages.push(m.clone());
        self.origin.push(m.index);
        if let Mechanism::Recent { k } = self.mechanism {
            self.window.push_back(self.messages.len() - 1);
            if self.window.len() > k {
                self.window.pop_front();
            }
        }
        Ok(())
    }

    /// The memory shown to the responder, in stored order, and the
    /// selection as trajectory indices in rank order when it is a ranking.
    fn recall(&self, item: &str, question: &str) -> Result<(Vec<&Message>, Option<Vec<usize>>)> {
        let picked: Vec<usize> = match self.mechanism {
            Mechanism::Recent { .. } => self.window.iter().rev().copied().collect(),
            Mechanism::Retrieved { k, method } => {
                self.retriever.retrieve_topk(item, &self.messages, &self.embeddings, question, method, k)?
            }
            _ => return Ok((self.messages.iter().collect(), None)),
        };
        let ranked = picked.iter().map(|&i| self.origin[i]).collect();
        let mut ordered = picked;
        ordered.sort_unstable();
        Ok((ordered.into_iter().map(|i| &self.messages[i]).collect(), Some(ranked)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub id: String,
    pub qa_type: QaType,
    pub mechanism: Mechanism,
    pub chosen_index: Option<usize>,
    pub correct: bool,
    /// Selected trajectory indices, most relevant first.
    pub retrieved: Option<Vec<usize>>,
    /// Not applicable for mechanisms that do not select messages.
    pub recall_at_5: Option<f64>,
    pub target_size: usize,
    pub response_seconds: f64,
    pub adaptation_seconds_per_message: f64,
    /// Why the episode produced no answer; such episodes are excluded from
    /// the metrics and counted separately.
    pub error: Option<String>,
}

/// Stores the messages one by one, then asks the question.
pub fn run_episode(
    t: &Trajectory,
    mechanism: Mechanism,
    retriever: &Retriever,
    responder: &dyn Responder,
    clock: &dyn Clock,
) -> EpisodeResult {
    let mut result = EpisodeResult {
        id: t.id.clone(),
        qa_type: t.qa_type,
        mechanism,
        chosen_index: None,
        correct: false,
        retrieved: None,
        recall_at_5: None,
        target_size: t.retrieval_target.len(),
        response_seconds: 0.0,
        adaptation_seconds_per_message: 0.0,
        error: None,
    };
    let item = format!("{}/{mechanism}", t.id);
    let targets: BTreeSet<usize> = t.retrieval_target.iter().copied().collect();
    let mut store = Store::new(mechanism, retriever);
    let mut adapting = Duration::ZERO;
    for m in &t.messages {
        let start = clock.now();
        let stored = store.store(m, targets.contains(&m.index));
        adapting += clock.now().saturating_sub(start);
        if let Err(e) = stored {
            result.error = Some(e.to_string());
            return result;
        }
    }
    if !t.messages.is_empty() {
        result.adaptation_seconds_per_message = adapting.as_secs_f64() / t.messages.len() as f64;
    }

    let start = clock.now();
    let answered = store.recall(&item, &t.question).and_then(|(memory, ranked)| {
        let chosen = responder.choose(&item, &memory, &t.question, &t.choices)?;
        Ok((chosen, ranked))
    });
    result.response_seconds = clock.now().saturating_sub(start).as_secs_f64();
    match answered {
        Ok((chosen, ranked)) => {
            result.chosen_index = Some(chosen);
            result.correct = chosen == t.correct_choice;
            if let Some(r) = &ranked {
                result.recall_at_5 = Some(recall_at_k(r, &t.retrieval_target, RECALL_K));
            }
            result.retrieved = ranked;
        }
        Err(e) => result.error = Some(e.to_string()),
    }
    result
}
