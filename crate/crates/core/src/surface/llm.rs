//! Chat-completion client and the features built on it: value-checked
//! rewriting of template text, and a generator for external CPDs.
//!
//! The wire format is the common chat-completion exchange: a JSON body with
//! `model` and a `messages` array goes in, `choices[0].message.content`
//! comes out. The bearer token is read from an environment variable.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, ExternalKind, Result};
use crate::rng::Stream;
use crate::sampler::{GenRequest, Generator};
use crate::text::contains_verbatim;

use super::Template;

/// Prompts for every backend call, editable as data.
pub const PROMPTS: &str = include_str!("../../data/prompts.toml");

pub const TOKEN_ENV: &str = "MEMSIM_LLM_TOKEN";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub token_env: String,
    pub timeout_secs: f64,
    pub max_in_flight: usize,
    /// Extra attempts after a transport error or timeout.
    pub retries: usize,
    pub backoff_ms: u64,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            endpoint: String::new(),
            model: String::new(),
            token_env: TOKEN_ENV.to_string(),
            timeout_secs: 30.0,
            max_in_flight: 4,
            retries: 3,
            backoff_ms: 500,
        }
    }
}

impl ClientConfig {
    pub fn check(&self) -> Result<()> {
        if self.endpoint.is_empty() {
            return Err(Error::Config("chat client needs an endpoint".into()));
        }
        if self.timeout_secs.is_nan() || self.timeout_secs <= 0.0 {
            return Err(Error::Config("chat client timeout must be positive".into()));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config("chat client max_in_flight must be at least 1".into()));
        }
        Ok(())
    }
}

/// Counting semaphore bounding concurrent requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Gate { free: Mutex::new(n), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct ChatClient {
    config: ClientConfig,
    agent: ureq::Agent,
    token: Option<String>,
    gate: Gate,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
}

impl std::fmt::Debug for ChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatClient").field("config", &self.config).field("token", &self.token.is_some()).finish()
    }
}

impl ChatClient {
    pub fn new(config: ClientConfig) -> Result<Self> {
        config.check()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let token = std::env::var(&config.token_env).ok().filter(|t| !t.is_empty());
        let gate = Gate::new(config.max_in_flight);
        Ok(ChatClient { config, agent, token, gate, in_flight: AtomicUsize::new(0), peak_in_flight: AtomicUsize::new(0) })
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    /// Most requests seen in flight at once so far.
    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    /// One completion. `item` names the work item in errors.
    pub fn complete(&self, item: &str, system: &str, user: &str) -> Result<String> {
        let body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        let v = self.post(item, &body)?;
        v.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(|s| s.trim().to_string())
            .ok_or_else(|| Error::External {
                item: item.to_string(),
                kind: ExternalKind::Protocol,
                detail: "response has no choices[0].message.content".into(),
            })
    }

    /// POSTs a JSON body to the endpoint, retried with exponential backoff
    /// on transport errors and timeouts.
    pub fn post(&self, item: &str, body: &serde_json::Value) -> Result<serde_json::Value> {
        let mut attempt = 0;
        loop {
            match self.post_once(item, body) {
                Err(Error::External { kind: ExternalKind::Transport | ExternalKind::Timeout, .. })
                    if attempt < self.config.retries =>
                {
                    let wait = self.config.backoff_ms.saturating_mul(1 << attempt.min(16));
                    log::warn!("{item}: request failed, retrying in {wait} ms");
                    std::thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn post_once(&self, item: &str, body: &serde_json::Value) -> Result<serde_json::Value> {
        let fail = |kind, detail: String| Error::External { item: item.to_string(), kind, detail };
        let _permit = self.gate.acquire();
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let result = req.send_json(body);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        let mut resp = result.map_err(|e| match e {
            ureq::Error::Timeout(_) => fail(ExternalKind::Timeout, e.to_string()),
            other => fail(ExternalKind::Transport, other.to_string()),
        })?;
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => return Err(fail(ExternalKind::Auth, format!("HTTP {status}"))),
            429 | 500..=599 => return Err(fail(ExternalKind::Transport, format!("HTTP {status}"))),
            _ => return Err(fail(ExternalKind::Protocol, format!("HTTP {status}"))),
        }
        resp.body_mut().read_json().map_err(|e| fail(ExternalKind::Protocol, e.to_string()))
    }
}

#[derive(Clone, Debug, Deserialize)]
struct PromptPair {
    system: String,
    #[serde(flatten)]
    rest: BTreeMap<String, String>,
}

/// The prompt file, by section.
#[derive(Clone, Debug, Deserialize)]
pub struct Prompts {
    rewrite: PromptPair,
    generators: PromptPair,
    retrieval: PromptPair,
    answer: PromptPair,
}

impl Prompts {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("prompts: {e}")))
    }

    pub fn shipped() -> Self {
        Self::from_toml(PROMPTS).expect("shipped prompts parse")
    }

    fn fill(section: &PromptPair, key: &str, vars: &[(&str, String)]) -> Result<(String, String)> {
        let src = section.rest.get(key).ok_or_else(|| Error::Config(format!("prompt `{key}` missing")))?;
        let vars: BTreeMap<&str, String> = vars.iter().cloned().collect();
        Ok((section.system.clone(), Template::parse(src)?.render(&vars)?))
    }

    pub fn retrieval(&self, messages: &str, question: &str, k: usize) -> Result<(String, String)> {
        Self::fill(&self.retrieval, "user", &[("messages", messages.into()), ("question", question.into()), ("k", k.to_string())])
    }

    pub fn answer(&self, memory: &str, question: &str, choices: &str) -> Result<(String, String)> {
        Self::fill(&self.answer, "user", &[("memory", memory.into()), ("question", question.into()), ("choices", choices.into())])
    }
}

/// Outcome of one rewrite: the accepted paraphrase or the template text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rewrite {
    Accepted(String),
    Fallback(String),
}

impl Rewrite {
    pub fn text(&self) -> &str {
        match self {
            Rewrite::Accepted(s) | Rewrite::Fallback(s) => s,
        }
    }
}

/// What a rewrite must and must not contain to be accepted.
#[derive(Clone, Debug, Default)]
pub struct Checks {
    pub keep: Vec<String>,
    pub forbid: Vec<String>,
    /// The output must end with this text (the factual clause of a noisy question).
    pub suffix: Option<String>,
}

impl Checks {
    pub fn accepts(&self, text: &str) -> bool {
        !text.is_empty()
            && self.keep.iter().all(|k| contains_verbatim(text, k))
            && !self.forbid.iter().any(|f| contains_verbatim(text, f))
            && self.suffix.as_ref().is_none_or(|s| text.trim_end().ends_with(s.as_str()))
    }
}

#[derive(Debug, Default)]
pub struct RewriteStats {
    pub requests: AtomicUsize,
    pub accepted: AtomicUsize,
    pub fallbacks: AtomicUsize,
}

/// Paraphrases template text through a chat model, keeping only outputs that
/// pass their checks; after `budget` failed attempts the template text is
/// used and counted as a fallback.
pub struct Rewriter {
    client: ChatClient,
    prompts: Prompts,
    budget: usize,
    pub stats: RewriteStats,
}

impl Rewriter {
    pub fn new(client: ChatClient, prompts: Prompts, budget: usize) -> Self {
        Rewriter { client, prompts, budget: budget.max(1), stats: RewriteStats::default() }
    }

    /// `kind` is one of the `[rewrite]` prompts: message, question, noisy.
    pub fn rewrite(&self, item: &str, kind: &str, text: &str, checks: &Checks) -> Result<Rewrite> {
        let keep = checks.keep.iter().map(|k| format!("\"{k}\"")).collect::<Vec<_>>().join(", ");
        let (system, user) = Prompts::fill(&self.prompts.rewrite, kind, &[("text", text.into()), ("keep", keep)])?;
        for _ in 0..self.budget {
            self.stats.requests.fetch_add(1, Ordering::Relaxed);
            let out = self.client.complete(item, &system, &user)?;
            let out = out.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" ");
            if checks.accepts(&out) {
                self.stats.accepted.fetch_add(1, Ordering::Relaxed);
                return Ok(Rewrite::Accepted(out));
            }
            log::debug!("{item}: rewrite rejected: {out}");
        }
        self.stats.fallbacks.fetch_add(1, Ordering::Relaxed);
        Ok(Rewrite::Fallback(text.to_string()))
    }
}

/// Resolves external CPDs by asking the chat model.
pub struct LlmGenerator {
    client: ChatClient,
    prompts: Prompts,
}

impl LlmGenerator {
    pub fn new(client: ChatClient, prompts: Prompts) -> Self {
        LlmGenerator { client, prompts }
    }
}

impl Generator for LlmGenerator {
    fn generate(&self, req: &GenRequest<'_>, _rng: &mut Stream) -> Result<String> {
        let parents =
            req.parents.iter().map(|(id, v)| format!("{id} = {v}")).collect::<Vec<_>>().join("; ");
        let attribute = req.target.rsplit('.').next().unwrap_or(req.target).replace('_', " ");
        let key = if self.prompts.generators.rest.contains_key(req.template) { req.template } else { "default" };
        let (system, user) = Prompts::fill(
            &self.prompts.generators,
            key,
            &[("attribute", attribute), ("entity_type", req.entity_type.replace('_', " ")), ("parents", parents)],
        )?;
        let out = self.client.complete(req.target, &system, &user)?;
        let line = out.lines().next().unwrap_or("").trim().trim_matches('"').to_string();
        if line.is_empty() {
            return Err(Error::External {
                item: req.target.to_string(),
                kind: ExternalKind::Protocol,
                detail: "empty generation".into(),
            });
        }
        Ok(line)
    }
}

#[cfg(test)]
pub(crate) mod mock {
    //! A one-route HTTP server answering chat requests from a script.

    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};

    pub struct MockServer {
        pub url: String,
        pub requests: Arc<Mutex<Vec<serde_json::Value>>>,
    }

    /// Serves `replies` in order as (status, chat content) pairs, then repeats the last.
    pub fn serve(replies: Vec<(u16, String)>) -> MockServer {
        serve_json(
            replies
                .into_iter()
                .map(|(s, c)| (s, serde_json::json!({"choices": [{"message": {"role": "assistant", "content": c}}]})))
                .collect(),
        )
    }

    /// Like [`serve`] with whole JSON response bodies.
    pub fn serve_json(replies: Vec<(u16, serde_json::Value)>) -> MockServer {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let seen = requests.clone();
        std::thread::spawn(move || {
            for (i, stream) in listener.incoming().enumerate() {
                let Ok(mut stream) = stream else { break };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                }
                let mut body = vec![0; len];
                let _ = reader.read_exact(&mut body);
                seen.lock().unwrap().push(serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null));
                let (status, payload) = replies[i.min(replies.len() - 1)].clone();
                let text = payload.to_string();
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                    text.len()
                );
            }
        });
        MockServer { url, requests }
    }
}
