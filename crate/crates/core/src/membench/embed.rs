//! Message embeddings and cosine similarity.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, ExternalKind, Result};
use crate::rng::fnv1a64;
use crate::surface::llm::{ChatClient, ClientConfig};
use crate::text::tokenize;

pub const DEFAULT_DIM: usize = 768;
pub const EMBED_TOKEN_ENV: &str = "MEMSIM_EMBED_TOKEN";

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>>;
}

/// Words too common to say anything about relevance.
const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "at", "be", "by", "did", "do", "does", "for", "from", "has", "have", "how", "i", "in",
    "is", "it", "me", "my", "of", "on", "or", "s", "so", "that", "the", "this", "to", "was", "what", "who",
    "whose", "with",
];

/// Offline embedder: signed feature hashing of lower-cased tokens,
/// L2-normalized. Deterministic and weight-free.
#[derive(Clone, Debug)]
pub struct HashedEmbedder {
    dim: usize,
}

impl HashedEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(HashedEmbedder { dim })
    }

    pub fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0f32; self.dim];
        for tok in tokenize(text) {
            let tok = tok.to_lowercase();
            if STOPWORDS.contains(&tok.as_str()) {
                continue;
            }
            let h = fnv1a64(tok.as_bytes());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl Default for HashedEmbedder {
    fn default() -> Self {
        HashedEmbedder { dim: DEFAULT_DIM }
    }
}

impl Embedder for HashedEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Settings of an external embedding service.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpEmbedderConfig {
    #[serde(flatten)]
    pub client: ClientConfig,
    pub dim: usize,
}

impl Default for HttpEmbedderConfig {
    fn default() -> Self {
        HttpEmbedderConfig {
            client: ClientConfig { token_env: EMBED_TOKEN_ENV.into(), ..Default::default() },
            dim: DEFAULT_DIM,
        }
    }
}

/// Client of an embeddings endpoint: `{"model", "input": [...]}` in,
/// `data[i].embedding` out.
#[derive(Debug)]
pub struct HttpEmbedder {
    client: ChatClient,
    dim: usize,
}

impl HttpEmbedder {
    pub fn new(config: HttpEmbedderConfig) -> Result<Self> {
        Ok(HttpEmbedder { client: ChatClient::new(config.client)?, dim: config.dim })
    }
}

impl Embedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        let body = json!({"model": self.client.config().model, "input": texts});
        let v = self.client.post("embed", &body)?;
        let bad = |detail: String| Error::External { item: "embed".into(), kind: ExternalKind::Protocol, detail };
        let data = v.get("data").and_then(|d| d.as_array()).ok_or_else(|| bad("response has no data array".into()))?;
        if data.len() != texts.len() {
            return Err(bad(format!("{} embeddings for {} inputs", data.len(), texts.len())));
        }
        data.iter()
            .map(|d| {
                let e: Vec<f32> = d
                    .get("embedding")
                    .and_then(|e| e.as_array())
                    .ok_or_else(|| bad("entry has no embedding".into()))?
                    .iter()
                    .map(|x| x.as_f64().map(|x| x as f32).ok_or_else(|| bad("non-numeric embedding".into())))
                    .collect::<Result<_>>()?;
                if e.len() != self.dim {
                    return Err(Error::DimensionMismatch(e.len(), self.dim));
                }
                Ok(e)
            })
            .collect()
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(u.len(), v.len()));
    }
    let (mut dot, mut nu, mut nv) = (0f64, 0f64, 0f64);
    for (a, b) in u.iter().zip(v) {
        let (a, b) = (*a as f64, *b as f64);
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        log::trace!("cosine with a zero vector");
        return Ok(0.0);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::llm::mock;

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap() - 0.974632).abs() < 1e-6);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(cosine(&[1.0], &[1.0, 2.0]), Err(Error::DimensionMismatch(1, 2))));
    }

    #[test]
    fn hashed_embeddings_are_unit_and_deterministic() {
        let e = HashedEmbedder::default();
        let a = e.embed_one("My cousin works in Shenzhen.");
        assert_eq!(a.len(), DEFAULT_DIM);
        assert!((a.iter().map(|x| x * x).sum::<f32>() - 1.0).abs() < 1e-5);
        assert_eq!(a, e.embed_one("My cousin works in Shenzhen."));
        assert!(e.embed_one("the of").iter().all(|x| *x == 0.0));
    }

    #[test]
    fn http_embedder_reads_data() {
        let body = json!({"data": [{"embedding": [1.0, 0.0]}, {"embedding": [0.0, 1.0]}]});
        let server = mock::serve_json(vec![(200, body)]);
        let cfg = HttpEmbedderConfig {
            client: ClientConfig { endpoint: server.url.clone(), model: "e".into(), ..Default::default() },
            dim: 2,
        };
        let e = HttpEmbedder::new(cfg).unwrap();
        let v = e.embed(&["a", "b"]).unwrap();
        assert_eq!(v, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(server.requests.lock().unwrap()[0]["input"], json!(["a", "b"]));
    }
}
