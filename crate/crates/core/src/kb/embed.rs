use serde::{Deserialize, Serialize};

use crate::kb::KbError;

/// A unit-normalized vector tagged with the embedder that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub embedder_id: String,
    pub values: Vec<f64>,
}

impl Embedding {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }
}

pub fn normalize(values: &mut [f64]) {
    let n = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        values.iter_mut().for_each(|v| *v /= n);
    }
}

pub trait Embedder: Send + Sync {
    fn id(&self) -> String;
    fn embed(&self, texts: &[&str]) -> Result<Vec<Embedding>, KbError>;

    fn embed_text(&self, text: &str) -> Result<Embedding, KbError> {
        Ok(self.embed(&[text])?.remove(0))
    }
}

pub const DEFAULT_DIM: usize = 512;

/// Hashed character-trigram term frequencies, L2-normalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrigramEmbedder {
    pub dim: usize,
}

impl Default for TrigramEmbedder {
    fn default() -> Self {
        TrigramEmbedder { dim: DEFAULT_DIM }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl TrigramEmbedder {
    pub fn vector(&self, text: &str) -> Vec<f64> {
        let padded: Vec<char> = format!("  {}  ", text.to_lowercase()).chars().collect();
        let mut v = vec![0.0; self.dim];
        let mut buf = [0u8; 12];
        for w in padded.windows(3) {
            let mut n = 0;
            for c in w {
                n += c.encode_utf8(&mut buf[n..]).len();
            }
            v[(fnv1a(&buf[..n]) % self.dim as u64) as usize] += 1.0;
        }
        normalize(&mut v);
        v
    }
}

impl Embedder for TrigramEmbedder {
    fn id(&self) -> String {
        format!("trigram-fnv1a-{}", self.dim)
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Embedding>, KbError> {
        texts
            .iter()
            .map(|t| {
                if t.is_empty() {
                    return Err(KbError::EmptyText);
                }
                Ok(Embedding { embedder_id: self.id(), values: self.vector(t) })
            })
            .collect()
    }
}

/// Remote embedder speaking `{"input": [texts]}`; accepts either an
/// `{"data": [{"embedding": [...]}]}` or an `{"embeddings": [[...]]}` reply.
pub struct HttpEmbedder {
    pub url: String,
    pub api_key: Option<String>,
    pub model: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>, api_key: Option<String>, model: Option<String>) -> Self {
        HttpEmbedder { url: url.into(), api_key, model, client: reqwest::blocking::Client::new() }
    }

    /// Reads `PROOFLOOP_EMBED_URL`, `PROOFLOOP_EMBED_API_KEY`, `PROOFLOOP_EMBED_MODEL`.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var("PROOFLOOP_EMBED_URL").ok()?;
        Some(Self::new(url, std::env::var("PROOFLOOP_EMBED_API_KEY").ok(), std::env::var("PROOFLOOP_EMBED_MODEL").ok()))
    }
}

impl Embedder for HttpEmbedder {
    fn id(&self) -> String {
        format!("http:{}:{}", self.url, self.model.as_deref().unwrap_or("default"))
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Embedding>, KbError> {
        if texts.iter().any(|t| t.is_empty()) {
            return Err(KbError::EmptyText);
        }
        let mut body = serde_json::json!({ "input": texts });
        if let Some(m) = &self.model {
            body["model"] = serde_json::Value::String(m.clone());
        }
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(k) = &self.api_key {
            req = req.bearer_auth(k);
        }
        let resp = req.send().map_err(|e| KbError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(KbError::Transport(format!("embedding endpoint returned {}", resp.status())));
        }
        let v: serde_json::Value = resp.json().map_err(|e| KbError::Transport(e.to_string()))?;
        let rows: Vec<serde_json::Value> = if let Some(d) = v.get("data").and_then(|d| d.as_array()) {
            d.iter().map(|r| r.get("embedding").cloned().unwrap_or_default()).collect()
        } else if let Some(e) = v.get("embeddings").and_then(|e| e.as_array()) {
            e.clone()
        } else {
            return Err(KbError::Transport("embedding reply has neither 'data' nor 'embeddings'".into()));
        };
        if rows.len() != texts.len() {
            return Err(KbError::Transport(format!("expected {} embeddings, got {}", texts.len(), rows.len())));
        }
        rows.into_iter()
            .map(|r| {
                let mut values: Vec<f64> = serde_json::from_value(r).map_err(|e| KbError::Transport(e.to_string()))?;
                normalize(&mut values);
                Ok(Embedding { embedder_id: self.id(), values })
            })
            .collect()
    }
}
