//! Text embedding providers: a local hashed-trigram stub and a remote client.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{domain, Error, Result};
use crate::policy::{post_with_retries, HttpTransport, Transport};
use crate::seeding::{fnv1a, mix64};

pub const STUB_DIM: usize = 64;

fn default_timeout() -> u64 {
    30
}
fn default_retries() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEmbeddingConfig {
    pub endpoint: String,
    #[serde(default, skip_serializing)]
    pub token: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

#[derive(Clone)]
pub enum EmbeddingProvider {
    /// Character trigrams hashed with a seed into 64 signed buckets, L2-normalized.
    TrigramStub { seed: u64 },
    Remote {
        config: RemoteEmbeddingConfig,
        transport: Arc<dyn Transport>,
    },
}

impl std::fmt::Debug for EmbeddingProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EmbeddingProvider::TrigramStub { seed } => f.debug_struct("TrigramStub").field("seed", seed).finish(),
            EmbeddingProvider::Remote { config, .. } => {
                f.debug_struct("Remote").field("endpoint", &config.endpoint).finish_non_exhaustive()
            }
        }
    }
}

impl Default for EmbeddingProvider {
    fn default() -> Self {
        EmbeddingProvider::TrigramStub { seed: 0 }
    }
}

impl EmbeddingProvider {
    pub fn remote(config: RemoteEmbeddingConfig) -> Result<Self> {
        Self::remote_with_transport(config, Arc::new(HttpTransport::new()))
    }

    pub fn remote_with_transport(config: RemoteEmbeddingConfig, transport: Arc<dyn Transport>) -> Result<Self> {
        if config.endpoint.is_empty() {
            return Err(Error::Configuration("remote embedding provider needs an endpoint".into()));
        }
        Ok(EmbeddingProvider::Remote { config, transport })
    }

    pub fn embed(&self, text: &str) -> Result<Vec<f64>> {
        if text.trim().is_empty() {
            return Err(domain("cannot embed empty text"));
        }
        match self {
            EmbeddingProvider::TrigramStub { seed } => Ok(trigram_embedding(text, *seed)),
            EmbeddingProvider::Remote { config, transport } => {
                let resp = post_with_retries(
                    transport.as_ref(),
                    &config.endpoint,
                    config.token.as_deref(),
                    &json!({ "text": text }),
                    Duration::from_secs(config.timeout_secs),
                    config.retries,
                )?;
                parse_embedding(&resp)
            }
        }
    }
}

fn parse_embedding(resp: &Value) -> Result<Vec<f64>> {
    let malformed = |message: &str| Error::Parse {
        message: message.to_string(),
        raw: resp.to_string(),
    };
    let arr = resp
        .get("embedding")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("response has no array field \"embedding\""))?;
    let v = arr
        .iter()
        .map(|x| x.as_f64().ok_or_else(|| malformed("embedding contains a non-number")))
        .collect::<Result<Vec<f64>>>()?;
    if v.is_empty() {
        return Err(malformed("embedding is empty"));
    }
    Ok(v)
}

/// Deterministic 64-dim embedding of lower-cased, space-padded text.
pub fn trigram_embedding(text: &str, seed: u64) -> Vec<f64> {
    let padded: Vec<char> = format!(" {} ", text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" "))
        .chars()
        .collect();
    let mut v = vec![0.0; STUB_DIM];
    for w in padded.windows(3) {
        let gram: String = w.iter().collect();
        let h = mix64(fnv1a(gram.as_bytes()) ^ seed);
        let bucket = (h % STUB_DIM as u64) as usize;
        let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    } else {
        // every trigram cancelled out; fall back to a fixed unit vector
        v[(mix64(seed) % STUB_DIM as u64) as usize] = 1.0;
    }
    v
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(domain(format!("dimension mismatch: {} vs {}", a.len(), b.len())));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (na * nb))
}
