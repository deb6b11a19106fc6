//! Postcondition embeddings from an external provider.
//!
//! HTTP contract: `POST <url>` with `{"texts": ["...", ...]}`, answered by
//! `{"embeddings": [[f64, ...], ...]}`, one vector per text in order.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbedError {
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("embedding provider returned {got} vectors for {want} texts")]
    CountMismatch { want: usize, got: usize },
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f64>>,
}

pub struct HttpEmbedder {
    url: String,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpEmbedder { url: url.into(), agent }
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let unavailable = |e: ureq::Error| EmbedError::ProviderUnavailable(e.to_string());
        let response: EmbedResponse = self
            .agent
            .post(&self.url)
            .send_json(EmbedRequest { texts })
            .map_err(unavailable)?
            .body_mut()
            .read_json()
            .map_err(unavailable)?;
        Ok(response.embeddings)
    }
}

/// Remembers vectors by clause digest so repeated clauses cost nothing.
pub struct CachedEmbedder<P> {
    inner: P,
    cache: Mutex<HashMap<String, Vec<f64>>>,
}

impl<P: EmbeddingProvider> CachedEmbedder<P> {
    pub fn new(inner: P) -> Self {
        CachedEmbedder {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().unwrap().len()
    }
}

fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedEmbedder<P> {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let keys: Vec<String> = texts.iter().map(|t| digest(t)).collect();
        let mut missing: Vec<String> = Vec::new();
        {
            let cache = self.cache.lock().unwrap();
            for (k, t) in keys.iter().zip(texts) {
                if !cache.contains_key(k) && !missing.contains(t) {
                    missing.push(t.clone());
                }
            }
        }
        if !missing.is_empty() {
            let vectors = self.inner.embed(&missing)?;
            if vectors.len() != missing.len() {
                return Err(EmbedError::CountMismatch {
                    want: missing.len(),
                    got: vectors.len(),
                });
            }
            let mut cache = self.cache.lock().unwrap();
            for (t, v) in missing.iter().zip(vectors) {
                cache.insert(digest(t), v);
            }
        }
        let cache = self.cache.lock().unwrap();
        Ok(keys.iter().map(|k| cache[k].clone()).collect())
    }
}

/// One vector per clause, all of one dimension. Never returns a partial list.
pub fn embed_postconditions(clauses: &[String], provider: &dyn EmbeddingProvider) -> Result<Vec<Vec<f64>>, EmbedError> {
    if clauses.is_empty() {
        return Ok(Vec::new());
    }
    let vectors = provider.embed(clauses)?;
    if vectors.len() != clauses.len() {
        return Err(EmbedError::CountMismatch {
            want: clauses.len(),
            got: vectors.len(),
        });
    }
    let dim = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(EmbedError::DimensionMismatch(dim, v.len()));
    }
    Ok(vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Deterministic toy encoder: byte histogram over four buckets.
    struct Buckets(AtomicUsize);

    impl EmbeddingProvider for Buckets {
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
            self.0.fetch_add(texts.len(), Ordering::SeqCst);
            Ok(texts
                .iter()
                .map(|t| {
                    let mut v = vec![0.0; 4];
                    for b in t.bytes() {
                        v[(b % 4) as usize] += 1.0;
                    }
                    v
                })
                .collect())
        }
    }

    struct Down;

    impl EmbeddingProvider for Down {
        fn embed(&self, _: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
            Err(EmbedError::ProviderUnavailable("connection refused".into()))
        }
    }

    #[test]
    fn empty_list_needs_no_provider() {
        assert!(embed_postconditions(&[], &Down).unwrap().is_empty());
    }

    #[test]
    fn repeats_are_served_from_cache() {
        let p = CachedEmbedder::new(Buckets(AtomicUsize::new(0)));
        let clauses = vec!["r >= 0".to_string(), "r >= 0".to_string(), "r < n".to_string()];
        let v = embed_postconditions(&clauses, &p).unwrap();
        assert_eq!(v[0], v[1]);
        assert_eq!(p.inner.0.load(Ordering::SeqCst), 2);
        embed_postconditions(&clauses, &p).unwrap();
        assert_eq!(p.inner.0.load(Ordering::SeqCst), 2);
        assert_eq!(p.cached(), 2);
    }

    #[test]
    fn provider_down_is_an_error() {
        let err = embed_postconditions(&["x > 0".into()], &Down).unwrap_err();
        assert!(matches!(err, EmbedError::ProviderUnavailable(_)));
    }

    #[test]
    fn unreachable_http_provider() {
        let p = HttpEmbedder::new("http://127.0.0.1:9/embed", Duration::from_secs(2));
        assert!(matches!(p.embed(&["x".into()]), Err(EmbedError::ProviderUnavailable(_))));
    }
}
