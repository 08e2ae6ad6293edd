use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::{HttpConfig, JsonPoster};
use crate::numerics::normalize;

/// Maps text to a unit-norm vector of fixed dimension.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

pub const TRIGRAM_DIM: usize = 256;

/// Hashed lowercase character-trigram counts, L2-normalized. Texts shorter
/// than three characters count as a single gram.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrigramEmbedder {
    dim: usize,
}

impl Default for TrigramEmbedder {
    fn default() -> Self {
        TrigramEmbedder { dim: TRIGRAM_DIM }
    }
}

impl TrigramEmbedder {
    pub fn with_dim(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be >= 1".into()));
        }
        Ok(TrigramEmbedder { dim })
    }

    /// Bucket of each gram in `text`, in order of occurrence.
    pub fn buckets(&self, text: &str) -> Vec<usize> {
        let chars: Vec<char> = text.to_lowercase().chars().collect();
        let grams: Vec<&[char]> = if chars.len() < 3 {
            vec![&chars[..]]
        } else {
            chars.windows(3).collect()
        };
        grams
            .into_iter()
            .map(|g| {
                let s: String = g.iter().collect();
                (fnv1a(s.as_bytes()) % self.dim as u64) as usize
            })
            .collect()
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl Embedder for TrigramEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        if text.is_empty() {
            return Err(Error::Argument("cannot embed empty text".into()));
        }
        let mut counts = vec![0.0; self.dim];
        for b in self.buckets(text) {
            counts[b] += 1.0;
        }
        normalize(&counts)
    }
}

/// Fixed lookup from exact text to vector, for controlled experiments.
/// Unregistered text is an error unless a trigram fallback is enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct TableEmbedder {
    dim: usize,
    table: BTreeMap<String, Vec<f64>>,
    fallback: Option<TrigramEmbedder>,
}

impl TableEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be >= 1".into()));
        }
        Ok(TableEmbedder {
            dim,
            table: BTreeMap::new(),
            fallback: None,
        })
    }

    pub fn with_trigram_fallback(mut self) -> Self {
        self.fallback = Some(TrigramEmbedder { dim: self.dim });
        self
    }

    pub fn insert(&mut self, text: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::shape("TableEmbedder::insert", self.dim, vector.len()));
        }
        self.table.insert(text.into(), normalize(&vector)?);
        Ok(())
    }
}

impl Embedder for TableEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        match (self.table.get(text), &self.fallback) {
            (Some(v), _) => Ok(v.clone()),
            (None, Some(f)) => f.embed(text),
            (None, None) => Err(Error::Argument(format!("no vector registered for {text:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpEmbedderConfig {
    pub url: String,
    pub dim: usize,
    #[serde(default)]
    pub http: HttpConfig,
}

/// Remote embedding service: `POST {"text": ...}` answered by
/// `{"embedding": [...]}`.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    url: String,
    dim: usize,
    poster: JsonPoster,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embedding: Vec<f64>,
}

impl HttpEmbedder {
    pub fn new(cfg: &HttpEmbedderConfig) -> Result<Self> {
        if cfg.dim == 0 {
            return Err(Error::Config("embedding dimension must be >= 1".into()));
        }
        Ok(HttpEmbedder {
            url: cfg.url.clone(),
            dim: cfg.dim,
            poster: JsonPoster::new(cfg.http.clone())?,
        })
    }
}

impl Embedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        if text.is_empty() {
            return Err(Error::Argument("cannot embed empty text".into()));
        }
        let resp: EmbedResponse = self.poster.post(&self.url, &[], &EmbedRequest { text })?;
        if resp.embedding.len() != self.dim {
            return Err(Error::shape("HttpEmbedder::embed", self.dim, resp.embedding.len()));
        }
        if resp.embedding.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("embedding service returned non-finite values".into()));
        }
        normalize(&resp.embedding)
    }
}
