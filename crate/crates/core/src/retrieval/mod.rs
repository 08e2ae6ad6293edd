//! Chunking, embedding and thresholded cosine retrieval over a flat index.

mod embed;
mod index;
mod split;

use serde::{Deserialize, Serialize};

pub use embed::{Embedder, HttpEmbedder, HttpEmbedderConfig, TableEmbedder, TrigramEmbedder, TRIGRAM_DIM};
pub use index::{IndexEntry, VectorIndex};
pub use split::{chunk_document, reconstruct, split_recursive, SplitConfig};

use crate::error::{Error, Result};
use crate::numerics::cosine_similarity;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: String,
    pub source_doc: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl Chunk {
    pub fn new(id: impl Into<String>, source_doc: impl Into<String>, text: impl Into<String>) -> Self {
        Chunk {
            id: id.into(),
            source_doc: source_doc.into(),
            text: text.into(),
            embedding: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    /// A chunk is retrieved when its cosine similarity is strictly above this.
    pub theta: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { theta: 0.87 }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.theta.is_finite() || self.theta <= -1.0 || self.theta >= 1.0 {
            return Err(Error::Config(format!("theta must lie in (-1, 1), got {}", self.theta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieved {
    pub id: String,
    pub score: f64,
}

/// Chunks whose embedding similarity to `query` exceeds `cfg.theta`, best
/// first, ties by id.
pub fn retrieve(
    query: &str,
    index: &VectorIndex,
    embedder: &dyn Embedder,
    cfg: &RetrievalConfig,
) -> Result<Vec<Retrieved>> {
    let q = embedder.embed(query)?;
    retrieve_vector(&q, index, cfg)
}

pub fn retrieve_vector(query: &[f64], index: &VectorIndex, cfg: &RetrievalConfig) -> Result<Vec<Retrieved>> {
    if query.len() != index.dim() {
        return Err(Error::shape("retrieve", index.dim(), query.len()));
    }
    let mut hits = Vec::new();
    for e in index.entries() {
        let score = cosine_similarity(query, &e.embedding)?;
        if score > cfg.theta {
            hits.push(Retrieved {
                id: e.id.clone(),
                score,
            });
        }
    }
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    Ok(hits)
}
