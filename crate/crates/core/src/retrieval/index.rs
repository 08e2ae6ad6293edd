use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::embed::Embedder;
use super::Chunk;
use crate::error::{Error, Result};
use crate::numerics::{l2_norm, normalize};

/// One persisted line of the index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub source_doc: String,
    pub text: String,
    pub embedding: Vec<f64>,
}

/// Flat store of unit-norm chunk embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    entries: Vec<IndexEntry>,
    ids: HashSet<String>,
}

const NORM_TOLERANCE: f64 = 1e-9;

impl VectorIndex {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("index dimension must be >= 1".into()));
        }
        Ok(VectorIndex {
            dim,
            entries: Vec::new(),
            ids: HashSet::new(),
        })
    }

    /// Embeds every chunk (concurrently) and indexes them in the given order.
    pub fn build(chunks: &[Chunk], embedder: &dyn Embedder) -> Result<Self> {
        let vectors: Vec<Vec<f64>> = chunks
            .par_iter()
            .map(|c| match &c.embedding {
                Some(v) => Ok(v.clone()),
                None => embedder.embed(&c.text),
            })
            .collect::<Result<_>>()?;
        let mut index = VectorIndex::new(embedder.dim())?;
        for (c, v) in chunks.iter().zip(vectors) {
            index.insert(IndexEntry {
                id: c.id.clone(),
                source_doc: c.source_doc.clone(),
                text: c.text.clone(),
                embedding: v,
            })?;
        }
        Ok(index)
    }

    /// Adds an entry, normalizing its embedding unless it is already unit norm.
    pub fn insert(&mut self, mut entry: IndexEntry) -> Result<()> {
        if entry.embedding.len() != self.dim {
            return Err(Error::shape("VectorIndex::insert", self.dim, entry.embedding.len()));
        }
        if entry.text.is_empty() {
            return Err(Error::Validation(format!("chunk {} has empty text", entry.id)));
        }
        if self.ids.contains(&entry.id) {
            return Err(Error::Validation(format!("duplicate chunk id {}", entry.id)));
        }
        if (l2_norm(&entry.embedding) - 1.0).abs() > NORM_TOLERANCE {
            entry.embedding = normalize(&entry.embedding)?;
        }
        self.ids.insert(entry.id.clone());
        self.entries.push(entry);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&IndexEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Parses JSONL; stored embeddings must already be unit norm.
    pub fn from_jsonl(reader: impl BufRead) -> Result<Self> {
        let mut index: Option<VectorIndex> = None;
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<index>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: IndexEntry = serde_json::from_str(&line).map_err(|e| Error::Format {
                message: format!("index line {}: {e}", n + 1),
                raw: line.clone(),
            })?;
            if (l2_norm(&entry.embedding) - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::Validation(format!(
                    "index line {}: embedding is not unit norm",
                    n + 1
                )));
            }
            let idx = match &mut index {
                Some(i) => i,
                None => index.insert(VectorIndex::new(entry.embedding.len())?),
            };
            idx.insert(entry)?;
        }
        index.ok_or_else(|| Error::Validation("index file has no entries".into()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl()?.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(BufReader::new(f))
    }
}
