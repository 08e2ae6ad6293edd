use serde::{Deserialize, Serialize};

use super::Chunk;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    /// Maximum chunk length in characters.
    pub target_size: usize,
    /// Characters shared by consecutive chunks.
    pub overlap: usize,
    /// Tried in order; the empty string means "between any two characters".
    pub separators: Vec<String>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            target_size: 1000,
            overlap: 100,
            separators: ["\n\n", "\n", " ", ""].iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_size <= self.overlap {
            return Err(Error::Argument(format!(
                "target_size ({}) must exceed overlap ({})",
                self.target_size, self.overlap
            )));
        }
        Ok(())
    }
}

/// Recursively splits `text` into pieces of at most `target_size` characters.
///
/// Separators stay attached to the end of the piece they terminate, so the
/// pieces of a zero-overlap split concatenate back to `text`. With overlap,
/// every chunk after the first starts `overlap` characters early.
pub fn split_recursive(text: &str, target_size: usize, overlap: usize, separators: &[String]) -> Result<Vec<String>> {
    let cfg = SplitConfig {
        target_size,
        overlap,
        separators: separators.to_vec(),
    };
    Ok(split_spans(text, &cfg)?
        .into_iter()
        .map(|(s, e)| slice(text, s, e))
        .collect())
}

/// Splits a document into chunks with ids `{source_doc}#{index:04}`.
pub fn chunk_document(source_doc: &str, text: &str, cfg: &SplitConfig) -> Result<Vec<Chunk>> {
    Ok(split_spans(text, cfg)?
        .into_iter()
        .enumerate()
        .map(|(i, (s, e))| Chunk::new(format!("{source_doc}#{i:04}"), source_doc, slice(text, s, e)))
        .collect())
}

/// Inverse of [`split_recursive`]: drops the shared prefix of each chunk.
pub fn reconstruct(chunks: &[String], overlap: usize) -> String {
    let mut out = String::new();
    let mut produced = 0usize;
    for (i, c) in chunks.iter().enumerate() {
        let skip = if i == 0 { 0 } else { overlap.min(produced) };
        out.extend(c.chars().skip(skip));
        produced = out.chars().count();
    }
    out
}

fn slice(text: &str, start: usize, end: usize) -> String {
    text.chars().skip(start).take(end - start).collect()
}

/// Character spans `[start, end)` of each chunk.
fn split_spans(text: &str, cfg: &SplitConfig) -> Result<Vec<(usize, usize)>> {
    cfg.validate()?;
    let chars: Vec<char> = text.chars().collect();
    if chars.is_empty() {
        return Ok(Vec::new());
    }
    if chars.len() <= cfg.target_size {
        return Ok(vec![(0, chars.len())]);
    }
    let limit = cfg.target_size - cfg.overlap;
    let seps: Vec<Vec<char>> = cfg.separators.iter().map(|s| s.chars().collect()).collect();
    let pieces = segment(&chars, 0, chars.len(), limit, &seps);
    Ok(pieces
        .into_iter()
        .enumerate()
        .map(|(i, (s, e))| {
            if i == 0 {
                (s, e)
            } else {
                (s.saturating_sub(cfg.overlap), e)
            }
        })
        .collect())
}

fn segment(chars: &[char], start: usize, end: usize, limit: usize, seps: &[Vec<char>]) -> Vec<(usize, usize)> {
    if end - start <= limit {
        return vec![(start, end)];
    }
    let Some(pos) = seps
        .iter()
        .position(|s| s.is_empty() || contains(&chars[start..end], s))
    else {
        // No separator applies: fall back to fixed-width cuts.
        return (start..end).step_by(limit).map(|s| (s, (s + limit).min(end))).collect();
    };
    let sep = &seps[pos];
    let rest = &seps[pos + 1..];

    let mut pieces = Vec::new();
    for (s, e) in cut(chars, start, end, sep) {
        if e - s > limit {
            pieces.extend(segment(chars, s, e, limit, rest));
        } else {
            pieces.push((s, e));
        }
    }
    merge(pieces, limit)
}

fn contains(hay: &[char], needle: &[char]) -> bool {
    hay.windows(needle.len()).any(|w| w == needle)
}

/// Cuts after every occurrence of `sep`; an empty separator cuts after every
/// character.
fn cut(chars: &[char], start: usize, end: usize, sep: &[char]) -> Vec<(usize, usize)> {
    if sep.is_empty() {
        return (start..end).map(|i| (i, i + 1)).collect();
    }
    let mut out = Vec::new();
    let mut piece_start = start;
    let mut i = start;
    while i + sep.len() <= end {
        if chars[i..i + sep.len()] == *sep {
            i += sep.len();
            out.push((piece_start, i));
            piece_start = i;
        } else {
            i += 1;
        }
    }
    if piece_start < end {
        out.push((piece_start, end));
    }
    out
}

/// Greedily joins adjacent pieces while the result stays within `limit`.
fn merge(pieces: Vec<(usize, usize)>, limit: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    for (s, e) in pieces {
        match out.last_mut() {
            Some(last) if e - last.0 <= limit => last.1 = e,
            _ => out.push((s, e)),
        }
    }
    out
}
