use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::Embedder;

/// How the retrieved set relates to the golden chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scenario {
    GoldenContext,
    MixedContext,
    IrrelevantContext,
    EmptyContext,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::GoldenContext,
        Scenario::MixedContext,
        Scenario::IrrelevantContext,
        Scenario::EmptyContext,
    ];
}

pub fn classify_scenario<S: AsRef<str>>(retrieved: &[S], golden_id: &str) -> Scenario {
    let has_golden = retrieved.iter().any(|id| id.as_ref() == golden_id);
    match (retrieved.len(), has_golden) {
        (0, _) => Scenario::EmptyContext,
        (_, false) => Scenario::IrrelevantContext,
        (1, true) => Scenario::GoldenContext,
        _ => Scenario::MixedContext,
    }
}

/// Lowercases, drops punctuation and collapses whitespace.
pub fn normalize_text(text: &str) -> String {
    text.to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn tokens(text: &str) -> Vec<String> {
    normalize_text(text)
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

pub const DEFAULT_REFUSALS: [&str; 2] = ["i don't know", "i do not know"];

/// True when the normalized response starts with one of `phrases` (as whole
/// words).
pub fn detect_refusal<S: AsRef<str>>(response: &str, phrases: &[S]) -> bool {
    let r = normalize_text(response);
    phrases.iter().any(|p| {
        let p = normalize_text(p.as_ref());
        !p.is_empty() && (r == p || r.starts_with(&format!("{p} ")))
    })
}

/// Share of refusals; `None` when there is nothing to count.
pub fn compute_rr(refused: &[bool]) -> Option<f64> {
    if refused.is_empty() {
        return None;
    }
    Some(refused.iter().filter(|r| **r).count() as f64 / refused.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub f1: f64,
}

/// Unit of comparison for [`statement_f1`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatementMode {
    /// Normalized word tokens.
    #[default]
    Tokens,
    /// Normalized sentences split on `.`, `!` and `?`.
    Sentences,
}

fn statements(text: &str, mode: StatementMode) -> Vec<String> {
    match mode {
        StatementMode::Tokens => tokens(text),
        StatementMode::Sentences => text
            .split(['.', '!', '?'])
            .map(normalize_text)
            .filter(|s| !s.is_empty())
            .collect(),
    }
}

/// Multiset overlap: `F1 = TP / (TP + (FP + FN) / 2)`, zero when nothing
/// overlaps.
pub fn statement_f1(answer: &str, ground_truth: &str, mode: StatementMode) -> F1Counts {
    let mut truth: HashMap<String, usize> = HashMap::new();
    let truth_statements = statements(ground_truth, mode);
    for t in &truth_statements {
        *truth.entry(t.clone()).or_default() += 1;
    }
    let answer_statements = statements(answer, mode);
    let mut tp = 0;
    for a in &answer_statements {
        if let Some(n) = truth.get_mut(a) {
            if *n > 0 {
                *n -= 1;
                tp += 1;
            }
        }
    }
    let fp = answer_statements.len() - tp;
    let fn_ = truth_statements.len() - tp;
    let f1 = if tp == 0 {
        0.0
    } else {
        tp as f64 / (tp as f64 + 0.5 * (fp + fn_) as f64)
    };
    F1Counts { tp, fp, fn_, f1 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaWeights {
    /// Weight of statement F1.
    pub w0: f64,
    /// Weight of embedding cosine.
    pub w1: f64,
}

impl Default for RaWeights {
    fn default() -> Self {
        RaWeights { w0: 1.0, w1: 1.0 }
    }
}

impl RaWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(self.w0) || !ok(self.w1) || self.w0 + self.w1 == 0.0 {
            return Err(Error::Config(format!(
                "RA weights must be finite, non-negative and not both zero, got ({}, {})",
                self.w0, self.w1
            )));
        }
        Ok(())
    }

    /// Weighted mean of F1 and the cosine clamped to [0, 1].
    pub fn combine(&self, f1: f64, cosine: f64) -> f64 {
        (f1 * self.w0 + cosine.clamp(0.0, 1.0) * self.w1) / (self.w0 + self.w1)
    }
}

pub fn compute_ra(
    answer: &str,
    ground_truth: &str,
    weights: &RaWeights,
    mode: StatementMode,
    embedder: &dyn Embedder,
) -> Result<f64> {
    weights.validate()?;
    if answer.trim().is_empty() || ground_truth.trim().is_empty() {
        return Err(Error::Argument("RA needs a nonempty answer and ground truth".into()));
    }
    let f1 = statement_f1(answer, ground_truth, mode).f1;
    if weights.w1 == 0.0 {
        return Ok(f1);
    }
    let cos = crate::numerics::cosine_similarity(&embedder.embed(answer)?, &embedder.embed(ground_truth)?)?;
    Ok(weights.combine(f1, cos))
}
