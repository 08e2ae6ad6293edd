use serde::{Deserialize, Serialize};

use super::judge::JudgeClient;
use super::metrics::Scenario;
use crate::curation::{parse_json_field, GeneratorClient};
use crate::error::{Error, Result};
use crate::numerics::cosine_similarity;
use crate::prompts::{FAITH, FILTER, FLUENCY, QUESTION_REGENERATION};
use crate::retrieval::Embedder;

/// What a judge needs to know about one open-book answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgedAnswer {
    pub scenario: Scenario,
    pub question: String,
    pub golden_context: String,
    /// Retrieved chunks other than the golden one.
    pub distractors: Vec<String>,
    pub response: String,
}

pub fn score_faith(item: &JudgedAnswer, judge: &dyn JudgeClient) -> Result<f64> {
    if item.scenario != Scenario::GoldenContext {
        return Err(Error::Argument(format!(
            "faith applies to GoldenContext, not {:?}",
            item.scenario
        )));
    }
    let prompt = FAITH.fill(&[
        ("context", &item.golden_context),
        ("question", &item.question),
        ("response", &item.response),
    ])?;
    Ok(judge.score(&prompt)?.clamp(0.0, 1.0))
}

pub fn score_filter(item: &JudgedAnswer, judge: &dyn JudgeClient) -> Result<f64> {
    if item.scenario != Scenario::MixedContext {
        return Err(Error::Argument(format!(
            "filter applies to MixedContext, not {:?}",
            item.scenario
        )));
    }
    let distractors = item.distractors.join("\n\n");
    let prompt = FILTER.fill(&[
        ("context", &item.golden_context),
        ("distractors", &distractors),
        ("question", &item.question),
        ("response", &item.response),
    ])?;
    Ok(judge.score(&prompt)?.clamp(0.0, 1.0))
}

/// Mean cosine between `q` and `m` questions regenerated from the response,
/// clamped to [0, 1].
pub fn compute_qr(
    q: &str,
    response: &str,
    context: &str,
    gen: &dyn GeneratorClient,
    embedder: &dyn Embedder,
    m: usize,
) -> Result<f64> {
    if m == 0 {
        return Err(Error::Argument("QR needs m >= 1".into()));
    }
    let prompt = QUESTION_REGENERATION.fill(&[("context", context), ("response", response)])?;
    let target = embedder.embed(q)?;
    let mut total = 0.0;
    for _ in 0..m {
        let regenerated = parse_json_field(&gen.complete(&prompt)?, "question")?;
        if regenerated.is_empty() {
            return Err(Error::Validation("regenerated question is empty".into()));
        }
        total += cosine_similarity(&target, &embedder.embed(&regenerated)?)?;
    }
    Ok((total / m as f64).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluencyScore {
    pub score: f64,
    /// Messages from judges that failed; the score averages the others.
    pub failures: Vec<String>,
}

pub fn compute_fl(response: &str, judges: &[&dyn JudgeClient]) -> Result<FluencyScore> {
    if judges.is_empty() {
        return Err(Error::Argument("FL needs at least one judge".into()));
    }
    let prompt = FLUENCY.fill(&[("response", response)])?;
    let mut scores = Vec::new();
    let mut failures = Vec::new();
    for judge in judges {
        match judge.score(&prompt) {
            Ok(s) => scores.push(s.clamp(0.0, 1.0)),
            Err(e) => failures.push(e.to_string()),
        }
    }
    if scores.is_empty() {
        return Err(Error::Evaluation(format!(
            "every fluency judge failed: {}",
            failures.join("; ")
        )));
    }
    Ok(FluencyScore {
        score: scores.iter().sum::<f64>() / scores.len() as f64,
        failures,
    })
}
