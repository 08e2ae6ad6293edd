use std::collections::BTreeSet;

use super::metrics::{normalize_text, tokens};
use crate::curation::{first_sentence, ChatClient, ChatConfig, GeneratorClient};
use crate::error::{Error, Result};
use crate::prompts::{self, FAITH, FILTER, FLUENCY};

/// Scores a filled judging prompt in [0, 1].
pub trait JudgeClient: Send + Sync {
    fn score(&self, prompt: &str) -> Result<f64>;
}

impl<F> JudgeClient for F
where
    F: Fn(&str) -> Result<f64> + Send + Sync,
{
    fn score(&self, prompt: &str) -> Result<f64> {
        self(prompt).map(|s| s.clamp(0.0, 1.0))
    }
}

/// Reads a score from judge output: the `"score"` field of a JSON object if
/// present, otherwise the first number in the text. Clamped to [0, 1].
pub fn parse_score(raw: &str) -> Result<f64> {
    let format_error = |message: &str| Error::Format {
        message: message.to_string(),
        raw: raw.to_string(),
    };
    if let (Some(s), Some(e)) = (raw.find('{'), raw.rfind('}')) {
        if s < e {
            if let Ok(v) = serde_json::from_str::<serde_json::Value>(&raw[s..=e]) {
                if let Some(x) = v.get("score").and_then(|x| x.as_f64()) {
                    return Ok(x.clamp(0.0, 1.0));
                }
            }
        }
    }
    let bytes = raw.as_bytes();
    let start = bytes
        .iter()
        .position(|b| b.is_ascii_digit())
        .ok_or_else(|| format_error("judge output contains no score"))?;
    let mut end = start;
    let mut seen_dot = false;
    while end < bytes.len() && (bytes[end].is_ascii_digit() || (bytes[end] == b'.' && !seen_dot)) {
        seen_dot |= bytes[end] == b'.';
        end += 1;
    }
    let x: f64 = raw[start..end]
        .trim_end_matches('.')
        .parse()
        .map_err(|_| format_error("judge score is not a number"))?;
    Ok(x.clamp(0.0, 1.0))
}

/// Judge backed by a chat-completion model.
#[derive(Debug, Clone)]
pub struct LiveJudge {
    chat: ChatClient,
}

impl LiveJudge {
    pub fn new(cfg: &ChatConfig) -> Result<Self> {
        Ok(LiveJudge {
            chat: ChatClient::new(cfg)?,
        })
    }
}

impl JudgeClient for LiveJudge {
    fn score(&self, prompt: &str) -> Result<f64> {
        parse_score(&self.chat.complete(prompt)?)
    }
}

/// Offline judge.
///
/// Faith and filter prompts score 1.0 when the answer contains the first
/// sentence of the (golden) context, or when every answer token occurs in
/// it; otherwise 0.0. Fluency prompts score 0.4 for a leading capital, 0.4
/// for closing `.`/`!`/`?` and up to 0.2 for length (0.05 per word, capped).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StubJudge;

pub fn stub_consistency(response: &str, context: &str) -> f64 {
    let answer = normalize_text(response);
    if answer.is_empty() {
        return 0.0;
    }
    let key = normalize_text(&first_sentence(context));
    if !key.is_empty() && answer.contains(&key) {
        return 1.0;
    }
    let known: BTreeSet<String> = tokens(context).into_iter().collect();
    if tokens(response).iter().all(|t| known.contains(t)) {
        1.0
    } else {
        0.0
    }
}

pub fn stub_fluency(text: &str) -> f64 {
    let t = text.trim();
    if t.is_empty() {
        return 0.0;
    }
    let capital = if t.chars().next().is_some_and(char::is_uppercase) {
        0.4
    } else {
        0.0
    };
    let closed = if t.ends_with(['.', '!', '?']) { 0.4 } else { 0.0 };
    let words = t.split_whitespace().count() as f64;
    capital + closed + (0.05 * words).min(0.2)
}

impl JudgeClient for StubJudge {
    fn score(&self, prompt: &str) -> Result<f64> {
        let unknown = || Error::Client {
            message: "stub judge does not recognise this prompt".into(),
            retryable: false,
        };
        let (template, slots) = prompts::identify(prompt).ok_or_else(unknown)?;
        if template == FAITH || template == FILTER {
            Ok(stub_consistency(&slots["response"], &slots["context"]))
        } else if template == FLUENCY {
            Ok(stub_fluency(&slots["response"]))
        } else {
            Err(unknown())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_parsing() {
        assert_eq!(parse_score(r#"{"score": 0.75}"#).unwrap(), 0.75);
        assert_eq!(parse_score("Rating: 0.9. The text flows well.").unwrap(), 0.9);
        assert_eq!(parse_score("Score 8/10").unwrap(), 1.0);
        assert_eq!(parse_score(r#"{"score": -2}"#).unwrap(), 0.0);
        assert!(matches!(parse_score("excellent"), Err(Error::Format { .. })));
    }

    #[test]
    fn stub_rules() {
        let ctx = "The sky is blue. It has clouds.";
        assert_eq!(stub_consistency("Indeed, the sky is blue today.", ctx), 1.0);
        assert_eq!(stub_consistency("blue", ctx), 1.0);
        assert_eq!(stub_consistency("The sky is green.", ctx), 0.0);
        assert_eq!(stub_consistency("", ctx), 0.0);
        // 0.4 capital + 0.4 full stop + 4 words * 0.05
        assert!((stub_fluency("The sky is blue.") - 1.0).abs() < 1e-12);
        assert!((stub_fluency("sky blue") - 0.1).abs() < 1e-12);
    }

    #[test]
    fn stub_dispatches_on_template() {
        let p = FLUENCY.fill(&[("response", "Fine.")]).unwrap();
        assert!((StubJudge.score(&p).unwrap() - 0.85).abs() < 1e-12);
        assert!(StubJudge.score("rate this").is_err());
    }
}
