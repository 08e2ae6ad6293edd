use super::client::GeneratorClient;
use crate::error::{Error, Result};
use crate::prompts::{GROUND_TRUTH_GENERATION, QUESTION_GENERATION};

/// The text up to and including the first `.`, `!` or `?` that ends a
/// sentence, trimmed; the whole trimmed text if there is none.
pub fn first_sentence(text: &str) -> String {
    let t = text.trim();
    let chars: Vec<(usize, char)> = t.char_indices().collect();
    for (k, &(i, c)) in chars.iter().enumerate() {
        if matches!(c, '.' | '!' | '?') && chars.get(k + 1).is_none_or(|(_, n)| n.is_whitespace()) {
            return t[..i + c.len_utf8()].to_string();
        }
    }
    t.to_string()
}

const COPULAS: [&str; 4] = ["is", "are", "was", "were"];
const DETERMINERS: [&str; 7] = ["the", "a", "an", "this", "that", "each", "every"];

fn base_form(verb: &str) -> String {
    if let Some(stem) = verb.strip_suffix("ies") {
        return format!("{stem}y");
    }
    for tail in ["sses", "shes", "ches", "xes", "zes", "oes"] {
        if verb.ends_with(tail) {
            return verb[..verb.len() - 2].to_string();
        }
    }
    verb.strip_suffix('s').unwrap_or(verb).to_string()
}

/// Rule-based question from the first sentence of `text`.
///
/// "X is Y." gives "What is x?"; "X verbs Y." gives "What does x verb?"
/// (the verb being the first lowercase word ending in `s` not directly after
/// a determiner); anything else gives "What does the passage say about x?"
/// with x the first three words. The subject is lowercased.
pub fn stub_question(text: &str) -> String {
    let sentence = first_sentence(text);
    let body = sentence.trim_end_matches(['.', '!', '?']);
    let words: Vec<&str> = body.split_whitespace().collect();
    if words.is_empty() {
        return "What does the passage say?".to_string();
    }
    let subject = |end: usize| words[..end].join(" ").to_lowercase();
    for i in 1..words.len() {
        let w = words[i];
        if COPULAS.contains(&w) {
            return format!("What {w} {}?", subject(i));
        }
        let prev = words[i - 1].to_lowercase();
        let is_verb = w.len() > 2
            && w.ends_with('s')
            && !w.ends_with("ss")
            && w.chars().all(|c| c.is_ascii_lowercase())
            && !DETERMINERS.contains(&prev.as_str());
        if is_verb {
            return format!("What does {} {}?", subject(i), base_form(w));
        }
    }
    format!("What does the passage say about {}?", subject(words.len().min(3)))
}

/// Parses the first JSON object in `raw` (code fences and chatter around it
/// are tolerated) and returns the string under `key`.
pub fn parse_json_field(raw: &str, key: &str) -> Result<String> {
    let format_error = |message: String| Error::Format {
        message,
        raw: raw.to_string(),
    };
    let start = raw
        .find('{')
        .ok_or_else(|| format_error("no JSON object in generator output".into()))?;
    let end = raw
        .rfind('}')
        .ok_or_else(|| format_error("no JSON object in generator output".into()))?;
    if end < start {
        return Err(format_error("no JSON object in generator output".into()));
    }
    let value: serde_json::Value =
        serde_json::from_str(&raw[start..=end]).map_err(|e| format_error(format!("invalid JSON: {e}")))?;
    match value.get(key) {
        Some(serde_json::Value::String(s)) => Ok(s.trim().to_string()),
        Some(_) => Err(format_error(format!("key {key:?} is not a string"))),
        None => Err(format_error(format!("missing key {key:?}"))),
    }
}

const PLACEHOLDER_QUESTION: &str = "a question about the context.";

pub fn generate_question(chunk: &str, gen: &dyn GeneratorClient) -> Result<String> {
    if chunk.trim().is_empty() {
        return Err(Error::Argument("cannot generate a question for an empty chunk".into()));
    }
    let prompt = QUESTION_GENERATION.fill(&[("context", chunk)])?;
    let q = parse_json_field(&gen.complete(&prompt)?, "question")?;
    if q.is_empty() || q.eq_ignore_ascii_case(PLACEHOLDER_QUESTION) {
        return Err(Error::Validation(format!(
            "generator returned an unusable question {q:?}"
        )));
    }
    Ok(q)
}

pub fn generate_ground_truth(chunk: &str, question: &str, gen: &dyn GeneratorClient) -> Result<String> {
    if question.trim().is_empty() {
        return Err(Error::Argument("question is empty".into()));
    }
    let prompt = GROUND_TRUTH_GENERATION.fill(&[("context", chunk), ("question", question)])?;
    let gt = parse_json_field(&gen.complete(&prompt)?, "ground truth")?;
    if gt.is_empty() {
        return Err(Error::Validation("generator returned an empty ground truth".into()));
    }
    Ok(gt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curation::StubGenerator;

    #[test]
    fn stub_rules() {
        let g = StubGenerator;
        assert_eq!(
            generate_question("The router uses softmax gating.", &g).unwrap(),
            "What does the router use?"
        );
        assert_eq!(
            stub_question("Paris is the capital of France. It is big."),
            "What is paris?"
        );
        assert_eq!(
            stub_question("The expert watches inputs."),
            "What does the expert watch?"
        );
        assert_eq!(
            stub_question("Each layer carries weights."),
            "What does each layer carry?"
        );
        assert_eq!(
            stub_question("Cows drink milk daily."),
            "What does the passage say about cows drink milk?"
        );
        assert_eq!(
            generate_ground_truth("The router uses softmax gating. Experts are low rank.", "q", &g).unwrap(),
            "The router uses softmax gating."
        );
    }

    #[test]
    fn first_sentence_rules() {
        assert_eq!(first_sentence("  Version 1.5 is out. Next.  "), "Version 1.5 is out.");
        assert_eq!(first_sentence("no terminator"), "no terminator");
        assert_eq!(first_sentence("Why? Because."), "Why?");
    }

    #[test]
    fn malformed_outputs() {
        let not_json = |_: &str| Ok("Sure! Here is a question.".to_string());
        assert!(matches!(
            generate_question("ctx", &not_json),
            Err(Error::Format { raw, .. }) if raw == "Sure! Here is a question."
        ));
        let empty = |_: &str| Ok(r#"{"question": ""}"#.to_string());
        assert!(matches!(generate_question("ctx", &empty), Err(Error::Validation(_))));
        let generic = |_: &str| Ok(r#"{"question": "A question about the context."}"#.to_string());
        assert!(matches!(generate_question("ctx", &generic), Err(Error::Validation(_))));
        let missing = |_: &str| Ok(r#"{"answer": "x"}"#.to_string());
        assert!(matches!(
            generate_ground_truth("ctx", "q", &missing),
            Err(Error::Format { .. })
        ));
        let padded = |_: &str| Ok("```json\n{\"ground truth\": \"  Forty two. \\n\"}\n```".to_string());
        assert_eq!(generate_ground_truth("ctx", "q", &padded).unwrap(), "Forty two.");
    }

    #[test]
    fn transport_errors_pass_through() {
        let down = |_: &str| -> Result<String> {
            Err(Error::Client {
                message: "503".into(),
                retryable: true,
            })
        };
        assert!(generate_question("ctx", &down).unwrap_err().is_retryable());
    }

    #[test]
    fn stub_rejects_unknown_prompts() {
        assert!(matches!(
            StubGenerator.complete("hello"),
            Err(Error::Client { retryable: false, .. })
        ));
    }
}
