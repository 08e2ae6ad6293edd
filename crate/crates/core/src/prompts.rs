//! Prompt templates with `{name}` slots, shipped as text assets.
//!
//! The generation, open/closed-book and fluency templates are stored exactly
//! as published, odd line breaks included. The faith, filter and
//! question-regeneration templates are written for this crate.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub name: &'static str,
    pub text: &'static str,
}

pub const QUESTION_GENERATION: Template = Template {
    name: "question_generation",
    text: include_str!("../assets/prompts/question_generation.txt"),
};
pub const GROUND_TRUTH_GENERATION: Template = Template {
    name: "ground_truth_generation",
    text: include_str!("../assets/prompts/ground_truth_generation.txt"),
};
pub const OPEN_BOOK: Template = Template {
    name: "open_book",
    text: include_str!("../assets/prompts/open_book.txt"),
};
pub const CLOSED_BOOK: Template = Template {
    name: "closed_book",
    text: include_str!("../assets/prompts/closed_book.txt"),
};
pub const FLUENCY: Template = Template {
    name: "fluency",
    text: include_str!("../assets/prompts/fluency.txt"),
};
pub const FAITH: Template = Template {
    name: "faith",
    text: include_str!("../assets/prompts/faith.txt"),
};
pub const FILTER: Template = Template {
    name: "filter",
    text: include_str!("../assets/prompts/filter.txt"),
};
pub const QUESTION_REGENERATION: Template = Template {
    name: "question_regeneration",
    text: include_str!("../assets/prompts/question_regeneration.txt"),
};

pub const ALL: [Template; 8] = [
    QUESTION_GENERATION,
    GROUND_TRUTH_GENERATION,
    OPEN_BOOK,
    CLOSED_BOOK,
    FLUENCY,
    FAITH,
    FILTER,
    QUESTION_REGENERATION,
];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment<'a> {
    Literal(&'a str),
    Slot(&'a str),
}

/// Splits on `{identifier}`; any other brace is literal text.
fn segments(text: &str) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    let mut lit_start = 0;
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j].is_ascii_lowercase() || bytes[j] == b'_') {
                j += 1;
            }
            if j > i + 1 && j < bytes.len() && bytes[j] == b'}' {
                if lit_start < i {
                    out.push(Segment::Literal(&text[lit_start..i]));
                }
                out.push(Segment::Slot(&text[i + 1..j]));
                i = j + 1;
                lit_start = i;
                continue;
            }
        }
        i += 1;
    }
    if lit_start < text.len() {
        out.push(Segment::Literal(&text[lit_start..]));
    }
    out
}

impl Template {
    pub fn slots(&self) -> Vec<&'static str> {
        let mut names: Vec<&'static str> = segments(self.text)
            .into_iter()
            .filter_map(|s| match s {
                Segment::Slot(n) => Some(n),
                Segment::Literal(_) => None,
            })
            .collect();
        names.dedup();
        names
    }

    /// Substitutes every slot in one pass; values are never re-scanned.
    pub fn fill(&self, values: &[(&str, &str)]) -> Result<String> {
        for (k, _) in values {
            if !self.slots().contains(k) {
                return Err(Error::Argument(format!("template {} has no slot {{{k}}}", self.name)));
            }
        }
        let mut out = String::with_capacity(self.text.len());
        for seg in segments(self.text) {
            match seg {
                Segment::Literal(s) => out.push_str(s),
                Segment::Slot(name) => {
                    let v = values.iter().find(|(k, _)| *k == name).ok_or_else(|| {
                        Error::Argument(format!("template {} needs a value for {{{name}}}", self.name))
                    })?;
                    out.push_str(v.1);
                }
            }
        }
        Ok(out)
    }

    /// Recovers slot values from a filled prompt, or `None` if `filled` was not
    /// produced by this template. Slots are matched right to left, so a later
    /// literal occurring inside an earlier value is tolerated.
    pub fn extract(&self, filled: &str) -> Option<BTreeMap<String, String>> {
        let segs = segments(self.text);
        let mut rest = filled;
        let mut lead = 0;
        if let Some(Segment::Literal(s)) = segs.first() {
            rest = rest.strip_prefix(s)?;
            lead = 1;
        }
        let mut tail = segs.len();
        if let Some(Segment::Literal(s)) = segs.last() {
            if segs.len() > lead {
                rest = rest.strip_suffix(s)?;
                tail -= 1;
            }
        }
        let mut values = BTreeMap::new();
        let body = &segs[lead..tail];
        let mut i = body.len();
        while i > 0 {
            i -= 1;
            let Segment::Slot(name) = body[i] else {
                return None;
            };
            if i == 0 {
                values.insert(name.to_string(), rest.to_string());
                break;
            }
            i -= 1;
            let Segment::Literal(lit) = body[i] else {
                return None;
            };
            let at = rest.rfind(lit)?;
            values.insert(name.to_string(), rest[at + lit.len()..].to_string());
            rest = &rest[..at];
            if i == 0 {
                return rest.is_empty().then_some(values);
            }
        }
        Some(values)
    }
}

/// Identifies which shipped template produced `filled`.
pub fn identify(filled: &str) -> Option<(Template, BTreeMap<String, String>)> {
    ALL.iter().find_map(|t| t.extract(filled).map(|v| (*t, v)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_templates_keep_their_text() {
        assert!(QUESTION_GENERATION
            .text
            .starts_with("You are a University Professor creating \na test"));
        assert!(GROUND_TRUTH_GENERATION
            .text
            .contains("f\nollowing keys:\n\u{201c}ground truth\u{201d} \\n\\n"));
        assert!(OPEN_BOOK.text.contains("please respond with 'I don't know':"));
        assert!(FLUENCY.text.contains("syntax, c\noherence"));
        assert_eq!(OPEN_BOOK.slots(), ["context", "question"]);
        assert_eq!(CLOSED_BOOK.slots(), ["question"]);
        assert_eq!(FLUENCY.slots(), ["response"]);
        assert_eq!(FILTER.slots(), ["context", "distractors", "question", "response"]);
    }

    #[test]
    fn json_braces_are_literal() {
        assert_eq!(FAITH.slots(), ["context", "question", "response"]);
        let filled = FAITH
            .fill(&[("context", "c"), ("question", "q"), ("response", "r")])
            .unwrap();
        assert!(filled.contains(r#"{"score": <number between 0 and 1>}"#));
    }

    #[test]
    fn fill_then_extract() {
        let ctx = "Question: tricky {question} context\nwith lines";
        let filled = GROUND_TRUTH_GENERATION
            .fill(&[("context", ctx), ("question", "Why?")])
            .unwrap();
        let (t, v) = identify(&filled).unwrap();
        assert_eq!(t, GROUND_TRUTH_GENERATION);
        assert_eq!(v["context"], ctx);
        assert_eq!(v["question"], "Why?");
        assert!(identify("something else entirely").is_none());
    }

    #[test]
    fn fill_errors() {
        assert!(CLOSED_BOOK.fill(&[]).is_err());
        assert!(CLOSED_BOOK.fill(&[("question", "q"), ("context", "c")]).is_err());
    }
}
