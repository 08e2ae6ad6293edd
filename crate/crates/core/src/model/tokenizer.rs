//! Byte-level tokenizer and the QA training template.

/// Token id that terminates a generated answer.
pub const END_OF_ANSWER: usize = b'\n' as usize;

pub fn encode(text: &str) -> Vec<usize> {
    text.bytes().map(usize::from).collect()
}

/// Ids >= 256 are dropped; invalid UTF-8 is replaced.
pub fn decode(tokens: &[usize]) -> String {
    let bytes: Vec<u8> = tokens.iter().filter_map(|&t| u8::try_from(t).ok()).collect();
    String::from_utf8_lossy(&bytes).into_owned()
}

/// Prompt prefix that precedes the answer.
pub fn render_prompt(question: &str) -> String {
    format!("Q: {question}\nA: ")
}

/// `Q: {q}\nA: {a}\n` with the index of the first answer token. The trailing
/// newline is the end-of-answer marker and is part of the supervised span.
pub fn render_example(question: &str, answer: &str) -> (Vec<usize>, usize) {
    let prompt = encode(&render_prompt(question));
    let start = prompt.len();
    let mut tokens = prompt;
    tokens.extend(encode(answer));
    tokens.push(END_OF_ANSWER);
    (tokens, start)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn template_layout() {
        let (tokens, start) = render_example("why?", "because");
        assert_eq!(decode(&tokens), "Q: why?\nA: because\n");
        assert_eq!(decode(&tokens[start..]), "because\n");
    }

    proptest! {
        #[test]
        fn ascii_round_trips(s in "[ -~\\n\\t]{0,64}") {
            prop_assert_eq!(decode(&encode(&s)), s);
        }
    }
}
