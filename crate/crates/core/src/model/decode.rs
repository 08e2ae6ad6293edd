use super::tokenizer::{decode, encode, render_prompt, END_OF_ANSWER};
use super::transformer::ToyModel;
use crate::adapter::AdaptedFfn;
use crate::error::Result;

impl<F: AdaptedFfn> ToyModel<F> {
    /// Greedy answer to `prompt` in the training template. Long prompts are
    /// cut from the left so the answer cue survives. Stops at the
    /// end-of-answer token or after `max_new_tokens`.
    pub fn generate(&self, prompt: &str, max_new_tokens: usize) -> Result<String> {
        let limit = self.config().max_seq_len;
        let mut tokens = encode(&render_prompt(prompt));
        let budget = limit.saturating_sub(max_new_tokens).max(1);
        if tokens.len() > budget {
            tokens.drain(..tokens.len() - budget);
        }
        let mut answer = Vec::new();
        for _ in 0..max_new_tokens {
            if tokens.len() >= limit {
                break;
            }
            let logits = self.next_token_logits(&tokens)?;
            let next = argmax(&logits);
            if next == END_OF_ANSWER {
                break;
            }
            answer.push(next);
            tokens.push(next);
        }
        Ok(decode(&answer).trim().to_string())
    }
}

/// First index of the maximum.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
