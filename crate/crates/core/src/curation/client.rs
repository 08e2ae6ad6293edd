use serde::{Deserialize, Serialize};

use super::generate::{first_sentence, stub_question};
use crate::error::{Error, Result};
use crate::http::{HttpConfig, JsonPoster};
use crate::prompts::{self, GROUND_TRUTH_GENERATION, QUESTION_GENERATION, QUESTION_REGENERATION};

/// A text-completion service: one prompt in, raw text out.
pub trait GeneratorClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String>;
}

impl<F> GeneratorClient for F
where
    F: Fn(&str) -> Result<String> + Send + Sync,
{
    fn complete(&self, prompt: &str) -> Result<String> {
        self(prompt)
    }
}

/// Offline generator with fixed rules.
///
/// * question generation: [`stub_question`] on the context;
/// * ground truth: the first sentence of the context;
/// * question regeneration: [`stub_question`] on the answer.
///
/// Any other prompt is rejected.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StubGenerator;

impl GeneratorClient for StubGenerator {
    fn complete(&self, prompt: &str) -> Result<String> {
        let unknown = || Error::Client {
            message: "stub generator does not recognise this prompt".into(),
            retryable: false,
        };
        let (template, slots) = prompts::identify(prompt).ok_or_else(unknown)?;
        let payload = if template == QUESTION_GENERATION {
            serde_json::json!({ "question": stub_question(&slots["context"]) })
        } else if template == GROUND_TRUTH_GENERATION {
            serde_json::json!({ "ground truth": first_sentence(&slots["context"]) })
        } else if template == QUESTION_REGENERATION {
            serde_json::json!({ "question": stub_question(&slots["response"]) })
        } else {
            return Err(unknown());
        };
        Ok(payload.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatConfig {
    /// Chat-completion endpoint URL.
    pub url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub http: HttpConfig,
}

/// Live chat-completion client (`{model, messages}` in, first choice out).
#[derive(Debug, Clone)]
pub struct ChatClient {
    url: String,
    model: String,
    api_key: Option<String>,
    poster: JsonPoster,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    content: String,
}

impl ChatClient {
    pub fn new(cfg: &ChatConfig) -> Result<Self> {
        let api_key = match &cfg.api_key_env {
            Some(var) => {
                Some(std::env::var(var).map_err(|_| Error::Config(format!("environment variable {var} is not set")))?)
            }
            None => None,
        };
        Ok(ChatClient {
            url: cfg.url.clone(),
            model: cfg.model.clone(),
            api_key,
            poster: JsonPoster::new(cfg.http.clone())?,
        })
    }
}

impl GeneratorClient for ChatClient {
    fn complete(&self, prompt: &str) -> Result<String> {
        let headers: Vec<(&str, String)> = self
            .api_key
            .iter()
            .map(|k| ("Authorization", format!("Bearer {k}")))
            .collect();
        let req = ChatRequest {
            model: &self.model,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
        };
        let resp: ChatResponse = self.poster.post(&self.url, &headers, &req)?;
        resp.choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| Error::Format {
                message: "chat response has no choices".into(),
                raw: String::new(),
            })
    }
}
