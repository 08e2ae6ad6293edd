use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Timeout and retry policy shared by every live client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub timeout_secs: f64,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            timeout_secs: 30.0,
            retries: 2,
            backoff_ms: 250,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct JsonPoster {
    agent: ureq::Agent,
    policy: HttpConfig,
}

impl JsonPoster {
    pub(crate) fn new(policy: HttpConfig) -> Result<Self> {
        if !policy.timeout_secs.is_finite() || policy.timeout_secs <= 0.0 {
            return Err(Error::Config(format!(
                "timeout_secs must be > 0, got {}",
                policy.timeout_secs
            )));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(policy.timeout_secs)))
            .build()
            .into();
        Ok(JsonPoster { agent, policy })
    }

    /// POSTs `body` and decodes the reply, retrying transient failures with
    /// exponential backoff.
    pub(crate) fn post<B: Serialize, T: DeserializeOwned>(
        &self,
        url: &str,
        headers: &[(&str, String)],
        body: &B,
    ) -> Result<T> {
        let mut attempt = 0;
        loop {
            match self.post_once(url, headers, body) {
                Err(e) if e.is_retryable() && attempt < self.policy.retries => {
                    std::thread::sleep(Duration::from_millis(self.policy.backoff_ms << attempt));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn post_once<B: Serialize, T: DeserializeOwned>(
        &self,
        url: &str,
        headers: &[(&str, String)],
        body: &B,
    ) -> Result<T> {
        let mut req = self.agent.post(url);
        for (k, v) in headers {
            req = req.header(*k, v.as_str());
        }
        let mut resp = req.send_json(body).map_err(client_error)?;
        let text = resp.body_mut().read_to_string().map_err(client_error)?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            message: format!("response from {url} is not the expected JSON: {e}"),
            raw: text,
        })
    }
}

fn client_error(e: ureq::Error) -> Error {
    let retryable = match &e {
        ureq::Error::StatusCode(code) => *code == 429 || *code >= 500,
        ureq::Error::Timeout(_) | ureq::Error::Io(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => {
            true
        }
        _ => false,
    };
    Error::Client {
        message: e.to_string(),
        retryable,
    }
}
