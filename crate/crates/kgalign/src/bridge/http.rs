//! Chat-completions HTTP backend: generation only, bearer auth from the
//! environment, exponential backoff, and a hard cap on in-flight requests.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{Backend, BackendError, Generation, RenderedPrompt, Result, ScoreOutcome};

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token; unset means no
    /// Authorization header (local inference servers).
    pub auth_env: String,
    pub timeout: Duration,
    /// Retries after the first attempt.
    pub max_retries: u32,
    /// Maximum concurrent in-flight requests.
    pub concurrency: usize,
    pub initial_backoff: Duration,
    /// Soft-token dimension reported to adapter builders; the wire protocol
    /// itself never sees slot vectors.
    pub soft_dim: usize,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8080/v1/chat/completions".into(),
            model: "local-model".into(),
            auth_env: "KGALIGN_API_TOKEN".into(),
            timeout: Duration::from_secs(30),
            max_retries: 3,
            concurrency: 4,
            initial_backoff: Duration::from_millis(100),
            soft_dim: 96,
        }
    }
}

/// Counting semaphore over std primitives.
struct Gate {
    state: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(permits: usize) -> Self {
        Self {
            state: Mutex::new(permits),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut n = self.state.lock().unwrap();
        while *n == 0 {
            n = self.cv.wait(n).unwrap();
        }
        *n -= 1;
        GateGuard { gate: self }
    }
}

struct GateGuard<'a> {
    gate: &'a Gate,
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.gate.state.lock().unwrap() += 1;
        self.gate.cv.notify_one();
    }
}

pub struct HttpBackend {
    cfg: HttpConfig,
    client: reqwest::blocking::Client,
    gate: Gate,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| BackendError::BadResponse(e.to_string()))?;
        Ok(Self {
            gate: Gate::new(cfg.concurrency.max(1)),
            cfg,
            client,
        })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.cfg
    }

    fn auth_token(&self) -> Option<String> {
        std::env::var(&self.cfg.auth_env).ok().filter(|t| !t.is_empty())
    }

    fn post_once(&self, payload: &serde_json::Value) -> std::result::Result<String, String> {
        let mut req = self
            .client
            .post(&self.cfg.endpoint)
            .header("Content-Type", "application/json");
        if let Some(token) = self.auth_token() {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let resp = req.json(payload).send().map_err(|e| e.to_string())?;
        let status = resp.status();
        let body = resp.text().map_err(|e| e.to_string())?;
        if !status.is_success() {
            return Err(format!("HTTP {status}: {body}"));
        }
        Ok(body)
    }
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn soft_dim(&self) -> usize {
        self.cfg.soft_dim
    }

    fn supports_score(&self) -> bool {
        false
    }

    fn score(
        &self,
        _prompt: &RenderedPrompt,
        _slots: &[Vec<f32>],
        _target: &str,
    ) -> Result<ScoreOutcome> {
        Err(BackendError::ScoreUnsupported("http".into()))
    }

    /// Slot vectors are ignored on the wire: callers render prompts with
    /// the entity-name resource block when targeting this backend.
    fn generate(
        &self,
        prompt: &RenderedPrompt,
        _slots: &[Vec<f32>],
        n: usize,
    ) -> Result<Vec<Generation>> {
        let payload = json!({
            "model": self.cfg.model,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
            "n": n,
            "temperature": 0,
        });

        let _permit = self.gate.acquire();
        let mut last_error = String::new();
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 {
                let backoff = self.cfg.initial_backoff * 2u32.pow(attempt - 1);
                std::thread::sleep(backoff);
            }
            match self.post_once(&payload) {
                Ok(body) => {
                    let parsed: ChatResponse = serde_json::from_str(&body)
                        .map_err(|e| BackendError::BadResponse(format!("{e}: {body}")))?;
                    let out = parsed
                        .choices
                        .into_iter()
                        .enumerate()
                        .map(|(i, c)| Generation {
                            text: c.message.content,
                            score: 1.0 / (i as f64 + 1.0),
                        })
                        .take(n)
                        .collect();
                    return Ok(out);
                }
                Err(e) => last_error = e,
            }
        }
        Err(BackendError::Exhausted {
            attempts: self.cfg.max_retries + 1,
            last: last_error,
        })
    }

    fn state_fingerprint(&self) -> Vec<u8> {
        format!(
            "{}|{}|{}|{}|{}",
            self.cfg.endpoint,
            self.cfg.model,
            self.cfg.max_retries,
            self.cfg.concurrency,
            self.cfg.soft_dim
        )
        .into_bytes()
    }
}
