use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatRequest, Turn};

/// Environment variable holding the bearer token for the live endpoint.
pub const API_KEY_ENV: &str = "SENTI_PROMPT_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: f64,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_secs(1),
            factor: 2.0,
            jitter: true,
        }
    }
}

impl RetryPolicy {
    /// Sleep before attempt `attempt + 1`, given `attempt` (1-based) failed.
    pub fn delay(&self, attempt: u32) -> Duration {
        let exp = self.factor.powi(attempt.saturating_sub(1) as i32);
        let jitter = if self.jitter {
            rand::thread_rng().gen_range(1.0..1.5)
        } else {
            1.0
        };
        self.base_delay.mul_f64(exp * jitter)
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub api_key: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    /// Upper bound on requests in flight across all threads.
    pub max_in_flight: usize,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>) -> Self {
        HttpConfig {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            timeout: Duration::from_secs(60),
            retry: RetryPolicy::default(),
            max_in_flight: 4,
        }
    }
}

struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Gate {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
    messages: &'a [Turn],
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

enum Attempt {
    Done(String),
    Retry(Failure),
    Fatal(BackendError),
}

enum Failure {
    Transport(String),
    RateLimited,
}

/// Client for hosted chat-completion endpoints speaking the common
/// `{model, temperature, messages}` → `{choices[0].message.content}` protocol.
pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    gate: Gate,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        let gate = Gate::new(config.max_in_flight);
        Ok(HttpBackend {
            config,
            client,
            gate,
        })
    }

    fn attempt(&self, body: &WireRequest<'_>) -> Attempt {
        let _permit = self.gate.acquire();
        let resp = match self
            .client
            .post(&self.config.endpoint)
            .bearer_auth(&self.config.api_key)
            .json(body)
            .send()
        {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(Failure::Transport(e.to_string())),
        };
        let status = resp.status();
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(Failure::Transport(e.to_string())),
        };
        match status.as_u16() {
            200..=299 => {}
            429 => return Attempt::Retry(Failure::RateLimited),
            401 | 403 => {
                return Attempt::Fatal(BackendError::Unauthorized {
                    status: status.as_u16(),
                })
            }
            code => {
                return Attempt::Fatal(BackendError::Status {
                    status: code,
                    body: text.chars().take(500).collect(),
                })
            }
        }
        let parsed: WireResponse = match serde_json::from_str(&text) {
            Ok(p) => p,
            Err(e) => return Attempt::Fatal(BackendError::Malformed(e.to_string())),
        };
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .map(|c| c.trim().to_string());
        match content {
            Some(c) if !c.is_empty() => Attempt::Done(c),
            Some(_) => Attempt::Fatal(BackendError::Malformed("empty message content".into())),
            None => Attempt::Fatal(BackendError::Malformed(
                "no choices[0].message.content".into(),
            )),
        }
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let p = request.params();
        let body = WireRequest {
            model: &p.model,
            temperature: p.temperature,
            max_tokens: p.max_output_tokens,
            messages: request.messages(),
        };
        let max = self.config.retry.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            let failure = match self.attempt(&body) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(f) => f,
            };
            if attempt >= max {
                return Err(match failure {
                    Failure::Transport(message) => BackendError::Transport {
                        attempts: attempt,
                        message,
                    },
                    Failure::RateLimited => BackendError::RateLimited { attempts: attempt },
                });
            }
            let wait = self.config.retry.delay(attempt);
            log::warn!("request attempt {attempt} failed, retrying in {wait:?}");
            std::thread::sleep(wait);
            attempt += 1;
        }
    }
}
