use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{encode_image, ChatRequest, Role, TokenUsage, UserPart, VlmBackend, VlmReply};
use crate::{Error, Result};

pub const API_KEY_ENV: &str = "VLM_API_KEY";
pub const ENDPOINT_ENV: &str = "VLM_ENDPOINT";
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    /// First backoff delay; doubles on every retry.
    pub backoff_base: Duration,
    pub max_in_flight: usize,
    /// Zero disables the per-minute budget.
    pub requests_per_minute: u32,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: DEFAULT_ENDPOINT.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            max_retries: 3,
            backoff_base: Duration::from_secs(1),
            max_in_flight: 4,
            requests_per_minute: 0,
        }
    }
}

impl HttpConfig {
    /// Defaults with endpoint and key taken from the environment.
    pub fn from_env() -> Self {
        Self {
            endpoint: std::env::var(ENDPOINT_ENV).unwrap_or_else(|_| DEFAULT_ENDPOINT.into()),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            ..Self::default()
        }
    }
}

pub struct HttpBackend {
    cfg: HttpConfig,
    agent: ureq::Agent,
    in_flight: Mutex<usize>,
    slot_free: Condvar,
    recent: Mutex<VecDeque<Instant>>,
}

enum Attempt {
    Done(VlmReply),
    Retry { reason: String, after: Option<Duration> },
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Result<Self> {
        if cfg.max_in_flight == 0 {
            return Err(Error::InvalidSpec("max_in_flight must be at least 1".into()));
        }
        if cfg.endpoint.is_empty() {
            return Err(Error::InvalidSpec("empty endpoint".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            cfg,
            agent,
            in_flight: Mutex::new(0),
            slot_free: Condvar::new(),
            recent: Mutex::new(VecDeque::new()),
        })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.cfg
    }

    /// Builds the chat-completions JSON body.
    pub fn request_body(request: &ChatRequest) -> Result<Value> {
        let mut messages = vec![json!({"role": "system", "content": request.system_text})];
        for turn in &request.history {
            let role = match turn.role {
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            messages.push(json!({"role": role, "content": content_parts(&turn.parts)?}));
        }
        messages.push(json!({"role": "user", "content": content_parts(&request.user_parts)?}));
        Ok(json!({
            "model": request.model_name,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }))
    }

    fn acquire(&self) {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= self.cfg.max_in_flight {
            n = self.slot_free.wait(n).unwrap();
        }
        *n += 1;
    }

    fn release(&self) {
        *self.in_flight.lock().unwrap() -= 1;
        self.slot_free.notify_one();
    }

    fn wait_for_budget(&self) {
        let rpm = self.cfg.requests_per_minute as usize;
        if rpm == 0 {
            return;
        }
        let window = Duration::from_secs(60);
        loop {
            let mut recent = self.recent.lock().unwrap();
            let now = Instant::now();
            while recent.front().is_some_and(|t| now.duration_since(*t) >= window) {
                recent.pop_front();
            }
            if recent.len() < rpm {
                recent.push_back(now);
                return;
            }
            let wait = window - now.duration_since(recent[0]);
            drop(recent);
            thread::sleep(wait);
        }
    }

    fn attempt(&self, body: &Value) -> Result<Attempt> {
        self.wait_for_budget();
        let mut req = self.agent.post(&self.cfg.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.cfg.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => {
                return Ok(Attempt::Retry {
                    reason: format!("transport: {e}"),
                    after: None,
                })
            }
        };
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            let after = resp
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|s| s.trim().parse::<f64>().ok())
                .filter(|s| s.is_finite() && *s >= 0.0)
                .map(Duration::from_secs_f64);
            return Ok(Attempt::Retry {
                reason: format!("status {status}"),
                after,
            });
        }
        if !(200..300).contains(&status) {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(Error::Http(format!("status {status}: {}", text.chars().take(300).collect::<String>())));
        }
        let value: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| Error::Http(format!("invalid response body: {e}")))?;
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Http("response has no choices[0].message.content".into()))?
            .to_string();
        let usage = value.get("usage").and_then(|u| {
            Some(TokenUsage {
                prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
                completion_tokens: u.get("completion_tokens")?.as_u64()?,
            })
        });
        Ok(Attempt::Done(VlmReply {
            text,
            usage,
            backend_id: self.id(),
        }))
    }
}

fn content_parts(parts: &[UserPart]) -> Result<Vec<Value>> {
    parts
        .iter()
        .map(|p| match p {
            UserPart::Text(t) => Ok(json!({"type": "text", "text": t})),
            UserPart::Image(img) => {
                let enc = encode_image(img)?;
                Ok(json!({"type": "image_url", "image_url": {"url": enc.data_uri()}}))
            }
        })
        .collect()
}

impl VlmBackend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.cfg.endpoint)
    }

    fn complete(&self, request: &ChatRequest) -> Result<VlmReply> {
        let body = Self::request_body(request)?;
        let mut last = String::new();
        for retry in 0..=self.cfg.max_retries {
            self.acquire();
            let outcome = self.attempt(&body);
            self.release();
            match outcome? {
                Attempt::Done(reply) => return Ok(reply),
                Attempt::Retry { reason, after } => {
                    last = reason;
                    if retry == self.cfg.max_retries {
                        break;
                    }
                    let delay = after.unwrap_or(self.cfg.backoff_base * 2u32.pow(retry));
                    log::warn!("vlm request failed ({last}); retrying in {delay:?}");
                    thread::sleep(delay);
                }
            }
        }
        Err(Error::Http(format!("giving up after {} retries: {last}", self.cfg.max_retries)))
    }
}
