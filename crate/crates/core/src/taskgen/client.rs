use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::PromptBundle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token. `None` or
    /// an empty name sends no `Authorization` header.
    pub api_key_env: Option<String>,
    pub max_retries: u32,
    pub timeout_secs: f64,
    pub max_in_flight: usize,
    pub temperature: f64,
    /// First retry delay; doubles on every further attempt.
    pub backoff_base_ms: u64,
    pub audit_log: Option<PathBuf>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            max_retries: 5,
            timeout_secs: 60.0,
            max_in_flight: 4,
            temperature: 1.0,
            backoff_base_ms: 500,
            audit_log: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limit still hit after {attempts} attempts")]
    RateLimitExhausted { attempts: u32 },
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("invalid client configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    /// Seconds since the Unix epoch.
    pub timestamp: f64,
    pub scene_id: String,
    pub attempts: u32,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub attempts: u32,
}

/// Fair (first come, first served) counting semaphore.
struct Gate {
    state: Mutex<GateState>,
    cv: Condvar,
    limit: usize,
}

struct GateState {
    next_ticket: u64,
    now_serving: u64,
    in_flight: usize,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut st = self.state.lock().expect("gate poisoned");
        let ticket = st.next_ticket;
        st.next_ticket += 1;
        while st.now_serving != ticket || st.in_flight >= self.limit {
            st = self.cv.wait(st).expect("gate poisoned");
        }
        st.now_serving += 1;
        st.in_flight += 1;
        self.cv.notify_all();
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut st = self.0.state.lock().expect("gate poisoned");
        st.in_flight -= 1;
        self.0.cv.notify_all();
    }
}

enum Attempt {
    Done(String),
    Retry(Failure),
    Fatal(ClientError),
}

enum Failure {
    RateLimited,
    Transport(String),
}

/// Blocking chat-completion client, safe to share across threads.
pub struct LlmClient {
    cfg: ClientConfig,
    http: reqwest::blocking::Client,
    gate: Gate,
    audit: Mutex<Vec<AuditRecord>>,
}

impl LlmClient {
    pub fn new(cfg: ClientConfig) -> Result<Self, ClientError> {
        if cfg.max_in_flight == 0 {
            return Err(ClientError::Config("max_in_flight must be at least 1".into()));
        }
        if !(cfg.timeout_secs.is_finite() && cfg.timeout_secs > 0.0) {
            return Err(ClientError::Config("timeout_secs must be positive".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs))
            .build()
            .map_err(|e| ClientError::Config(e.to_string()))?;
        let limit = cfg.max_in_flight;
        Ok(Self {
            cfg,
            http,
            gate: Gate {
                state: Mutex::new(GateState {
                    next_ticket: 0,
                    now_serving: 0,
                    in_flight: 0,
                }),
                cv: Condvar::new(),
                limit,
            },
            audit: Mutex::new(Vec::new()),
        })
    }

    pub fn config(&self) -> &ClientConfig {
        &self.cfg
    }

    pub fn audit_records(&self) -> Vec<AuditRecord> {
        self.audit.lock().expect("audit poisoned").clone()
    }

    fn api_key(&self) -> Result<Option<String>, ClientError> {
        match &self.cfg.api_key_env {
            None => Ok(None),
            Some(var) if var.is_empty() => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(v) if !v.is_empty() => Ok(Some(v)),
                _ => Err(ClientError::Auth(format!("environment variable {var} is not set"))),
            },
        }
    }

    fn record(&self, scene_id: &str, attempts: u32, status: String) {
        let rec = AuditRecord {
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
            scene_id: scene_id.to_string(),
            attempts,
            status,
        };
        if let Some(path) = &self.cfg.audit_log {
            // audit logging must never fail a request
            if let Ok(mut f) = OpenOptions::new().create(true).append(true).open(path) {
                let _ = writeln!(f, "{}", serde_json::to_string(&rec).expect("plain struct"));
            }
        }
        self.audit.lock().expect("audit poisoned").push(rec);
    }

    fn attempt(&self, body: &serde_json::Value, key: Option<&str>) -> Attempt {
        let mut req = self.http.post(&self.cfg.endpoint).json(body);
        if let Some(k) = key {
            req = req.bearer_auth(k);
        }
        let resp = match req.send() {
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
            401 | 403 => return Attempt::Fatal(ClientError::Auth(format!("HTTP {status}"))),
            429 => return Attempt::Retry(Failure::RateLimited),
            500..=599 => return Attempt::Retry(Failure::Transport(format!("HTTP {status}"))),
            _ => {
                return Attempt::Fatal(ClientError::Transport {
                    attempts: 0,
                    message: format!("HTTP {status}: {text}"),
                })
            }
        }
        let value: serde_json::Value = match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(e) => return Attempt::Fatal(ClientError::MalformedResponse(e.to_string())),
        };
        match value.pointer("/choices/0/message/content").and_then(|v| v.as_str()) {
            Some(content) => Attempt::Done(content.to_string()),
            None => Attempt::Fatal(ClientError::MalformedResponse("missing choices[0].message.content".into())),
        }
    }

    /// Sends one prompt, retrying timeouts, 429 and 5xx with exponential
    /// backoff. A request keeps its in-flight slot across its retries.
    pub fn complete(&self, bundle: &PromptBundle) -> Result<Completion, ClientError> {
        let key = match self.api_key() {
            Ok(k) => k,
            Err(e) => {
                self.record(&bundle.scene_id, 0, "auth_error".into());
                return Err(e);
            }
        };
        let body = json!({
            "model": self.cfg.model,
            "temperature": self.cfg.temperature,
            "messages": [
                {"role": "system", "content": bundle.system_text},
                {"role": "user", "content": bundle.user_text},
            ],
        });
        let _permit = self.gate.acquire();
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            let failure = match self.attempt(&body, key.as_deref()) {
                Attempt::Done(text) => {
                    self.record(&bundle.scene_id, attempts, "ok".into());
                    return Ok(Completion { text, attempts });
                }
                Attempt::Fatal(err) => {
                    let err = match err {
                        ClientError::Transport { message, .. } => ClientError::Transport { attempts, message },
                        e => e,
                    };
                    let status = match &err {
                        ClientError::Auth(_) => "auth_error",
                        ClientError::MalformedResponse(_) => "malformed_response",
                        _ => "transport_error",
                    };
                    self.record(&bundle.scene_id, attempts, status.into());
                    return Err(err);
                }
                Attempt::Retry(f) => f,
            };
            if attempts > self.cfg.max_retries {
                let (status, err) = match failure {
                    Failure::RateLimited => ("rate_limit_exhausted", ClientError::RateLimitExhausted { attempts }),
                    Failure::Transport(message) => ("transport_error", ClientError::Transport { attempts, message }),
                };
                self.record(&bundle.scene_id, attempts, status.into());
                return Err(err);
            }
            let shift = (attempts - 1).min(16);
            std::thread::sleep(Duration::from_millis(self.cfg.backoff_base_ms.saturating_mul(1 << shift)));
        }
    }
}
