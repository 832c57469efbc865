//! LLM backends: a live chat endpoint, fixture replay, and two offline mocks.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::fixtures::{prompt_hash, FixtureStore};
use super::LlmError;

static HTTP_REQUESTS: AtomicUsize = AtomicUsize::new(0);

/// Number of HTTP requests issued by this process so far.
pub fn http_request_count() -> usize {
    HTTP_REQUESTS.load(Ordering::SeqCst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    Http,
    Replay,
    EchoClimatology,
    EchoPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmBackendConfig {
    pub mode: BackendMode,
    /// Chat-completions URL (http).
    pub endpoint: Option<String>,
    /// Pinned model identifier (http).
    pub model: Option<String>,
    /// Name of the environment variable holding the API key. The key itself is never stored.
    pub api_key_env: String,
    /// Fixture directory read in replay mode.
    pub fixtures: Option<PathBuf>,
    /// Fixture directory that every live or mock reply is recorded into.
    pub record_to: Option<PathBuf>,
    pub system_prompt: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
}

impl Default for LlmBackendConfig {
    fn default() -> Self {
        Self {
            mode: BackendMode::EchoClimatology,
            endpoint: None,
            model: None,
            api_key_env: "OPENAI_API_KEY".into(),
            fixtures: None,
            record_to: None,
            system_prompt: "You are a climate data prediction system.".into(),
            temperature: 0.0,
            max_retries: 3,
            max_in_flight: 2,
            timeout_secs: 120,
        }
    }
}

impl LlmBackendConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        let bad = |m: &str| Err(LlmError::InvalidConfig(m.to_string()));
        match self.mode {
            BackendMode::Http if self.endpoint.is_none() || self.model.is_none() => {
                bad("http mode needs endpoint and model")
            }
            BackendMode::Replay if self.fixtures.is_none() => bad("replay mode needs a fixtures directory"),
            _ if self.max_in_flight == 0 => bad("max_in_flight must be at least 1"),
            _ => Ok(()),
        }
    }
}

/// Offline values the mock backends answer with.
#[derive(Debug, Clone, Copy, Default)]
pub struct QueryContext<'a> {
    pub baseline: Option<&'a [f64]>,
    pub rainfall_payload: Option<&'a [f64]>,
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
pub struct ConcurrencyGate {
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a>(&'a ConcurrencyGate);

impl ConcurrencyGate {
    pub fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.max {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }

    pub fn in_flight(&self) -> usize {
        *self.in_flight.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

/// Shortest round-trip decimal list, so a parse reproduces the values exactly.
pub fn echo_list(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

pub struct Backend {
    cfg: LlmBackendConfig,
    gate: ConcurrencyGate,
    replay: Option<Mutex<FixtureStore>>,
    recorder: Option<Mutex<FixtureStore>>,
}

impl Backend {
    pub fn new(cfg: LlmBackendConfig) -> Result<Self, LlmError> {
        cfg.validate()?;
        let replay = match (cfg.mode, &cfg.fixtures) {
            (BackendMode::Replay, Some(dir)) => {
                if !dir.is_dir() {
                    return Err(LlmError::InvalidConfig(format!(
                        "fixture directory {} not found",
                        dir.display()
                    )));
                }
                Some(Mutex::new(FixtureStore::open(dir)?))
            }
            _ => None,
        };
        let recorder = match &cfg.record_to {
            Some(dir) if cfg.mode != BackendMode::Replay => Some(Mutex::new(FixtureStore::open(dir)?)),
            _ => None,
        };
        Ok(Self {
            gate: ConcurrencyGate::new(cfg.max_in_flight),
            cfg,
            replay,
            recorder,
        })
    }

    pub fn config(&self) -> &LlmBackendConfig {
        &self.cfg
    }

    pub fn gate(&self) -> &ConcurrencyGate {
        &self.gate
    }

    pub fn query(&self, prompt: &str, ctx: &QueryContext<'_>) -> Result<String, LlmError> {
        let reply = match self.cfg.mode {
            BackendMode::Replay => {
                let store = self.replay.as_ref().expect("replay store opened in new");
                let store = store.lock().unwrap_or_else(|e| e.into_inner());
                match store.get(prompt)? {
                    Some(fx) => fx.reply,
                    None => return Err(LlmError::MissingFixture(prompt_hash(prompt))),
                }
            }
            BackendMode::EchoClimatology => match ctx.baseline {
                Some(b) => echo_list(b),
                None => {
                    return Err(LlmError::MissingPayload(
                        "echo_climatology needs baseline values".into(),
                    ))
                }
            },
            BackendMode::EchoPayload => match ctx.rainfall_payload {
                Some(p) => echo_list(p),
                None => return Err(LlmError::MissingPayload("echo_payload needs a rainfall payload".into())),
            },
            BackendMode::Http => {
                let _permit = self.gate.acquire();
                self.http(prompt)?
            }
        };
        if let Some(rec) = &self.recorder {
            rec.lock().unwrap_or_else(|e| e.into_inner()).record(prompt, &reply)?;
        }
        Ok(reply)
    }

    fn http(&self, prompt: &str) -> Result<String, LlmError> {
        let key = std::env::var(&self.cfg.api_key_env)
            .map_err(|_| LlmError::MissingCredentials(self.cfg.api_key_env.clone()))?;
        let endpoint = self.cfg.endpoint.as_deref().expect("validated");
        let body = serde_json::json!({
            "model": self.cfg.model,
            "temperature": self.cfg.temperature,
            "messages": [
                {"role": "system", "content": self.cfg.system_prompt},
                {"role": "user", "content": prompt},
            ],
        });
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(self.cfg.timeout_secs)))
            .build()
            .into();
        HTTP_REQUESTS.fetch_add(1, Ordering::SeqCst);
        let response = agent
            .post(endpoint)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(&body);
        let mut response = match response {
            Ok(r) => r,
            Err(ureq::Error::StatusCode(code)) => {
                return Err(LlmError::Transport {
                    status: Some(code),
                    message: format!("endpoint returned HTTP {code}"),
                })
            }
            Err(e) => {
                return Err(LlmError::Transport {
                    status: None,
                    message: e.to_string(),
                })
            }
        };
        let value: serde_json::Value = response.body_mut().read_json().map_err(|e| LlmError::Transport {
            status: None,
            message: format!("unreadable response body: {e}"),
        })?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::Transport {
                status: None,
                message: "response has no choices[0].message.content".into(),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;
    use std::sync::Arc;

    #[test]
    fn gate_bounds_concurrency() {
        let gate = Arc::new(ConcurrencyGate::new(2));
        let peak = Arc::new(AtomicUsize::new(0));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let (gate, peak) = (gate.clone(), peak.clone());
                std::thread::spawn(move || {
                    let _p = gate.acquire();
                    peak.fetch_max(gate.in_flight(), Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(5));
                })
            })
            .collect();
        handles.into_iter().for_each(|h| h.join().unwrap());
        assert!(peak.load(Ordering::SeqCst) <= 2);
        assert_eq!(gate.in_flight(), 0);
    }

    #[test]
    fn replay_and_missing_fixture() {
        let dir = tempfile::tempdir().unwrap();
        FixtureStore::open(dir.path()).unwrap().record("hello", "1, 2").unwrap();
        let before = http_request_count();
        let b = Backend::new(LlmBackendConfig {
            mode: BackendMode::Replay,
            fixtures: Some(dir.path().to_path_buf()),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(b.query("hello", &QueryContext::default()).unwrap(), "1, 2");
        assert!(matches!(
            b.query("other", &QueryContext::default()),
            Err(LlmError::MissingFixture(_))
        ));
        assert_eq!(http_request_count(), before);
    }

    #[test]
    fn mocks_and_recording() {
        let dir = tempfile::tempdir().unwrap();
        let b = Backend::new(LlmBackendConfig {
            mode: BackendMode::EchoPayload,
            record_to: Some(dir.path().to_path_buf()),
            ..Default::default()
        })
        .unwrap();
        let ctx = QueryContext {
            baseline: None,
            rainfall_payload: Some(&[0.1, 2.0]),
        };
        assert_eq!(b.query("p", &ctx).unwrap(), "0.1, 2");
        assert!(matches!(
            b.query("p", &QueryContext::default()),
            Err(LlmError::MissingPayload(_))
        ));
        assert_eq!(
            FixtureStore::open(dir.path()).unwrap().get("p").unwrap().unwrap().reply,
            "0.1, 2"
        );
    }

    #[test]
    fn config_validation() {
        let http = LlmBackendConfig {
            mode: BackendMode::Http,
            ..Default::default()
        };
        assert!(matches!(http.validate(), Err(LlmError::InvalidConfig(_))));
        let missing_key = Backend::new(LlmBackendConfig {
            mode: BackendMode::Http,
            endpoint: Some("http://127.0.0.1:9/v1/chat/completions".into()),
            model: Some("m".into()),
            api_key_env: "CLIMCAST_TEST_UNSET_KEY".into(),
            ..Default::default()
        })
        .unwrap();
        assert!(matches!(
            missing_key.query("p", &QueryContext::default()),
            Err(LlmError::MissingCredentials(_))
        ));
    }
}
