//! Prompting harness: template rendering, backend queries with retry on
//! malformed replies, and numeric reply parsing.

mod backend;
mod fixtures;
mod parse;
mod prompt;

pub use backend::{
    echo_list, http_request_count, Backend, BackendMode, ConcurrencyGate, LlmBackendConfig, Permit, QueryContext,
};
pub use fixtures::{prompt_hash, Fixture, FixtureStore, RecordOutcome};
pub use parse::{extract_numbers, parse_forecast, ParsedForecast};
pub use prompt::{
    corrective_suffix, format_value, format_values, period_text, render_prompt, Payload, PromptKind, PromptSpec,
};

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("missing payload: {0}")]
    MissingPayload(String),
    #[error("no fixture for prompt hash {0}")]
    MissingFixture(String),
    #[error("transport error{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Transport { status: Option<u16>, message: String },
    #[error("environment variable {0} with the API key is not set")]
    MissingCredentials(String),
    #[error("reply has {found} numbers, expected {expected}")]
    CountMismatch { found: usize, expected: usize },
    #[error("negative rainfall value {0} in reply")]
    NegativeValue(f64),
    #[error("no usable reply after {attempts} attempts: {reason}")]
    HarnessFailure { attempts: u32, reason: String },
    #[error("fixture {0} holds a different prompt with the same hash")]
    HashCollisionWithDifferentPrompt(String),
    #[error("fixture {0} already records a different reply for this prompt")]
    FixtureConflict(String),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LlmError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        LlmError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl PartialEq for LlmError {
    fn eq(&self, other: &Self) -> bool {
        use LlmError::*;
        match (self, other) {
            (CountMismatch { found: a, expected: b }, CountMismatch { found: c, expected: d }) => a == c && b == d,
            (NegativeValue(a), NegativeValue(b)) => a == b,
            (MissingFixture(a), MissingFixture(b)) => a == b,
            _ => false,
        }
    }
}

/// Queries the backend until a reply parses to `expected` values. A reply with
/// the wrong count is retried up to the configured limit with a corrective
/// instruction appended; any other failure ends the attempt. Every raw reply is
/// handed to `on_reply(attempt, prompt, reply)` before it is parsed.
pub fn forecast(
    backend: &Backend,
    prompt: &str,
    expected: usize,
    ctx: &QueryContext<'_>,
    on_reply: &mut dyn FnMut(u32, &str, &str) -> std::io::Result<()>,
) -> Result<ParsedForecast, LlmError> {
    let max_attempts = backend.config().max_retries + 1;
    let mut text = prompt.to_string();
    let mut last = None;
    for attempt in 1..=max_attempts {
        let reply = backend.query(&text, ctx)?;
        on_reply(attempt, &text, &reply).map_err(|e| LlmError::io(Path::new("replies"), e))?;
        match parse_forecast(&reply, expected) {
            Ok(mut parsed) => {
                parsed.attempts = attempt;
                return Ok(parsed);
            }
            Err(LlmError::CountMismatch { found, .. }) => {
                log::warn!("attempt {attempt}: reply has {found} numbers, expected {expected}");
                text = format!("{prompt}{}", corrective_suffix(expected, found));
                last = Some(found);
            }
            Err(e) => return Err(e),
        }
    }
    Err(LlmError::HarnessFailure {
        attempts: max_attempts,
        reason: format!(
            "last reply had {} numbers, expected {expected}",
            last.unwrap_or_default()
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn replay(dir: &Path) -> Backend {
        Backend::new(LlmBackendConfig {
            mode: BackendMode::Replay,
            fixtures: Some(dir.to_path_buf()),
            max_retries: 2,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn retry_with_corrective_prompt() {
        let dir = tempfile::tempdir().unwrap();
        let store = FixtureStore::open(dir.path()).unwrap();
        store.record("P", "1, 2").unwrap();
        store
            .record(&format!("P{}", corrective_suffix(3, 2)), "1, 2, 3")
            .unwrap();
        let mut seen = Vec::new();
        let out = forecast(&replay(dir.path()), "P", 3, &QueryContext::default(), &mut |a, _, r| {
            seen.push((a, r.to_string()));
            Ok(())
        })
        .unwrap();
        assert_eq!(out.values, vec![1.0, 2.0, 3.0]);
        assert_eq!(out.attempts, 2);
        assert_eq!(seen, vec![(1, "1, 2".to_string()), (2, "1, 2, 3".to_string())]);
    }

    #[test]
    fn retries_exhausted() {
        let dir = tempfile::tempdir().unwrap();
        let store = FixtureStore::open(dir.path()).unwrap();
        store.record("P", "1").unwrap();
        store.record(&format!("P{}", corrective_suffix(3, 1)), "1").unwrap();
        let err = forecast(&replay(dir.path()), "P", 3, &QueryContext::default(), &mut |_, _, _| {
            Ok(())
        })
        .unwrap_err();
        assert!(matches!(err, LlmError::HarnessFailure { attempts: 3, .. }));
    }

    #[test]
    fn echo_payload_round_trip() {
        let b = Backend::new(LlmBackendConfig {
            mode: BackendMode::EchoPayload,
            ..Default::default()
        })
        .unwrap();
        let payload = [0.0, 0.1 + 0.2, 1.0 / 3.0, 17.25];
        let ctx = QueryContext {
            baseline: None,
            rainfall_payload: Some(&payload),
        };
        let out = forecast(&b, "ignored", 4, &ctx, &mut |_, _, _| Ok(())).unwrap();
        assert_eq!(out.values, payload.to_vec());
    }
}
