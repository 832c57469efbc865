//! Append-only fixture store: one JSON file per prompt, named by the SHA-256
//! of the prompt text.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::LlmError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fixture {
    pub prompt_hash: String,
    pub prompt: String,
    pub reply: String,
    pub recorded_at: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordOutcome {
    Stored,
    Unchanged,
}

pub fn prompt_hash(prompt: &str) -> String {
    Sha256::digest(prompt.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone)]
pub struct FixtureStore {
    dir: PathBuf,
}

impl FixtureStore {
    pub fn open(dir: &Path) -> Result<Self, LlmError> {
        std::fs::create_dir_all(dir).map_err(|e| LlmError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("{hash}.json"))
    }

    /// The fixture for `prompt`, if recorded. A file under the same hash holding a
    /// different prompt is a collision, never a match.
    pub fn get(&self, prompt: &str) -> Result<Option<Fixture>, LlmError> {
        let hash = prompt_hash(prompt);
        let path = self.path_for(&hash);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| LlmError::io(&path, e))?;
        let fx: Fixture = serde_json::from_str(&text)?;
        if fx.prompt != prompt {
            return Err(LlmError::HashCollisionWithDifferentPrompt(hash));
        }
        Ok(Some(fx))
    }

    pub fn record(&self, prompt: &str, reply: &str) -> Result<RecordOutcome, LlmError> {
        if let Some(existing) = self.get(prompt)? {
            if existing.reply == reply {
                return Ok(RecordOutcome::Unchanged);
            }
            return Err(LlmError::FixtureConflict(existing.prompt_hash));
        }
        let hash = prompt_hash(prompt);
        let fx = Fixture {
            prompt_hash: hash.clone(),
            prompt: prompt.to_string(),
            reply: reply.to_string(),
            recorded_at: chrono::Utc::now().to_rfc3339(),
        };
        let path = self.path_for(&hash);
        std::fs::write(&path, serde_json::to_string_pretty(&fx)?).map_err(|e| LlmError::io(&path, e))?;
        Ok(RecordOutcome::Stored)
    }

    /// Hashes of every stored fixture, sorted.
    pub fn hashes(&self) -> Result<Vec<String>, LlmError> {
        let mut out = Vec::new();
        let entries = std::fs::read_dir(&self.dir).map_err(|e| LlmError::io(&self.dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| LlmError::io(&self.dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(h) = name.strip_suffix(".json") {
                out.push(h.to_string());
            }
        }
        out.sort();
        Ok(out)
    }
}
