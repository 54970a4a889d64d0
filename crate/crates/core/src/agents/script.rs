//! Deterministic, table-driven stand-in for every backend role.
//!
//! Script files are JSONL. Each line is either
//! `{"role": "...", "key": "...", "reply": "..."}` or
//! `{"role": "...", "key": "...", "replies": ["...", "..."]}` where the
//! n-th reply answers the n-th retry attempt (the last entry repeats once
//! exhausted). Lookup tries the caller's candidate keys most-specific
//! first, then the role's `default` entry. `{{name}}` placeholders in
//! replies are filled from the call context, so a scripted planner can echo
//! `{{claim_text}}` into its arguments.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AgentRole, Backend, ProtocolError};

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("reading script {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("script {path} line {line}: {message}")]
    Line {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// One script line as serialized on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub role: AgentRole,
    pub key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replies: Vec<String>,
}

impl ScriptEntry {
    pub fn single(role: AgentRole, key: impl Into<String>, reply: impl Into<String>) -> Self {
        Self {
            role,
            key: key.into(),
            reply: Some(reply.into()),
            replies: Vec::new(),
        }
    }

    pub fn per_attempt(role: AgentRole, key: impl Into<String>, replies: Vec<String>) -> Self {
        Self {
            role,
            key: key.into(),
            reply: None,
            replies,
        }
    }

    fn reply_sequence(&self) -> Vec<String> {
        if !self.replies.is_empty() {
            self.replies.clone()
        } else {
            self.reply.clone().into_iter().collect()
        }
    }
}

/// Immutable scripted backend shared across claim workers.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    table: BTreeMap<(AgentRole, String), Vec<String>>,
}

pub const DEFAULT_KEY: &str = "default";

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        let mut table = BTreeMap::new();
        for entry in entries {
            let replies = entry.reply_sequence();
            table.insert((entry.role, entry.key), replies);
        }
        Self { table }
    }

    pub fn from_jsonl(path: &Path) -> Result<Self, ScriptError> {
        let file = std::fs::File::open(path).map_err(|e| ScriptError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut entries = Vec::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| ScriptError::Read {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", i + 1),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(&line).map_err(|e| ScriptError::Line {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            entries.push(entry);
        }
        Ok(Self::new(entries))
    }

    fn lookup(&self, role: AgentRole, keys: &[String]) -> Option<&Vec<String>> {
        for key in keys {
            if let Some(replies) = self.table.get(&(role, key.clone())) {
                return Some(replies);
            }
        }
        self.table.get(&(role, DEFAULT_KEY.to_string()))
    }
}

/// Fill `{{name}}` placeholders from the call context.
pub fn substitute(template: &str, context: &BTreeMap<String, String>) -> String {
    let mut out = template.to_string();
    for (name, value) in context {
        out = out.replace(&format!("{{{{{name}}}}}"), value);
    }
    out
}

impl Backend for ScriptedBackend {
    fn complete(
        &self,
        role: AgentRole,
        keys: &[String],
        context: &BTreeMap<String, String>,
        attempt: u32,
    ) -> Result<String, ProtocolError> {
        let replies = self.lookup(role, keys).ok_or_else(|| {
            ProtocolError::Backend(format!("no scripted reply for {role:?} keys {keys:?}"))
        })?;
        if replies.is_empty() {
            return Err(ProtocolError::Backend(format!(
                "scripted entry for {role:?} has no replies"
            )));
        }
        let index = (attempt as usize).min(replies.len() - 1);
        Ok(substitute(&replies[index], context))
    }
}
