//! Shared domain types: claims, evidence, trajectories, labels, verdicts.

use std::collections::{BTreeMap, VecDeque};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Score;

/// Default cap on normalized observation content, in characters.
pub const DEFAULT_CONTENT_CAP: usize = 2048;
/// Marker appended to observation content cut at the cap.
pub const TRUNCATION_MARKER: &str = "[TRUNCATED]";
/// Default bound on the short-term action/observation memory.
pub const DEFAULT_MEMORY_BOUND: usize = 5;

#[derive(Debug, Error)]
pub enum ModelError {
    /// The tool produced nothing usable.
    #[error("empty observation from {source_id}")]
    EmptyObservation { source_id: String },
}

/// An image reference paired with a textual assertion; the unit of verification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub id: String,
    /// Path or URI to the image bytes; opaque at this layer.
    pub image_ref: String,
    pub text: String,
    /// Dataset-specific fields (publication date, source outlet, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl Claim {
    pub fn new(id: impl Into<String>, image_ref: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            image_ref: image_ref.into(),
            text: text.into(),
            metadata: BTreeMap::new(),
        }
    }
}

/// Modality of an observation or evidence atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    Image,
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Modality::Text => write!(f, "text"),
            Modality::Image => write!(f, "image"),
        }
    }
}

/// One per-modality verification goal rooted under a claim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subtask {
    Text,
    Image,
}

impl Subtask {
    pub const ALL: [Subtask; 2] = [Subtask::Text, Subtask::Image];

    pub fn modality(self) -> Modality {
        match self {
            Subtask::Text => Modality::Text,
            Subtask::Image => Modality::Image,
        }
    }

    pub fn other(self) -> Subtask {
        match self {
            Subtask::Text => Subtask::Image,
            Subtask::Image => Subtask::Text,
        }
    }
}

impl std::fmt::Display for Subtask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Subtask::Text => write!(f, "text"),
            Subtask::Image => write!(f, "image"),
        }
    }
}

/// A normalized unit of observation produced by one tool invocation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceAtom {
    pub modality: Modality,
    /// Normalized observation summary, capped at the configured length.
    pub content: String,
    /// Tool name plus locator, e.g. `web_search#3`.
    pub source: String,
    pub timestamp: DateTime<Utc>,
}

/// Normalize a raw observation into an evidence atom.
///
/// Content longer than `cap` characters is cut to a `cap`-char prefix with
/// [`TRUNCATION_MARKER`] appended. An observation that is empty after
/// trimming is rejected.
pub fn normalize_evidence(
    observation: &str,
    modality: Modality,
    source: &str,
    now: DateTime<Utc>,
    cap: usize,
) -> Result<EvidenceAtom, ModelError> {
    let trimmed = observation.trim();
    if trimmed.is_empty() {
        return Err(ModelError::EmptyObservation {
            source_id: source.to_string(),
        });
    }
    let content = if trimmed.chars().count() > cap {
        let mut prefix: String = trimmed.chars().take(cap).collect();
        prefix.push_str(TRUNCATION_MARKER);
        prefix
    } else {
        trimmed.to_string()
    };
    Ok(EvidenceAtom {
        modality,
        content,
        source: source.to_string(),
        timestamp: now,
    })
}

/// A planner-proposed tool invocation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Action {
    pub tool: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub args: BTreeMap<String, String>,
}

impl Action {
    pub fn new(tool: impl Into<String>) -> Self {
        Self {
            tool: tool.into(),
            args: BTreeMap::new(),
        }
    }

    pub fn with_arg(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.args.insert(key.into(), value.into());
        self
    }
}

/// The ordered action/observation sequence of one search path.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<(Action, String)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Tool identifiers in step order, the input to the structural scores.
    pub fn tools(&self) -> Vec<String> {
        self.steps.iter().map(|(a, _)| a.tool.clone()).collect()
    }

    pub fn last_tool(&self) -> Option<&str> {
        self.steps.last().map(|(a, _)| a.tool.as_str())
    }

    pub fn extended(&self, action: Action, observation: String) -> Trajectory {
        let mut steps = self.steps.clone();
        steps.push((action, observation));
        Trajectory { steps }
    }
}

/// Search state for one subtask: the claim, accumulated evidence, a bounded
/// memory of recent steps, and the active subtask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchState {
    pub claim: Claim,
    /// Append-only within one search.
    pub evidence: Vec<EvidenceAtom>,
    /// Most recent (action, observation) pairs, oldest evicted beyond the bound.
    pub memory: VecDeque<(Action, String)>,
    pub subtask: Subtask,
    pub memory_bound: usize,
}

impl SearchState {
    pub fn initial(claim: Claim, subtask: Subtask, memory_bound: usize) -> Self {
        Self {
            claim,
            evidence: Vec::new(),
            memory: VecDeque::new(),
            subtask,
            memory_bound,
        }
    }

    /// Functional update: returns a new state with the atom appended and the
    /// memory advanced, leaving `self` untouched.
    pub fn advanced(&self, atom: EvidenceAtom, action: Action, observation: String) -> SearchState {
        let mut next = self.clone();
        next.evidence.push(atom);
        next.memory.push_back((action, observation));
        while next.memory.len() > next.memory_bound {
            next.memory.pop_front();
        }
        next
    }
}

/// Per-modality Stage-1 label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SubtaskLabel {
    TextReal,
    TextFake,
    ImageReal,
    ImageFake,
}

impl SubtaskLabel {
    pub fn from_stance(subtask: Subtask, stance: Stance) -> Self {
        match (subtask, stance) {
            (Subtask::Text, Stance::Real) => SubtaskLabel::TextReal,
            (Subtask::Text, Stance::Fake) => SubtaskLabel::TextFake,
            (Subtask::Image, Stance::Real) => SubtaskLabel::ImageReal,
            (Subtask::Image, Stance::Fake) => SubtaskLabel::ImageFake,
        }
    }

    pub fn is_fake(self) -> bool {
        matches!(self, SubtaskLabel::TextFake | SubtaskLabel::ImageFake)
    }
}

impl std::fmt::Display for SubtaskLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SubtaskLabel::TextReal => "TEXT_REAL",
            SubtaskLabel::TextFake => "TEXT_FAKE",
            SubtaskLabel::ImageReal => "IMAGE_REAL",
            SubtaskLabel::ImageFake => "IMAGE_FAKE",
        };
        write!(f, "{s}")
    }
}

/// Binary stance a grader takes on a subtask's evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stance {
    Real,
    Fake,
}

/// The four-way claim-level label space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VerdictLabel {
    Real,
    TextFake,
    ImageFake,
    BothFake,
}

impl VerdictLabel {
    pub const ALL: [VerdictLabel; 4] = [
        VerdictLabel::Real,
        VerdictLabel::TextFake,
        VerdictLabel::ImageFake,
        VerdictLabel::BothFake,
    ];
}

impl std::fmt::Display for VerdictLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            VerdictLabel::Real => "REAL",
            VerdictLabel::TextFake => "TEXT_FAKE",
            VerdictLabel::ImageFake => "IMAGE_FAKE",
            VerdictLabel::BothFake => "BOTH_FAKE",
        };
        write!(f, "{s}")
    }
}

/// Whether the final decision came from the judge or the fusion fallback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictOrigin {
    Judge,
    Fusion,
}

/// Final claim-level decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: VerdictLabel,
    pub confidence: Score,
    pub origin: VerdictOrigin,
}

/// Collapsed label space used against binary gold labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BinaryLabel {
    Real,
    Fake,
}

/// REAL stays REAL; every fake variant collapses to FAKE.
pub fn verdict_to_binary(label: VerdictLabel) -> BinaryLabel {
    match label {
        VerdictLabel::Real => BinaryLabel::Real,
        _ => BinaryLabel::Fake,
    }
}
