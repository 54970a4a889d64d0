//! Backend contract for every role handed to a language model: planner,
//! coherence grader, stance grader, the two debaters, and the judge.
//!
//! Every operation either returns schema-valid output or a typed protocol
//! error; retries are bounded at [`MAX_ATTEMPTS`] per call. Backends are
//! addressed by (role, key, context): keys make the scripted backend a pure
//! lookup, contexts fill prompt templates for remote backends.

pub mod parse;
pub mod prompts;
pub mod remote;
pub mod script;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::debate::Stage1Bundle;
use crate::model::{Action, EvidenceAtom, SearchState, Stance, Subtask, Trajectory, VerdictLabel};
use crate::toolplane::ToolDescriptor;
use crate::Score;

/// Bounded retry count for every role.
pub const MAX_ATTEMPTS: u32 = 3;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("planner protocol violation after {attempts} attempts: {last}")]
    Planner { attempts: u32, last: String },
    #[error("grader protocol violation after {attempts} attempts: {last}")]
    Grader { attempts: u32, last: String },
    #[error("grade {0} outside 1..=10")]
    GradeOutOfRange(i64),
    #[error("debater protocol violation after {attempts} attempts: {last}")]
    Debate { attempts: u32, last: String },
    #[error("judge protocol violation after {attempts} attempts: {last}")]
    Judge { attempts: u32, last: String },
    #[error("backend error: {0}")]
    Backend(String),
}

/// Every role the pipeline assigns to a backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Planner,
    CoherenceGrader,
    StanceGrader,
    Skeptic,
    Supporter,
    Judge,
}

impl AgentRole {
    pub const ALL: [AgentRole; 6] = [
        AgentRole::Planner,
        AgentRole::CoherenceGrader,
        AgentRole::StanceGrader,
        AgentRole::Skeptic,
        AgentRole::Supporter,
        AgentRole::Judge,
    ];
}

/// The two debate roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DebateRole {
    Skeptic,
    Supporter,
}

impl DebateRole {
    pub fn agent_role(self) -> AgentRole {
        match self {
            DebateRole::Skeptic => AgentRole::Skeptic,
            DebateRole::Supporter => AgentRole::Supporter,
        }
    }
}

impl std::fmt::Display for DebateRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DebateRole::Skeptic => write!(f, "skeptic"),
            DebateRole::Supporter => write!(f, "supporter"),
        }
    }
}

/// One debater's structured output for one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTurn {
    pub role: DebateRole,
    pub round: u32,
    pub label: VerdictLabel,
    /// Raw confidence as stated by the agent, before the novelty factor.
    pub confidence: Score,
    pub rationale: String,
    /// Validated citation ids; unknown ids are dropped.
    pub citations: BTreeSet<String>,
}

/// The judge's structured output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeOutput {
    pub label: VerdictLabel,
    pub confidence: Score,
    pub override_flag: bool,
}

/// A backend answers one role call with raw text.
///
/// `keys` are candidate lookup keys ordered most-specific first (scripted
/// backends resolve against them; remote backends ignore them), `context`
/// fills prompt templates and reply placeholders, and `attempt` counts
/// retries from zero.
pub trait Backend: Send + Sync {
    fn complete(
        &self,
        role: AgentRole,
        keys: &[String],
        context: &BTreeMap<String, String>,
        attempt: u32,
    ) -> Result<String, ProtocolError>;
}

/// Deterministic lookup keys, one format per role.
///
/// The formats are part of the scripted-backend file contract:
///
/// - planner: `plan:{subtask}:{len}:{last_tool|-}`
/// - coherence: `coh:{tools joined by ','|-}`
/// - stance (specific): `stance:{subtask}:{digest12}` where `digest12` is
///   the first 12 hex chars of SHA-256 over `modality|source|content`
///   lines of the evidence list
/// - stance (coarse): `stance:{subtask}:{none|real|fake}:{n}`
/// - debater: `debate:{skeptic|supporter}:r{r}:zt={text label}:zi={image label}:det={none|real|fake}`
/// - judge: `judge:a={skeptic label}:b={supporter label}:zt=..:zi=..:det=..`
///
/// Every role also falls back to the `default` key.
pub mod keys {
    use sha2::{Digest, Sha256};

    use super::*;
    use crate::toolplane::DETECTOR_SOURCE_PREFIX;

    pub fn planner(subtask: Subtask, len: usize, last_tool: Option<&str>) -> String {
        format!("plan:{subtask}:{len}:{}", last_tool.unwrap_or("-"))
    }

    pub fn coherence(tools: &[String]) -> String {
        if tools.is_empty() {
            "coh:-".to_string()
        } else {
            format!("coh:{}", tools.join(","))
        }
    }

    /// First 12 hex chars of SHA-256 over the evidence list.
    pub fn evidence_digest(evidence: &[EvidenceAtom]) -> String {
        let mut hasher = Sha256::new();
        for atom in evidence {
            hasher.update(atom.modality.to_string().as_bytes());
            hasher.update(b"|");
            hasher.update(atom.source.as_bytes());
            hasher.update(b"|");
            hasher.update(atom.content.as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(12);
        for byte in digest.iter().take(6) {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }

    /// `none`, `real`, or `fake` depending on the detector atom present.
    pub fn detector_marker(evidence: &[EvidenceAtom]) -> &'static str {
        for atom in evidence {
            if atom.source.starts_with(DETECTOR_SOURCE_PREFIX) {
                if atom.content.contains(" predicts fake ") {
                    return "fake";
                }
                if atom.content.contains(" predicts real ") {
                    return "real";
                }
            }
        }
        "none"
    }

    pub fn stance_specific(subtask: Subtask, evidence: &[EvidenceAtom]) -> String {
        format!("stance:{subtask}:{}", evidence_digest(evidence))
    }

    pub fn stance_coarse(subtask: Subtask, evidence: &[EvidenceAtom]) -> String {
        format!(
            "stance:{subtask}:{}:{}",
            detector_marker(evidence),
            evidence.len()
        )
    }

    pub fn debate(role: DebateRole, round: u32, bundle: &Stage1Bundle) -> String {
        format!(
            "debate:{role}:r{round}:zt={}:zi={}:det={}",
            bundle.text_result.label,
            bundle.image_result.label,
            bundle.detector_marker()
        )
    }

    pub fn judge(
        skeptic_label: VerdictLabel,
        supporter_label: VerdictLabel,
        bundle: &Stage1Bundle,
    ) -> String {
        format!(
            "judge:a={skeptic_label}:b={supporter_label}:zt={}:zi={}:det={}",
            bundle.text_result.label,
            bundle.image_result.label,
            bundle.detector_marker()
        )
    }
}

/// Per-role backend assignment plus the retry policy.
#[derive(Clone)]
pub struct AgentSet {
    backends: BTreeMap<AgentRole, Arc<dyn Backend>>,
    max_attempts: u32,
}

impl std::fmt::Debug for AgentSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AgentSet")
            .field("roles", &self.backends.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl AgentSet {
    /// One backend serving every role.
    pub fn uniform(backend: Arc<dyn Backend>) -> Self {
        let mut backends = BTreeMap::new();
        for role in AgentRole::ALL {
            backends.insert(role, backend.clone());
        }
        Self {
            backends,
            max_attempts: MAX_ATTEMPTS,
        }
    }

    pub fn with_role(mut self, role: AgentRole, backend: Arc<dyn Backend>) -> Self {
        self.backends.insert(role, backend);
        self
    }

    fn backend(&self, role: AgentRole) -> Result<&Arc<dyn Backend>, ProtocolError> {
        self.backends
            .get(&role)
            .ok_or_else(|| ProtocolError::Backend(format!("no backend configured for {role:?}")))
    }

    /// Core retry loop: ask, validate, re-ask up to the attempt bound.
    fn ask<T>(
        &self,
        role: AgentRole,
        lookup_keys: &[String],
        context: &BTreeMap<String, String>,
        mut validate: impl FnMut(&str) -> Result<T, String>,
    ) -> Result<T, (u32, String)> {
        let backend = match self.backend(role) {
            Ok(b) => b,
            Err(e) => return Err((0, e.to_string())),
        };
        let mut last = String::from("no attempt made");
        for attempt in 0..self.max_attempts {
            match backend.complete(role, lookup_keys, context, attempt) {
                Ok(raw) => match validate(&raw) {
                    Ok(value) => return Ok(value),
                    Err(reason) => last = reason,
                },
                Err(err) => last = err.to_string(),
            }
        }
        Err((self.max_attempts, last))
    }

    /// Ask the planner for the next action; the reply must name a tool from
    /// `tools`.
    pub fn plan_next_action(
        &self,
        state: &SearchState,
        trajectory: &Trajectory,
        tools: &[ToolDescriptor],
    ) -> Result<Action, ProtocolError> {
        let context = prompts::planner_context(state, trajectory, tools);
        let lookup = vec![keys::planner(
            state.subtask,
            trajectory.len(),
            trajectory.last_tool(),
        )];
        self.ask(AgentRole::Planner, &lookup, &context, |raw| {
            let reply = parse::parse_planner_reply(raw)?;
            if !tools.iter().any(|d| d.name == reply.tool) {
                return Err(format!("planner named unregistered tool {}", reply.tool));
            }
            Ok(Action {
                tool: reply.tool,
                args: reply.args,
            })
        })
        .map_err(|(attempts, last)| ProtocolError::Planner { attempts, last })
    }

    /// Coherence of a trajectory in [0, 1]; out-of-range replies clamp.
    pub fn grade_coherence(&self, trajectory: &Trajectory) -> Result<Score, ProtocolError> {
        let context = prompts::coherence_context(trajectory);
        let lookup = vec![keys::coherence(&trajectory.tools())];
        self.ask(AgentRole::CoherenceGrader, &lookup, &context, |raw| {
            parse::parse_coherence_reply(raw)
        })
        .map_err(|(attempts, last)| ProtocolError::Grader { attempts, last })
    }

    /// Stance plus 1..=10 grade over the evidence for one subtask.
    pub fn grade_stance(
        &self,
        evidence: &[EvidenceAtom],
        subtask: Subtask,
    ) -> Result<(Stance, i64), ProtocolError> {
        let context = prompts::stance_context(evidence, subtask);
        let lookup = vec![
            keys::stance_specific(subtask, evidence),
            keys::stance_coarse(subtask, evidence),
        ];
        let mut grade_violation = None;
        let result = self.ask(AgentRole::StanceGrader, &lookup, &context, |raw| {
            parse::parse_stance_reply(raw).map_err(|err| {
                if let parse::StanceParseError::GradeOutOfRange(g) = err {
                    grade_violation = Some(g);
                }
                err.to_string()
            })
        });
        match result {
            Ok(reply) => Ok((reply.stance, reply.grade)),
            Err((attempts, last)) => match grade_violation {
                Some(g) => Err(ProtocolError::GradeOutOfRange(g)),
                None => Err(ProtocolError::Grader { attempts, last }),
            },
        }
    }

    /// One debater turn; unknown citation ids are dropped with a warning
    /// rather than failing the turn.
    pub fn debate_turn(
        &self,
        role: DebateRole,
        bundle: &Stage1Bundle,
        transcript_view: &str,
        round: u32,
        rounds_total: u32,
    ) -> Result<AgentTurn, ProtocolError> {
        let context = prompts::debate_context(role, bundle, transcript_view, round, rounds_total);
        let lookup = vec![keys::debate(role, round, bundle)];
        self.ask(role.agent_role(), &lookup, &context, |raw| {
            parse::parse_debate_reply(raw)
        })
        .map(|reply| {
            let mut citations = BTreeSet::new();
            for id in reply.citations {
                if bundle.evidence_index.contains_key(&id) {
                    citations.insert(id);
                } else {
                    log::warn!("dropping unknown citation {id} from {role} round {round}");
                }
            }
            AgentTurn {
                role,
                round,
                label: reply.label,
                confidence: reply.confidence,
                rationale: reply.rationale,
                citations,
            }
        })
        .map_err(|(attempts, last)| ProtocolError::Debate { attempts, last })
    }

    /// The judge's final read of the debate.
    pub fn judge(
        &self,
        bundle: &Stage1Bundle,
        transcript_view: &str,
        last_skeptic: &AgentTurn,
        last_supporter: &AgentTurn,
    ) -> Result<JudgeOutput, ProtocolError> {
        let skeptic_last = format!("{} ({:.2})", last_skeptic.label, last_skeptic.confidence);
        let supporter_last =
            format!("{} ({:.2})", last_supporter.label, last_supporter.confidence);
        let context = prompts::judge_context(bundle, transcript_view, &skeptic_last, &supporter_last);
        let lookup = vec![keys::judge(last_skeptic.label, last_supporter.label, bundle)];
        self.ask(AgentRole::Judge, &lookup, &context, |raw| {
            parse::parse_judge_reply(raw)
        })
        .map(|reply| JudgeOutput {
            label: reply.label,
            confidence: reply.confidence,
            override_flag: reply.override_flag,
        })
        .map_err(|(attempts, last)| ProtocolError::Judge { attempts, last })
    }
}
