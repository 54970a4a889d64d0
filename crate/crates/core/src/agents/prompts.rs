//! Prompt contexts and template rendering.
//!
//! Prompt texts live in versioned template files under `templates/` so they
//! are test-visible data; this module only fills `{{name}}` placeholders.

use std::collections::BTreeMap;

use crate::debate::Stage1Bundle;
use crate::model::{EvidenceAtom, SearchState, Trajectory};
use crate::toolplane::ToolDescriptor;

use super::script::substitute;
use super::{AgentRole, DebateRole};

pub const PLANNER_TEMPLATE: &str = include_str!("../../templates/planner.txt");
pub const COHERENCE_TEMPLATE: &str = include_str!("../../templates/coherence.txt");
pub const STANCE_TEMPLATE: &str = include_str!("../../templates/stance.txt");
pub const DEBATE_TEMPLATE: &str = include_str!("../../templates/debate.txt");
pub const JUDGE_TEMPLATE: &str = include_str!("../../templates/judge.txt");

pub fn template_for(role: AgentRole) -> &'static str {
    match role {
        AgentRole::Planner => PLANNER_TEMPLATE,
        AgentRole::CoherenceGrader => COHERENCE_TEMPLATE,
        AgentRole::StanceGrader => STANCE_TEMPLATE,
        AgentRole::Skeptic | AgentRole::Supporter => DEBATE_TEMPLATE,
        AgentRole::Judge => JUDGE_TEMPLATE,
    }
}

pub fn render(role: AgentRole, context: &BTreeMap<String, String>) -> String {
    substitute(template_for(role), context)
}

/// One descriptor per line, the form counted by the planner-prompt tests.
pub fn render_tool_list(tools: &[ToolDescriptor]) -> String {
    tools
        .iter()
        .map(|d| format!("- {} [{:?}]: {}", d.name, d.modality_hint, d.description))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_trajectory(trajectory: &Trajectory) -> String {
    if trajectory.is_empty() {
        return "(none)".to_string();
    }
    trajectory
        .steps
        .iter()
        .enumerate()
        .map(|(i, (action, obs))| format!("{}. {} -> {}", i + 1, action.tool, obs))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_memory(state: &SearchState) -> String {
    if state.memory.is_empty() {
        return "(empty)".to_string();
    }
    state
        .memory
        .iter()
        .map(|(action, obs)| format!("- {} -> {}", action.tool, obs))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_evidence(evidence: &[EvidenceAtom]) -> String {
    if evidence.is_empty() {
        return "(none)".to_string();
    }
    evidence
        .iter()
        .map(|atom| format!("- [{}] {}: {}", atom.modality, atom.source, atom.content))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn planner_context(
    state: &SearchState,
    trajectory: &Trajectory,
    tools: &[ToolDescriptor],
) -> BTreeMap<String, String> {
    let mut ctx = BTreeMap::new();
    ctx.insert("claim_text".into(), state.claim.text.clone());
    ctx.insert("image_ref".into(), state.claim.image_ref.clone());
    ctx.insert("subtask".into(), state.subtask.to_string());
    ctx.insert("tools".into(), render_tool_list(tools));
    ctx.insert("step".into(), trajectory.len().to_string());
    ctx.insert("trajectory".into(), render_trajectory(trajectory));
    ctx.insert("memory".into(), render_memory(state));
    ctx
}

pub fn coherence_context(trajectory: &Trajectory) -> BTreeMap<String, String> {
    let mut ctx = BTreeMap::new();
    ctx.insert("step".into(), trajectory.len().to_string());
    ctx.insert("trajectory".into(), render_trajectory(trajectory));
    ctx
}

pub fn stance_context(
    evidence: &[EvidenceAtom],
    subtask: crate::model::Subtask,
) -> BTreeMap<String, String> {
    let mut ctx = BTreeMap::new();
    ctx.insert("subtask".into(), subtask.to_string());
    ctx.insert("n".into(), evidence.len().to_string());
    ctx.insert("evidence".into(), render_evidence(evidence));
    ctx
}

pub fn render_bundle_evidence(bundle: &Stage1Bundle) -> String {
    if bundle.evidence_index.is_empty() {
        return "(none)".to_string();
    }
    bundle
        .evidence_order
        .iter()
        .filter_map(|id| bundle.evidence_index.get(id).map(|atom| (id, atom)))
        .map(|(id, atom)| format!("- {id} [{}] {}: {}", atom.modality, atom.source, atom.content))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn debate_context(
    role: DebateRole,
    bundle: &Stage1Bundle,
    transcript_view: &str,
    round: u32,
    rounds_total: u32,
) -> BTreeMap<String, String> {
    let mut ctx = bundle_context(bundle);
    ctx.insert("role".into(), role.to_string());
    ctx.insert(
        "role_charge".into(),
        match role {
            DebateRole::Skeptic => {
                "Argue falsification-first: probe for contradictions and gaps.".to_string()
            }
            DebateRole::Supporter => {
                "Argue verification-first: build the strongest corroborated case.".to_string()
            }
        },
    );
    ctx.insert("round".into(), round.to_string());
    ctx.insert("rounds_total".into(), rounds_total.to_string());
    ctx.insert("transcript".into(), transcript_view.to_string());
    ctx
}

pub fn judge_context(
    bundle: &Stage1Bundle,
    transcript_view: &str,
    skeptic_last: &str,
    supporter_last: &str,
) -> BTreeMap<String, String> {
    let mut ctx = bundle_context(bundle);
    ctx.insert("transcript".into(), transcript_view.to_string());
    ctx.insert("skeptic_last".into(), skeptic_last.to_string());
    ctx.insert("supporter_last".into(), supporter_last.to_string());
    ctx
}

fn bundle_context(bundle: &Stage1Bundle) -> BTreeMap<String, String> {
    let mut ctx = BTreeMap::new();
    ctx.insert("text_label".into(), bundle.text_result.label.to_string());
    ctx.insert(
        "text_confidence".into(),
        format!("{:.2}", bundle.text_result.scores.confidence),
    );
    ctx.insert("image_label".into(), bundle.image_result.label.to_string());
    ctx.insert(
        "image_confidence".into(),
        format!("{:.2}", bundle.image_result.scores.confidence),
    );
    ctx.insert("evidence".into(), render_bundle_evidence(bundle));
    ctx
}
