//! Round-based skeptic/supporter debate with novelty-penalized confidence,
//! consensus early stop, judge thresholding, and the fusion fallback that
//! produces the final verdict when the judge is not confident enough.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentSet, AgentTurn, DebateRole, JudgeOutput};
use crate::mcts::SubtaskResult;
use crate::model::{EvidenceAtom, SubtaskLabel, Verdict, VerdictLabel, VerdictOrigin};
use crate::toolplane::{DetectorReport, DetectorVerdict};
use crate::{Real, Score};

#[derive(Debug, Error)]
pub enum DebateError {
    #[error("debate.{name} = {value} violates {constraint}")]
    ConfigRange {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
}

/// Everything the debate sees from Stage 1: both subtask results, the shared
/// evidence pack indexed by citation id, and the detector report in hybrid
/// runs. Immutable during the debate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stage1Bundle {
    pub text_result: SubtaskResult,
    pub image_result: SubtaskResult,
    /// Citation id -> atom. Ids are `e001`, `e002`, ... in pack order.
    pub evidence_index: BTreeMap<String, EvidenceAtom>,
    /// Pack order of the ids, for deterministic rendering.
    pub evidence_order: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<DetectorReport>,
}

impl Stage1Bundle {
    /// Union the two evidence lists into the shared pack, dropping exact
    /// duplicates (same modality, source, and content), and assign ids.
    pub fn build(
        text_result: SubtaskResult,
        image_result: SubtaskResult,
        detector: Option<DetectorReport>,
    ) -> Self {
        let mut evidence_index = BTreeMap::new();
        let mut evidence_order = Vec::new();
        let mut seen: BTreeSet<(String, String, String)> = BTreeSet::new();
        for atom in text_result.evidence.iter().chain(image_result.evidence.iter()) {
            let signature = (
                atom.modality.to_string(),
                atom.source.clone(),
                atom.content.clone(),
            );
            if !seen.insert(signature) {
                continue;
            }
            let id = format!("e{:03}", evidence_order.len() + 1);
            evidence_index.insert(id.clone(), atom.clone());
            evidence_order.push(id);
        }
        Self {
            text_result,
            image_result,
            evidence_index,
            evidence_order,
            detector,
        }
    }

    pub fn detector_marker(&self) -> &'static str {
        match &self.detector {
            None => "none",
            Some(report) => match report.verdict {
                DetectorVerdict::Real => "real",
                DetectorVerdict::Fake => "fake",
            },
        }
    }
}

/// Debate shape: round count, novelty penalty, judge threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebateConfig {
    pub rounds: u32,
    /// Multiplier applied to the confidence of turns citing only
    /// already-used evidence.
    pub novelty_penalty: Score,
    /// Minimum judge confidence to adopt the judge's label.
    pub judge_min_conf: Score,
    pub stop_on_consensus: bool,
}

impl Default for DebateConfig {
    fn default() -> Self {
        Self {
            rounds: 3,
            novelty_penalty: 0.7,
            judge_min_conf: 0.5,
            stop_on_consensus: true,
        }
    }
}

impl DebateConfig {
    pub fn validate(&self) -> Result<(), DebateError> {
        if self.rounds < 1 {
            return Err(DebateError::ConfigRange {
                name: "rounds",
                value: self.rounds as f64,
                constraint: ">= 1",
            });
        }
        if !(self.novelty_penalty > 0.0 && self.novelty_penalty < 1.0) {
            return Err(DebateError::ConfigRange {
                name: "novelty_penalty",
                value: self.novelty_penalty,
                constraint: "(0,1)",
            });
        }
        if !(0.0..=1.0).contains(&self.judge_min_conf) {
            return Err(DebateError::ConfigRange {
                name: "judge_min_conf",
                value: self.judge_min_conf,
                constraint: "[0,1]",
            });
        }
        Ok(())
    }
}

/// One recorded turn: the agent's output plus its novelty factor and the
/// penalized confidence the rest of the debate sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptTurn {
    pub turn: AgentTurn,
    /// 1 for turns citing anything new, the penalty otherwise.
    pub novelty: Score,
    pub effective_confidence: Score,
}

/// Full record of one debate.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DebateTranscript {
    pub turns: Vec<TranscriptTurn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_output: Option<JudgeOutput>,
    /// Set when the judge (or a debater needed by the judge) violated its
    /// protocol; the decision then falls back to fusion.
    #[serde(default)]
    pub judge_failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consensus_round: Option<u32>,
}

/// 1 when the cited set contains anything outside the agent's history,
/// otherwise the penalty. An empty citation set is never novel.
pub fn novelty_factor<F: Real>(
    citations: &BTreeSet<String>,
    history: &BTreeSet<String>,
    pi: F,
) -> F {
    if citations.difference(history).next().is_some() {
        F::one()
    } else {
        pi
    }
}

/// Confidence after the novelty penalty.
pub fn effective_confidence<F: Real>(kappa: F, confidence: F) -> F {
    kappa * confidence
}

/// Transcript text shown to agents and the judge: penalized confidences,
/// never the raw ones.
pub fn render_transcript(transcript: &DebateTranscript) -> String {
    if transcript.turns.is_empty() {
        return "(no turns yet)".to_string();
    }
    transcript
        .turns
        .iter()
        .map(|t| {
            let citations: Vec<&str> = t.turn.citations.iter().map(String::as_str).collect();
            format!(
                "r{} {}: {} (confidence {:.2}) citing [{}] - {}",
                t.turn.round,
                t.turn.role,
                t.turn.label,
                t.effective_confidence,
                citations.join(", "),
                t.turn.rationale
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Run the round-based debate: skeptic then supporter each round, novelty
/// factors computed against each agent's own citation history (updated
/// after the turn), optional consensus stop, then one judge pass.
///
/// A debater protocol failure truncates the transcript at the last complete
/// turn; the judge still runs when both agents have at least one turn.
pub fn run_debate(bundle: &Stage1Bundle, agents: &AgentSet, cfg: &DebateConfig) -> DebateTranscript {
    let mut transcript = DebateTranscript::default();
    let mut skeptic_history: BTreeSet<String> = BTreeSet::new();
    let mut supporter_history: BTreeSet<String> = BTreeSet::new();
    let mut last_skeptic: Option<AgentTurn> = None;
    let mut last_supporter: Option<AgentTurn> = None;

    'rounds: for round in 1..=cfg.rounds {
        let mut round_labels: [Option<VerdictLabel>; 2] = [None, None];
        for (slot, role) in [DebateRole::Skeptic, DebateRole::Supporter].into_iter().enumerate() {
            let view = render_transcript(&transcript);
            let turn = match agents.debate_turn(role, bundle, &view, round, cfg.rounds) {
                Ok(turn) => turn,
                Err(err) => {
                    log::warn!("debate truncated at round {round}: {err}");
                    break 'rounds;
                }
            };
            let history = match role {
                DebateRole::Skeptic => &mut skeptic_history,
                DebateRole::Supporter => &mut supporter_history,
            };
            let kappa = novelty_factor(&turn.citations, history, cfg.novelty_penalty);
            let effective = effective_confidence(kappa, turn.confidence);
            history.extend(turn.citations.iter().cloned());
            round_labels[slot] = Some(turn.label);
            match role {
                DebateRole::Skeptic => last_skeptic = Some(turn.clone()),
                DebateRole::Supporter => last_supporter = Some(turn.clone()),
            }
            transcript.turns.push(TranscriptTurn {
                turn,
                novelty: kappa,
                effective_confidence: effective,
            });
        }
        if cfg.stop_on_consensus {
            if let [Some(a), Some(b)] = round_labels {
                if a == b {
                    transcript.consensus_round = Some(round);
                    break 'rounds;
                }
            }
        }
    }

    match (&last_skeptic, &last_supporter) {
        (Some(a), Some(b)) if !transcript.turns.is_empty() => {
            let view = render_transcript(&transcript);
            match agents.judge(bundle, &view, a, b) {
                Ok(output) => transcript.judge_output = Some(output),
                Err(err) => {
                    log::warn!("judge protocol failure: {err}");
                    transcript.judge_failed = true;
                }
            }
        }
        _ => transcript.judge_failed = true,
    }

    transcript
}

/// Deterministic combination of the Stage-1 labels:
/// both REAL -> REAL, one FAKE -> that side's FAKE, both FAKE -> BOTH_FAKE.
/// Confidence is the mean of the two subtask confidences.
pub fn simple_fusion(text_result: &SubtaskResult, image_result: &SubtaskResult) -> Verdict {
    let label = match (text_result.label.is_fake(), image_result.label.is_fake()) {
        (false, false) => VerdictLabel::Real,
        (true, false) => VerdictLabel::TextFake,
        (false, true) => VerdictLabel::ImageFake,
        (true, true) => VerdictLabel::BothFake,
    };
    Verdict {
        label,
        confidence: (text_result.scores.confidence + image_result.scores.confidence) / 2.0,
        origin: VerdictOrigin::Fusion,
    }
}

/// Adopt the judge's label when its confidence clears the threshold,
/// otherwise fall back to fusion. A failed judge counts as zero confidence.
pub fn final_verdict(
    transcript: &DebateTranscript,
    bundle: &Stage1Bundle,
    cfg: &DebateConfig,
) -> Verdict {
    if let Some(judge) = &transcript.judge_output {
        if judge.confidence >= cfg.judge_min_conf {
            return Verdict {
                label: judge.label,
                confidence: judge.confidence,
                origin: VerdictOrigin::Judge,
            };
        }
    }
    simple_fusion(&bundle.text_result, &bundle.image_result)
}

/// The label fusion would pick, without confidence bookkeeping.
pub fn fusion_label(text: SubtaskLabel, image: SubtaskLabel) -> VerdictLabel {
    match (text.is_fake(), image.is_fake()) {
        (false, false) => VerdictLabel::Real,
        (true, false) => VerdictLabel::TextFake,
        (false, true) => VerdictLabel::ImageFake,
        (true, true) => VerdictLabel::BothFake,
    }
}
