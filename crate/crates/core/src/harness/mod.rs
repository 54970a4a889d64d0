//! Dataset ingestion, the per-claim pipeline, and batch runs over a bounded
//! worker pool. Results keep input order regardless of completion order.

pub mod metrics;
pub mod report;

pub use metrics::{evaluate, MetricsReport};
pub use report::{emit_report, summary_table, RecordReport, Report};

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::AgentSet;
use crate::clock::Clock;
use crate::config::{RunConfig, RunMode};
use crate::debate::{final_verdict, run_debate, DebateTranscript, Stage1Bundle};
use crate::mcts::{run_claim_search, ClaimSearchOutcome};
use crate::model::{Claim, Verdict, VerdictLabel};
use crate::toolplane::{CommandDetector, DetectorReport, Environment, ToolRegistry};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("reading dataset {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("dataset {path} line {line}: {message}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("dataset {path} line {line}: unknown gold label {label:?}")]
    UnknownLabel {
        path: PathBuf,
        line: usize,
        label: String,
    },
    #[error("dataset {path} line {line}: duplicate claim id {id:?}")]
    DuplicateId {
        path: PathBuf,
        line: usize,
        id: String,
    },
    #[error("hybrid mode needs a detector report or command for record {id}")]
    MissingDetector { id: String },
    #[error("no prediction pairs to evaluate")]
    EmptyEvaluation,
    #[error("writing report {path}: {message}")]
    Write { path: PathBuf, message: String },
}

/// One dataset row bound to its mapped gold verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub claim: Claim,
    pub gold_label: String,
    pub gold_verdict: VerdictLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector_report: Option<DetectorReport>,
}

/// Normalized JSONL record schema:
/// `{id, image_path, text, gold_label, detector?: {verdict, confidence, name}, meta?}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub image_path: String,
    pub text: String,
    pub gold_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<DetectorField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorField {
    pub verdict: crate::toolplane::DetectorVerdict,
    pub confidence: crate::Score,
    pub name: String,
}

/// Load and validate a normalized JSONL dataset, mapping gold labels
/// through the configured label map.
pub fn load_dataset(
    path: &Path,
    labels: &BTreeMap<String, VerdictLabel>,
) -> Result<Vec<ClaimRecord>, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::Read {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut records = Vec::new();
    let mut seen_ids = std::collections::BTreeSet::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| HarnessError::Read {
            path: path.to_path_buf(),
            message: format!("line {line_no}: {e}"),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: DatasetRecord =
            serde_json::from_str(&line).map_err(|e| HarnessError::MalformedLine {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
        if raw.id.trim().is_empty() || raw.text.trim().is_empty() {
            return Err(HarnessError::MalformedLine {
                path: path.to_path_buf(),
                line: line_no,
                message: "id and text must be non-empty".into(),
            });
        }
        if !seen_ids.insert(raw.id.clone()) {
            return Err(HarnessError::DuplicateId {
                path: path.to_path_buf(),
                line: line_no,
                id: raw.id,
            });
        }
        let gold_verdict =
            *labels
                .get(&raw.gold_label)
                .ok_or_else(|| HarnessError::UnknownLabel {
                    path: path.to_path_buf(),
                    line: line_no,
                    label: raw.gold_label.clone(),
                })?;
        let mut claim = Claim::new(raw.id, raw.image_path, raw.text);
        if let Some(meta) = raw.meta {
            claim.metadata = meta;
        }
        records.push(ClaimRecord {
            claim,
            gold_label: raw.gold_label,
            gold_verdict,
            detector_report: raw.detector.map(|d| DetectorReport {
                verdict: d.verdict,
                confidence: d.confidence,
                detector_name: d.name,
            }),
        });
    }
    Ok(records)
}

/// Full record of one claim's run, embedded in the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClaimTrace {
    pub claim_id: String,
    pub mode: RunMode,
    pub search: ClaimSearchOutcome,
    /// Shared evidence pack in citation order.
    pub evidence_pack: Vec<PackEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<DetectorReport>,
    pub transcript: DebateTranscript,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PackEntry {
    pub id: String,
    #[serde(flatten)]
    pub atom: crate::model::EvidenceAtom,
}

/// Everything needed to verify claims: validated config, built backends,
/// tool registry, and the optional external detector command.
pub struct Pipeline {
    pub config: RunConfig,
    pub agents: AgentSet,
    pub registry: Arc<ToolRegistry>,
    pub detector_command: Option<CommandDetector>,
}

impl Pipeline {
    /// Build backends and tools from a validated config; relative paths
    /// resolve against `base_dir` (normally the config file's directory).
    pub fn from_config(config: RunConfig, base_dir: &Path) -> Result<Self, crate::config::ConfigError> {
        config.validate()?;
        let agents = config.build_agents(base_dir)?;
        let registry = Arc::new(config.build_registry(base_dir)?);
        let detector_command = config.detector_command();
        Ok(Self {
            config,
            agents,
            registry,
            detector_command,
        })
    }

    fn resolve_detector(
        &self,
        record: &ClaimRecord,
    ) -> Result<Option<DetectorReport>, String> {
        if self.config.mode != RunMode::Hybrid {
            return Ok(None);
        }
        if let Some(report) = &record.detector_report {
            return Ok(Some(report.clone()));
        }
        match &self.detector_command {
            Some(command) => command
                .run(&record.claim.image_ref)
                .map(Some)
                .map_err(|e| e.to_string()),
            None => Err(HarnessError::MissingDetector {
                id: record.claim.id.clone(),
            }
            .to_string()),
        }
    }

    /// Run the two-stage pipeline on one claim.
    pub fn verify_claim(
        &self,
        claim: &Claim,
        detector: Option<&DetectorReport>,
    ) -> Result<(Verdict, ClaimTrace), String> {
        let mut env = Environment::new(
            self.registry.clone(),
            Clock::new(self.config.clock),
            self.config.search.content_cap,
        );
        let search = run_claim_search(claim, &self.config.search, &self.agents, &mut env, detector)
            .map_err(|e| e.to_string())?;
        let bundle = Stage1Bundle::build(
            search.text.clone(),
            search.image.clone(),
            detector.cloned(),
        );
        let transcript = run_debate(&bundle, &self.agents, &self.config.debate);
        let verdict = final_verdict(&transcript, &bundle, &self.config.debate);
        let evidence_pack = bundle
            .evidence_order
            .iter()
            .map(|id| PackEntry {
                id: id.clone(),
                atom: bundle.evidence_index[id].clone(),
            })
            .collect();
        let trace = ClaimTrace {
            claim_id: claim.id.clone(),
            mode: self.config.mode,
            search,
            evidence_pack,
            detector: detector.cloned(),
            transcript,
            verdict: verdict.clone(),
        };
        Ok((verdict, trace))
    }

    fn run_record(&self, record: &ClaimRecord) -> RecordOutcome {
        let detector = match self.resolve_detector(record) {
            Ok(d) => d,
            Err(message) => {
                return RecordOutcome {
                    record: record.clone(),
                    verdict: None,
                    trace: None,
                    error: Some(message),
                }
            }
        };
        match self.verify_claim(&record.claim, detector.as_ref()) {
            Ok((verdict, trace)) => RecordOutcome {
                record: record.clone(),
                verdict: Some(verdict),
                trace: Some(trace),
                error: None,
            },
            Err(message) => RecordOutcome {
                record: record.clone(),
                verdict: None,
                trace: None,
                error: Some(message),
            },
        }
    }

    /// Verify every record on a bounded worker pool. Per-record failures are
    /// recorded as error outcomes and never disturb other records; outcomes
    /// keep dataset order.
    pub fn run_batch(&self, records: &[ClaimRecord]) -> Result<Vec<RecordOutcome>, HarnessError> {
        if self.config.mode == RunMode::Hybrid && self.detector_command.is_none() {
            for record in records {
                if record.detector_report.is_none() {
                    return Err(HarnessError::MissingDetector {
                        id: record.claim.id.clone(),
                    });
                }
            }
        }
        let workers = self.config.workers.max(1).min(records.len().max(1));
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<RecordOutcome>>> =
            Mutex::new((0..records.len()).map(|_| None).collect());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let index = next.fetch_add(1, Ordering::SeqCst);
                    if index >= records.len() {
                        break;
                    }
                    let outcome = self.run_record(&records[index]);
                    slots.lock().expect("worker poisoned the slot lock")[index] = Some(outcome);
                });
            }
        });
        let outcomes = slots
            .into_inner()
            .expect("worker poisoned the slot lock")
            .into_iter()
            .map(|slot| slot.expect("every index was claimed by a worker"))
            .collect();
        Ok(outcomes)
    }
}

/// One record's result: a verdict with trace, or a recorded error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordOutcome {
    pub record: ClaimRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<ClaimTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// (gold, predicted) pairs for the records that produced verdicts.
pub fn prediction_pairs(outcomes: &[RecordOutcome]) -> Vec<(VerdictLabel, VerdictLabel)> {
    outcomes
        .iter()
        .filter_map(|o| {
            o.verdict
                .as_ref()
                .map(|v| (o.record.gold_verdict, v.label))
        })
        .collect()
}
