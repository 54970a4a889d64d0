//! Report emission: a machine-readable JSON document carrying the config
//! snapshot, per-claim verdicts with traces and transcripts, and the
//! metrics, plus a plain-text summary table.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, RunMode};
use crate::model::{Verdict, VerdictLabel};

use super::metrics::MetricsReport;
use super::{ClaimTrace, HarnessError, RecordOutcome};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordReport {
    pub id: String,
    pub gold_label: String,
    pub gold_verdict: VerdictLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<ClaimTrace>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub config: RunConfig,
    pub mode: RunMode,
    pub n_records: usize,
    pub n_failed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
    pub records: Vec<RecordReport>,
}

impl Report {
    pub fn assemble(
        config: &RunConfig,
        outcomes: Vec<RecordOutcome>,
        metrics: Option<MetricsReport>,
    ) -> Self {
        let n_records = outcomes.len();
        let n_failed = outcomes.iter().filter(|o| o.error.is_some()).count();
        let records = outcomes
            .into_iter()
            .map(|o| RecordReport {
                id: o.record.claim.id,
                gold_label: o.record.gold_label,
                gold_verdict: o.record.gold_verdict,
                predicted: o.verdict,
                error: o.error,
                trace: o.trace,
            })
            .collect();
        Self {
            config: config.clone(),
            mode: config.mode,
            n_records,
            n_failed,
            metrics,
            records,
        }
    }
}

/// Write the JSON report, and the summary table when a path is given.
pub fn emit_report(
    report: &Report,
    json_path: &Path,
    summary_path: Option<&Path>,
) -> Result<(), HarnessError> {
    let body = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(json_path, body + "\n").map_err(|e| HarnessError::Write {
        path: json_path.to_path_buf(),
        message: e.to_string(),
    })?;
    if let Some(path) = summary_path {
        std::fs::write(path, summary_table(report)).map_err(|e| HarnessError::Write {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    }
    Ok(())
}

fn method_name(mode: RunMode) -> &'static str {
    match mode {
        RunMode::Plain => "fact-check (evidence-centric)",
        RunMode::Hybrid => "fact-check + detector",
    }
}

/// Plain-text table in the Method / Accuracy / Precision / Recall /
/// F1-score layout, with the binary (FAKE-positive) row first and the
/// macro-averaged row labeled beneath it.
pub fn summary_table(report: &Report) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<34} {:>9} {:>10} {:>8} {:>9}\n",
        "Method", "Accuracy", "Precision", "Recall", "F1-score"
    ));
    match &report.metrics {
        Some(m) => {
            out.push_str(&format!(
                "{:<34} {:>9.4} {:>10.4} {:>8.4} {:>9.4}\n",
                method_name(report.mode),
                m.accuracy,
                m.precision,
                m.recall,
                m.f1
            ));
            out.push_str(&format!(
                "{:<34} {:>9.4} {:>10.4} {:>8.4} {:>9.4}\n",
                "  (macro-averaged)",
                m.accuracy,
                m.macro_precision,
                m.macro_recall,
                m.macro_f1
            ));
            out.push_str(&format!(
                "\nbinary metrics use FAKE as the positive class; n = {}\n",
                m.n
            ));
            if m.zero_division {
                out.push_str("note: a zero denominator was resolved to 0.0\n");
            }
        }
        None => out.push_str("(no metrics: every record failed)\n"),
    }
    if report.n_failed > 0 {
        out.push_str(&format!(
            "failed records: {} of {}\n",
            report.n_failed, report.n_records
        ));
    }
    out
}
