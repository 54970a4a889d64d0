//! Tool registry, environment step execution, offline fixture tools, and the
//! deepfake-detector evidence adapter used by hybrid mode.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::model::{
    normalize_evidence, Action, Claim, EvidenceAtom, Modality, ModelError, SearchState,
};
use crate::Score;

/// Source prefix for detector-derived evidence atoms.
pub const DETECTOR_SOURCE_PREFIX: &str = "deepfake_detector:";

/// Default timeout for a remote tool call.
pub const DEFAULT_TOOL_TIMEOUT_SECS: u64 = 20;

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("tool {0} already registered")]
    DuplicateTool(String),
    #[error("unknown tool {0}")]
    UnknownTool(String),
    #[error("detector confidence {0} outside [0, 1]")]
    ConfidenceRange(Score),
    #[error("detector evidence must be injected before the first step (L = {0})")]
    InjectAfterStart(usize),
    #[error("tool execution failed: {0}")]
    Exec(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("reading fixture corpus {path}: {message}")]
    Corpus { path: PathBuf, message: String },
    #[error("detector command produced unparseable output: {0:?}")]
    DetectorOutput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModalityHint {
    Text,
    Image,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    BuiltinFixture,
    ExternalCommand,
    RemoteEndpoint,
}

/// What the planner sees about one tool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub name: String,
    pub modality_hint: ModalityHint,
    /// One-line capability text shown to the planner.
    pub description: String,
    pub kind: ToolKind,
}

/// A callable tool body. Executors must tolerate concurrent invocation
/// across claim workers.
pub trait ToolExecutor: Send + Sync {
    fn execute(&self, claim: &Claim, args: &BTreeMap<String, String>) -> Result<String, ToolError>;
}

/// Immutable-after-startup name -> (descriptor, executor) table.
#[derive(Default, Clone)]
pub struct ToolRegistry {
    entries: Vec<(ToolDescriptor, Arc<dyn ToolExecutor>)>,
}

impl std::fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToolRegistry")
            .field("tools", &self.tool_names())
            .finish()
    }
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        descriptor: ToolDescriptor,
        executor: Arc<dyn ToolExecutor>,
    ) -> Result<(), ToolError> {
        if self.get(&descriptor.name).is_some() {
            return Err(ToolError::DuplicateTool(descriptor.name));
        }
        self.entries.push((descriptor, executor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&(ToolDescriptor, Arc<dyn ToolExecutor>)> {
        self.entries.iter().find(|(d, _)| d.name == name)
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &ToolDescriptor> {
        self.entries.iter().map(|(d, _)| d)
    }

    pub fn tool_names(&self) -> Vec<String> {
        self.entries.iter().map(|(d, _)| d.name.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Executes actions against the registry for one search, owning the clock,
/// per-tool invocation counters, and the observation cap.
pub struct Environment {
    registry: Arc<ToolRegistry>,
    clock: Clock,
    counters: BTreeMap<String, u64>,
    content_cap: usize,
}

impl Environment {
    pub fn new(registry: Arc<ToolRegistry>, clock: Clock, content_cap: usize) -> Self {
        Self {
            registry,
            clock,
            counters: BTreeMap::new(),
            content_cap,
        }
    }

    pub fn registry(&self) -> &ToolRegistry {
        &self.registry
    }

    pub fn now(&mut self) -> DateTime<Utc> {
        self.clock.now()
    }

    fn next_source(&mut self, tool: &str) -> String {
        let n = self.counters.entry(tool.to_string()).or_insert(0);
        *n += 1;
        format!("{tool}#{n}")
    }

    /// Execute one action: run the tool, normalize the observation into an
    /// evidence atom on a functionally-updated state, and return the new
    /// state with the raw observation text.
    ///
    /// A failing tool yields a `TOOL_ERROR: <reason>` observation and the
    /// state still advances; only an unregistered tool is a hard error.
    pub fn step(
        &mut self,
        state: &SearchState,
        action: &Action,
    ) -> Result<(SearchState, String), ToolError> {
        let (descriptor, executor) = self
            .registry
            .get(&action.tool)
            .ok_or_else(|| ToolError::UnknownTool(action.tool.clone()))?;
        let modality = match descriptor.modality_hint {
            ModalityHint::Text => Modality::Text,
            ModalityHint::Image => Modality::Image,
            ModalityHint::Both => state.subtask.modality(),
        };
        let observation = match executor.execute(&state.claim, &action.args) {
            Ok(text) if text.trim().is_empty() => "TOOL_ERROR: empty observation".to_string(),
            Ok(text) => text,
            Err(err) => format!("TOOL_ERROR: {err}"),
        };
        let source = self.next_source(&action.tool);
        let now = self.clock.now();
        let atom = normalize_evidence(&observation, modality, &source, now, self.content_cap)?;
        let next = state.advanced(atom, action.clone(), observation.clone());
        Ok((next, observation))
    }
}

/// Binary authenticity verdict of an image-only detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorVerdict {
    Real,
    Fake,
}

impl std::fmt::Display for DetectorVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DetectorVerdict::Real => write!(f, "real"),
            DetectorVerdict::Fake => write!(f, "fake"),
        }
    }
}

/// One detector's output for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub verdict: DetectorVerdict,
    pub confidence: Score,
    pub detector_name: String,
}

/// Render a detector report as an image-modality evidence atom with a fixed
/// template and a `deepfake_detector:<name>` source.
pub fn detector_evidence(
    report: &DetectorReport,
    now: DateTime<Utc>,
) -> Result<EvidenceAtom, ToolError> {
    if !(0.0..=1.0).contains(&report.confidence) {
        return Err(ToolError::ConfidenceRange(report.confidence));
    }
    Ok(EvidenceAtom {
        modality: Modality::Image,
        content: format!(
            "Deepfake detector {} predicts {} with confidence {:.2}",
            report.detector_name, report.verdict, report.confidence
        ),
        source: format!("{DETECTOR_SOURCE_PREFIX}{}", report.detector_name),
        timestamp: now,
    })
}

/// Place the detector atom at the front of a fresh subtask state's evidence.
/// Only legal before the first step.
pub fn inject_detector_evidence(
    state: &SearchState,
    report: &DetectorReport,
    now: DateTime<Utc>,
) -> Result<SearchState, ToolError> {
    if !state.memory.is_empty() || !state.evidence.is_empty() {
        return Err(ToolError::InjectAfterStart(state.memory.len()));
    }
    let atom = detector_evidence(report, now)?;
    let mut next = state.clone();
    next.evidence.insert(0, atom);
    Ok(next)
}

/// One keyed entry of an offline fixture corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub key: String,
    pub snippet: String,
}

/// Offline fixture tool backed by a keyed JSONL corpus.
///
/// Lookup order follows the corpus file: the first entry whose key equals
/// the `q` argument exactly, or is a substring of the claim text, wins.
/// Fixture tools are pure: same (claim, args) -> same observation.
#[derive(Debug, Clone)]
pub struct FixtureTool {
    name: String,
    entries: Vec<CorpusEntry>,
}

impl FixtureTool {
    pub fn new(name: impl Into<String>, entries: Vec<CorpusEntry>) -> Self {
        Self {
            name: name.into(),
            entries,
        }
    }

    pub fn from_jsonl(name: impl Into<String>, path: &Path) -> Result<Self, ToolError> {
        let file = std::fs::File::open(path).map_err(|e| ToolError::Corpus {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut entries = Vec::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| ToolError::Corpus {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", i + 1),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CorpusEntry =
                serde_json::from_str(&line).map_err(|e| ToolError::Corpus {
                    path: path.to_path_buf(),
                    message: format!("line {}: {e}", i + 1),
                })?;
            entries.push(entry);
        }
        Ok(Self::new(name, entries))
    }

    pub fn entries(&self) -> Vec<CorpusEntry> {
        self.entries.clone()
    }
}

impl ToolExecutor for FixtureTool {
    fn execute(&self, claim: &Claim, args: &BTreeMap<String, String>) -> Result<String, ToolError> {
        let query = args.get("q").map(String::as_str);
        for entry in &self.entries {
            let exact = query == Some(entry.key.as_str());
            if exact || claim.text.contains(&entry.key) {
                return Ok(entry.snippet.clone());
            }
        }
        Ok(format!(
            "NO_RESULT: {} found nothing for claim {}",
            self.name, claim.id
        ))
    }
}

/// The five builtin fixture tools, all fed from one corpus, in registry order.
pub fn builtin_fixture_descriptors() -> Vec<ToolDescriptor> {
    let spec: [(&str, ModalityHint, &str); 5] = [
        (
            "corpus_search",
            ModalityHint::Text,
            "Search a keyed text corpus for coverage of the claim",
        ),
        (
            "image_caption_fixture",
            ModalityHint::Image,
            "Describe the claim image from a keyed caption corpus",
        ),
        (
            "entity_lookup_fixture",
            ModalityHint::Text,
            "Look up entities named in the claim",
        ),
        (
            "time_check_fixture",
            ModalityHint::Text,
            "Check dates and temporal consistency of the claim",
        ),
        (
            "vqa_fixture",
            ModalityHint::Image,
            "Answer questions about the claim image",
        ),
    ];
    spec.into_iter()
        .map(|(name, hint, description)| ToolDescriptor {
            name: name.to_string(),
            modality_hint: hint,
            description: description.to_string(),
            kind: ToolKind::BuiltinFixture,
        })
        .collect()
}

/// Register all builtin fixture tools, each reading the same corpus entries.
pub fn register_builtin_fixtures(
    registry: &mut ToolRegistry,
    entries: Vec<CorpusEntry>,
) -> Result<(), ToolError> {
    for descriptor in builtin_fixture_descriptors() {
        let tool = FixtureTool::new(descriptor.name.clone(), entries.clone());
        registry.register(descriptor, Arc::new(tool))?;
    }
    Ok(())
}

/// Remote tool speaking the JSON-over-HTTP wire contract:
/// request `{tool, args, claim_text, image_ref}`, response `{observation}`
/// or `{error}`. One retry, then the failure becomes a TOOL_ERROR
/// observation upstream.
pub struct RemoteTool {
    name: String,
    url: String,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct RemoteToolRequest<'a> {
    tool: &'a str,
    args: &'a BTreeMap<String, String>,
    claim_text: &'a str,
    image_ref: &'a str,
}

#[derive(Deserialize)]
struct RemoteToolResponse {
    observation: Option<String>,
    error: Option<String>,
}

impl RemoteTool {
    pub fn new(
        name: impl Into<String>,
        url: impl Into<String>,
        timeout: Duration,
    ) -> Result<Self, ToolError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ToolError::Exec(e.to_string()))?;
        Ok(Self {
            name: name.into(),
            url: url.into(),
            client,
        })
    }

    fn call(&self, claim: &Claim, args: &BTreeMap<String, String>) -> Result<String, ToolError> {
        let request = RemoteToolRequest {
            tool: &self.name,
            args,
            claim_text: &claim.text,
            image_ref: &claim.image_ref,
        };
        let response = self
            .client
            .post(&self.url)
            .json(&request)
            .send()
            .map_err(|e| ToolError::Exec(e.to_string()))?;
        let body: RemoteToolResponse = response
            .json()
            .map_err(|e| ToolError::Exec(e.to_string()))?;
        match (body.observation, body.error) {
            (Some(obs), _) => Ok(obs),
            (None, Some(err)) => Err(ToolError::Exec(err)),
            (None, None) => Err(ToolError::Exec("response had neither field".into())),
        }
    }
}

impl ToolExecutor for RemoteTool {
    fn execute(&self, claim: &Claim, args: &BTreeMap<String, String>) -> Result<String, ToolError> {
        self.call(claim, args)
            .or_else(|_retry_once| self.call(claim, args))
    }
}

/// Detector adapter that shells out to an external command with the image
/// path as the sole argument and parses a `<verdict> <confidence>` stdout line.
#[derive(Debug, Clone)]
pub struct CommandDetector {
    pub program: String,
}

impl CommandDetector {
    pub fn run(&self, image_path: &str) -> Result<DetectorReport, ToolError> {
        let output = std::process::Command::new(&self.program)
            .arg(image_path)
            .output()
            .map_err(|e| ToolError::Exec(format!("{}: {e}", self.program)))?;
        if !output.status.success() {
            return Err(ToolError::Exec(format!(
                "{} exited with {}",
                self.program, output.status
            )));
        }
        let stdout = String::from_utf8_lossy(&output.stdout);
        parse_detector_line(stdout.trim(), &self.program)
    }
}

/// Parse one `<verdict> <confidence>` line, e.g. `fake 0.92`.
pub fn parse_detector_line(line: &str, detector_name: &str) -> Result<DetectorReport, ToolError> {
    let mut parts = line.split_whitespace();
    let verdict = match parts.next() {
        Some("real") => DetectorVerdict::Real,
        Some("fake") => DetectorVerdict::Fake,
        _ => return Err(ToolError::DetectorOutput(line.to_string())),
    };
    let confidence: Score = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ToolError::DetectorOutput(line.to_string()))?;
    if !(0.0..=1.0).contains(&confidence) {
        return Err(ToolError::ConfidenceRange(confidence));
    }
    Ok(DetectorReport {
        verdict,
        confidence,
        detector_name: detector_name.to_string(),
    })
}

/// An evidence source is valid when it names a registered tool (before the
/// `#` locator) or carries the detector prefix.
pub fn source_resolves(source: &str, registry: &ToolRegistry) -> bool {
    if source.starts_with(DETECTOR_SOURCE_PREFIX) {
        return true;
    }
    let tool = source.split('#').next().unwrap_or("");
    registry.get(tool).is_some()
}
