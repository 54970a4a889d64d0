//! Run configuration: one TOML document covering scoring, search, debate,
//! backends, tools, and run mode, with flag > file > default precedence and
//! per-parameter source tracking for `validate-config`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::remote::{RemoteBackend, RemoteBackendConfig};
use crate::agents::script::ScriptedBackend;
use crate::agents::{AgentRole, AgentSet, Backend};
use crate::clock::ClockKind;
use crate::debate::DebateConfig;
use crate::mcts::SearchConfig;
use crate::model::VerdictLabel;
use crate::toolplane::{
    register_builtin_fixtures, CommandDetector, CorpusEntry, FixtureTool, ModalityHint,
    RemoteTool, ToolDescriptor, ToolKind, ToolRegistry, DEFAULT_TOOL_TIMEOUT_SECS,
};
use crate::Score;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("parsing config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration:\n{}", violations.join("\n"))]
    Invalid { violations: Vec<String> },
    #[error("building backends: {0}")]
    Backend(String),
    #[error("building tools: {0}")]
    Tools(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    Plain,
    Hybrid,
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunMode::Plain => write!(f, "plain"),
            RunMode::Hybrid => write!(f, "hybrid"),
        }
    }
}

/// Where a backend role is served from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Script {
        path: PathBuf,
    },
    Remote {
        url: String,
        model: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        token_env: Option<String>,
        #[serde(default = "default_remote_timeout")]
        timeout_secs: u64,
        #[serde(default)]
        temperature: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

fn default_remote_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BackendsConfig {
    /// Fallback for roles without an explicit assignment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<BackendSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub roles: BTreeMap<AgentRole, BackendSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteToolConfig {
    pub name: String,
    pub url: String,
    #[serde(default = "default_modality_hint")]
    pub modality_hint: ModalityHint,
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_tool_timeout")]
    pub timeout_secs: u64,
}

fn default_modality_hint() -> ModalityHint {
    ModalityHint::Both
}

fn default_tool_timeout() -> u64 {
    DEFAULT_TOOL_TIMEOUT_SECS
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ToolsConfig {
    /// JSONL corpus feeding the builtin fixture tools.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub remote: Vec<RemoteToolConfig>,
    /// External detector command: invoked with the image path, prints
    /// `<verdict> <confidence>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector_command: Option<String>,
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub search: SearchConfig,
    pub debate: DebateConfig,
    pub backends: BackendsConfig,
    pub tools: ToolsConfig,
    pub mode: RunMode,
    pub clock: ClockKind,
    pub workers: usize,
    /// Dataset gold label -> four-way verdict label.
    pub labels: BTreeMap<String, VerdictLabel>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            search: SearchConfig::default(),
            debate: DebateConfig::default(),
            backends: BackendsConfig::default(),
            tools: ToolsConfig::default(),
            mode: RunMode::Plain,
            clock: ClockKind::Wall,
            workers: default_workers(),
            labels: default_label_map(),
        }
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(8)
}

/// Mapping for the normalized dataset schema's common gold labels.
pub fn default_label_map() -> BTreeMap<String, VerdictLabel> {
    let mut map = BTreeMap::new();
    for (k, v) in [
        ("REAL", VerdictLabel::Real),
        ("TEXT_FAKE", VerdictLabel::TextFake),
        ("IMAGE_FAKE", VerdictLabel::ImageFake),
        ("BOTH_FAKE", VerdictLabel::BothFake),
    ] {
        map.insert(k.to_string(), v);
    }
    map
}

impl RunConfig {
    /// Collect every invariant violation, named `module.field`.
    pub fn violations(&self) -> Vec<String> {
        let mut violations = Vec::new();
        if !(0.0..=1.0).contains(&self.search.scoring.lambda) {
            violations.push(format!(
                "scoring.lambda = {} \u{2209} [0,1]",
                self.search.scoring.lambda
            ));
        }
        for (name, theta) in [
            ("scoring.theta_text", self.search.scoring.theta_text),
            ("scoring.theta_image", self.search.scoring.theta_image),
        ] {
            if !(theta > 0.0 && theta <= 1.0) {
                violations.push(format!("{name} = {theta} \u{2209} (0,1]"));
            }
        }
        if self.search.budget_text < 1 {
            violations.push("search.budget_text < 1".to_string());
        }
        if self.search.budget_image < 1 {
            violations.push("search.budget_image < 1".to_string());
        }
        if self.search.exploration <= 0.0 {
            violations.push(format!(
                "search.exploration = {} must be > 0",
                self.search.exploration
            ));
        }
        if self.debate.rounds < 1 {
            violations.push("debate.rounds < 1".to_string());
        }
        if !(self.debate.novelty_penalty > 0.0 && self.debate.novelty_penalty < 1.0) {
            violations.push(format!(
                "debate.novelty_penalty = {} \u{2209} (0,1)",
                self.debate.novelty_penalty
            ));
        }
        if !(0.0..=1.0).contains(&self.debate.judge_min_conf) {
            violations.push(format!(
                "debate.judge_min_conf = {} \u{2209} [0,1]",
                self.debate.judge_min_conf
            ));
        }
        if self.workers < 1 {
            violations.push("run.workers < 1".to_string());
        }
        violations
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let violations = self.violations();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid { violations })
        }
    }

    /// Per-role backends; scripted files are loaded once and shared.
    pub fn build_agents(&self, base_dir: &Path) -> Result<AgentSet, ConfigError> {
        let mut scripts: BTreeMap<PathBuf, Arc<ScriptedBackend>> = BTreeMap::new();
        let mut backends: BTreeMap<AgentRole, Arc<dyn Backend>> = BTreeMap::new();
        for role in AgentRole::ALL {
            let spec = self
                .backends
                .roles
                .get(&role)
                .or(self.backends.default.as_ref())
                .ok_or_else(|| {
                    ConfigError::Backend(format!("no backend configured for role {role:?}"))
                })?;
            let backend: Arc<dyn Backend> = match spec {
                BackendSpec::Script { path } => {
                    let resolved = resolve_path(base_dir, path);
                    match scripts.get(&resolved) {
                        Some(shared) => shared.clone(),
                        None => {
                            let loaded = ScriptedBackend::from_jsonl(&resolved)
                                .map_err(|e| ConfigError::Backend(e.to_string()))?;
                            let shared = Arc::new(loaded);
                            scripts.insert(resolved, shared.clone());
                            shared
                        }
                    }
                }
                BackendSpec::Remote {
                    url,
                    model,
                    token_env,
                    timeout_secs,
                    temperature,
                    seed,
                } => Arc::new(
                    RemoteBackend::new(RemoteBackendConfig {
                        url: url.clone(),
                        model: model.clone(),
                        token_env: token_env.clone(),
                        timeout_secs: *timeout_secs,
                        temperature: *temperature,
                        seed: *seed,
                    })
                    .map_err(|e| ConfigError::Backend(e.to_string()))?,
                ),
            };
            backends.insert(role, backend);
        }
        let mut set = AgentSet::uniform(backends[&AgentRole::Planner].clone());
        for (role, backend) in backends {
            set = set.with_role(role, backend);
        }
        Ok(set)
    }

    /// The tool registry: builtin fixtures over the configured corpus plus
    /// any remote endpoints.
    pub fn build_registry(&self, base_dir: &Path) -> Result<ToolRegistry, ConfigError> {
        let mut registry = ToolRegistry::new();
        let entries: Vec<CorpusEntry> = match &self.tools.corpus {
            Some(path) => {
                let resolved = resolve_path(base_dir, path);
                FixtureTool::from_jsonl("corpus", &resolved)
                    .map_err(|e| ConfigError::Tools(e.to_string()))?
                    .entries()
            }
            None => Vec::new(),
        };
        register_builtin_fixtures(&mut registry, entries)
            .map_err(|e| ConfigError::Tools(e.to_string()))?;
        for remote in &self.tools.remote {
            let tool = RemoteTool::new(
                remote.name.clone(),
                remote.url.clone(),
                std::time::Duration::from_secs(remote.timeout_secs),
            )
            .map_err(|e| ConfigError::Tools(e.to_string()))?;
            registry
                .register(
                    ToolDescriptor {
                        name: remote.name.clone(),
                        modality_hint: remote.modality_hint,
                        description: remote.description.clone(),
                        kind: ToolKind::RemoteEndpoint,
                    },
                    Arc::new(tool),
                )
                .map_err(|e| ConfigError::Tools(e.to_string()))?;
        }
        Ok(registry)
    }

    pub fn detector_command(&self) -> Option<CommandDetector> {
        self.tools
            .detector_command
            .as_ref()
            .map(|program| CommandDetector {
                program: program.clone(),
            })
    }
}

pub fn resolve_path(base_dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base_dir.join(path)
    }
}

// ---------------------------------------------------------------------------
// File layer: every field optional, resolved against defaults with
// provenance tracking.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub scoring: ScoringSection,
    #[serde(default)]
    pub search: SearchSection,
    #[serde(default)]
    pub debate: DebateSection,
    #[serde(default)]
    pub backends: Option<BackendsConfig>,
    #[serde(default)]
    pub tools: Option<ToolsConfig>,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub labels: Option<BTreeMap<String, VerdictLabel>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringSection {
    pub lambda: Option<Score>,
    pub theta_text: Option<Score>,
    pub theta_image: Option<Score>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    pub budget_text: Option<u32>,
    pub budget_image: Option<u32>,
    pub exploration: Option<Score>,
    pub rollout_depth: Option<u32>,
    pub seed: Option<u64>,
    pub memory_bound: Option<usize>,
    pub content_cap: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DebateSection {
    pub rounds: Option<u32>,
    pub novelty_penalty: Option<Score>,
    pub judge_min_conf: Option<Score>,
    pub stop_on_consensus: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub mode: Option<RunMode>,
    pub clock: Option<ClockKind>,
    pub workers: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Flag-level overrides, the highest precedence layer.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<RunMode>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueSource {
    Default,
    File,
    Flag,
}

impl std::fmt::Display for ValueSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ValueSource::Default => write!(f, "default"),
            ValueSource::File => write!(f, "file"),
            ValueSource::Flag => write!(f, "flag"),
        }
    }
}

/// One resolved parameter for `validate-config` output.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedParam {
    pub name: String,
    pub value: String,
    pub source: ValueSource,
}

fn pick<T: Clone + std::fmt::Debug>(
    table: &mut Vec<ResolvedParam>,
    name: &str,
    default: T,
    file: Option<T>,
    flag: Option<T>,
) -> T {
    let (value, source) = match (flag, file) {
        (Some(v), _) => (v, ValueSource::Flag),
        (None, Some(v)) => (v, ValueSource::File),
        (None, None) => (default, ValueSource::Default),
    };
    table.push(ResolvedParam {
        name: name.to_string(),
        value: format!("{value:?}"),
        source,
    });
    value
}

/// Resolve flags over file over defaults; returns the concrete config and
/// the full provenance table.
pub fn resolve(file: FileConfig, overrides: &Overrides) -> (RunConfig, Vec<ResolvedParam>) {
    let defaults = RunConfig::default();
    let mut table = Vec::new();

    let scoring = crate::scoring::ScoringConfig {
        lambda: pick(
            &mut table,
            "scoring.lambda",
            defaults.search.scoring.lambda,
            file.scoring.lambda,
            None,
        ),
        theta_text: pick(
            &mut table,
            "scoring.theta_text",
            defaults.search.scoring.theta_text,
            file.scoring.theta_text,
            None,
        ),
        theta_image: pick(
            &mut table,
            "scoring.theta_image",
            defaults.search.scoring.theta_image,
            file.scoring.theta_image,
            None,
        ),
    };
    let search = SearchConfig {
        budget_text: pick(
            &mut table,
            "search.budget_text",
            defaults.search.budget_text,
            file.search.budget_text,
            None,
        ),
        budget_image: pick(
            &mut table,
            "search.budget_image",
            defaults.search.budget_image,
            file.search.budget_image,
            None,
        ),
        exploration: pick(
            &mut table,
            "search.exploration",
            defaults.search.exploration,
            file.search.exploration,
            None,
        ),
        rollout_depth: pick(
            &mut table,
            "search.rollout_depth",
            defaults.search.rollout_depth,
            file.search.rollout_depth,
            None,
        ),
        seed: pick(
            &mut table,
            "search.seed",
            defaults.search.seed,
            file.search.seed,
            overrides.seed,
        ),
        memory_bound: pick(
            &mut table,
            "search.memory_bound",
            defaults.search.memory_bound,
            file.search.memory_bound,
            None,
        ),
        content_cap: pick(
            &mut table,
            "search.content_cap",
            defaults.search.content_cap,
            file.search.content_cap,
            None,
        ),
        scoring,
    };
    let debate = DebateConfig {
        rounds: pick(
            &mut table,
            "debate.rounds",
            defaults.debate.rounds,
            file.debate.rounds,
            None,
        ),
        novelty_penalty: pick(
            &mut table,
            "debate.novelty_penalty",
            defaults.debate.novelty_penalty,
            file.debate.novelty_penalty,
            None,
        ),
        judge_min_conf: pick(
            &mut table,
            "debate.judge_min_conf",
            defaults.debate.judge_min_conf,
            file.debate.judge_min_conf,
            None,
        ),
        stop_on_consensus: pick(
            &mut table,
            "debate.stop_on_consensus",
            defaults.debate.stop_on_consensus,
            file.debate.stop_on_consensus,
            None,
        ),
    };
    let mode = pick(&mut table, "run.mode", defaults.mode, file.run.mode, overrides.mode);
    let clock = pick(&mut table, "run.clock", defaults.clock, file.run.clock, None);
    let workers = pick(
        &mut table,
        "run.workers",
        defaults.workers,
        file.run.workers,
        overrides.workers,
    );

    let backends_source = if file.backends.is_some() {
        ValueSource::File
    } else {
        ValueSource::Default
    };
    let backends = file.backends.unwrap_or_default();
    table.push(ResolvedParam {
        name: "backends".to_string(),
        value: describe_backends(&backends),
        source: backends_source,
    });
    let tools_source = if file.tools.is_some() {
        ValueSource::File
    } else {
        ValueSource::Default
    };
    let tools = file.tools.unwrap_or_default();
    table.push(ResolvedParam {
        name: "tools".to_string(),
        value: describe_tools(&tools),
        source: tools_source,
    });
    let labels_source = if file.labels.is_some() {
        ValueSource::File
    } else {
        ValueSource::Default
    };
    let labels = file.labels.unwrap_or_else(default_label_map);
    table.push(ResolvedParam {
        name: "labels".to_string(),
        value: format!("{} mappings", labels.len()),
        source: labels_source,
    });

    (
        RunConfig {
            search,
            debate,
            backends,
            tools,
            mode,
            clock,
            workers,
            labels,
        },
        table,
    )
}

fn describe_backends(backends: &BackendsConfig) -> String {
    let default = match &backends.default {
        None => "unset".to_string(),
        Some(BackendSpec::Script { path }) => format!("script {}", path.display()),
        Some(BackendSpec::Remote { url, model, .. }) => format!("remote {model} @ {url}"),
    };
    format!("default: {default}, {} role overrides", backends.roles.len())
}

fn describe_tools(tools: &ToolsConfig) -> String {
    format!(
        "corpus: {}, {} remote tools, detector command: {}",
        tools
            .corpus
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "unset".to_string()),
        tools.remote.len(),
        tools.detector_command.as_deref().unwrap_or("unset")
    )
}
