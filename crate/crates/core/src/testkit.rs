//! Deterministic fixture builders for scripted runs: corpora, backend
//! scripts, datasets, and config files. Used by the integration and
//! acceptance suites and by the bundled demo fixture; also useful when
//! authoring new scripted fixtures by hand.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::agents::script::{ScriptEntry, DEFAULT_KEY};
use crate::agents::{keys, AgentRole};
use crate::clock::{Clock, ClockKind};
use crate::debate::fusion_label;
use crate::harness::DatasetRecord;
use crate::model::{
    Action, Claim, EvidenceAtom, SearchState, Stance, Subtask, SubtaskLabel, VerdictLabel,
    DEFAULT_CONTENT_CAP, DEFAULT_MEMORY_BOUND,
};
use crate::toolplane::{
    inject_detector_evidence, register_builtin_fixtures, CorpusEntry, DetectorReport,
    DetectorVerdict, Environment, ToolRegistry,
};

/// Fixture planner tool order for the text subtask. Disjoint from the image
/// order so the two searches never share per-tool source counters.
pub const TEXT_TOOLS: [&str; 3] = [
    "corpus_search",
    "entity_lookup_fixture",
    "time_check_fixture",
];
/// Fixture planner tool order for the image subtask.
pub const IMAGE_TOOLS: [&str; 2] = ["image_caption_fixture", "vqa_fixture"];

pub fn tool_sequence(subtask: Subtask) -> &'static [&'static str] {
    match subtask {
        Subtask::Text => &TEXT_TOOLS,
        Subtask::Image => &IMAGE_TOOLS,
    }
}

fn planner_reply(tool: &str) -> String {
    format!("{{\"tool\": \"{tool}\"}}")
}

fn coherence_reply(value: f64) -> String {
    format!("{{\"coherence\": {value}}}")
}

pub fn stance_reply(stance: Stance, grade: i64) -> String {
    let stance = match stance {
        Stance::Real => "REAL",
        Stance::Fake => "FAKE",
    };
    format!("{{\"stance\": \"{stance}\", \"grade\": {grade}}}")
}

fn debate_reply(label: VerdictLabel, confidence: f64, citation: &str) -> String {
    format!(
        "{{\"label\": \"{label}\", \"confidence\": {confidence}, \"rationale\": \"scripted\", \"citations\": [\"{citation}\"]}}"
    )
}

fn judge_reply(label: VerdictLabel, confidence: f64) -> String {
    format!("{{\"label\": \"{label}\", \"confidence\": {confidence}, \"override\": false}}")
}

/// Planner entries walking each subtask through its tool order, cycling
/// once the order is exhausted.
pub fn planner_entries(max_len: usize) -> Vec<ScriptEntry> {
    let mut entries = Vec::new();
    for subtask in Subtask::ALL {
        let sequence = tool_sequence(subtask);
        for len in 0..max_len {
            let tool = sequence[len % sequence.len()];
            let last = if len == 0 {
                None
            } else {
                Some(sequence[(len - 1) % sequence.len()])
            };
            entries.push(ScriptEntry::single(
                AgentRole::Planner,
                keys::planner(subtask, len, last),
                planner_reply(tool),
            ));
        }
    }
    entries
}

/// Coherence entries: weak after one step, strong after two, weak default.
/// With a grade-9 stance at step two this stops a search at exactly two
/// iterations (product 0.78 over the 0.6 threshold).
pub fn coherence_entries() -> Vec<ScriptEntry> {
    let mut entries = Vec::new();
    for subtask in Subtask::ALL {
        let sequence = tool_sequence(subtask);
        entries.push(ScriptEntry::single(
            AgentRole::CoherenceGrader,
            keys::coherence(&[sequence[0].to_string()]),
            coherence_reply(0.3),
        ));
        entries.push(ScriptEntry::single(
            AgentRole::CoherenceGrader,
            keys::coherence(&[sequence[0].to_string(), sequence[1].to_string()]),
            coherence_reply(0.9),
        ));
    }
    entries.push(ScriptEntry::single(
        AgentRole::CoherenceGrader,
        DEFAULT_KEY,
        coherence_reply(0.3),
    ));
    entries
}

/// The registry the fixture configs build: the five builtin fixture tools
/// over one corpus.
pub fn fixture_registry(corpus: Vec<CorpusEntry>) -> Arc<ToolRegistry> {
    let mut registry = ToolRegistry::new();
    register_builtin_fixtures(&mut registry, corpus).expect("builtin names are unique");
    Arc::new(registry)
}

/// Evidence prefixes a claim's subtask search walks through, computed with
/// the production environment so sources, normalization, and detector
/// injection match the real run exactly. Index k holds the evidence after k
/// tool steps.
pub fn evidence_prefixes(
    claim: &Claim,
    subtask: Subtask,
    steps: usize,
    registry: &Arc<ToolRegistry>,
    detector: Option<&DetectorReport>,
) -> Vec<Vec<EvidenceAtom>> {
    let mut env = Environment::new(
        registry.clone(),
        Clock::new(ClockKind::Logical),
        DEFAULT_CONTENT_CAP,
    );
    let mut state = SearchState::initial(claim.clone(), subtask, DEFAULT_MEMORY_BOUND);
    if let Some(report) = detector {
        let now = env.now();
        state = inject_detector_evidence(&state, report, now).expect("fresh state");
    }
    let sequence = tool_sequence(subtask);
    let mut prefixes = vec![state.evidence.clone()];
    for step in 0..steps {
        let tool = sequence[step % sequence.len()];
        let (next, _) = env
            .step(&state, &Action::new(tool))
            .expect("fixture tools are registered");
        state = next;
        prefixes.push(state.evidence.clone());
    }
    prefixes
}

/// Whether the gold verdict makes this subtask's component fake.
pub fn gold_stance(subtask: Subtask, gold: VerdictLabel) -> Stance {
    let fake = match subtask {
        Subtask::Text => matches!(gold, VerdictLabel::TextFake | VerdictLabel::BothFake),
        Subtask::Image => matches!(gold, VerdictLabel::ImageFake | VerdictLabel::BothFake),
    };
    if fake {
        Stance::Fake
    } else {
        Stance::Real
    }
}

pub fn label_for(subtask: Subtask, stance: Stance) -> SubtaskLabel {
    SubtaskLabel::from_stance(subtask, stance)
}

/// The three detector variants every stance script covers: plain, detector
/// saying real, detector saying fake.
pub fn detector_variants(name: &str) -> [Option<DetectorReport>; 3] {
    [
        None,
        Some(DetectorReport {
            verdict: DetectorVerdict::Real,
            confidence: 0.9,
            detector_name: name.to_string(),
        }),
        Some(DetectorReport {
            verdict: DetectorVerdict::Fake,
            confidence: 0.9,
            detector_name: name.to_string(),
        }),
    ]
}

/// Stance scripting policy for one claim.
#[derive(Debug, Clone, Copy)]
pub struct StancePlan {
    /// Stance the text evidence supports.
    pub text: Stance,
    /// Stance the image evidence supports in plain mode.
    pub image: Stance,
    /// When true, the image stance follows the detector verdict whenever a
    /// detector atom is present (the injected-prior echo).
    pub echo_detector: bool,
}

/// Digest-keyed stance entries for one claim: a weak grade after one step,
/// the decisive grade-9 stance after two, for all detector variants.
pub fn stance_entries_for_claim(
    claim: &Claim,
    plan: StancePlan,
    registry: &Arc<ToolRegistry>,
    detector_name: &str,
) -> Vec<ScriptEntry> {
    let mut entries = Vec::new();
    for subtask in Subtask::ALL {
        for variant in detector_variants(detector_name) {
            let stance = match (subtask, &variant) {
                (Subtask::Image, Some(report)) if plan.echo_detector => match report.verdict {
                    DetectorVerdict::Real => Stance::Real,
                    DetectorVerdict::Fake => Stance::Fake,
                },
                (Subtask::Image, _) => plan.image,
                (Subtask::Text, _) => plan.text,
            };
            let prefixes = evidence_prefixes(claim, subtask, 2, registry, variant.as_ref());
            entries.push(ScriptEntry::single(
                AgentRole::StanceGrader,
                keys::stance_specific(subtask, &prefixes[1]),
                stance_reply(stance, 2),
            ));
            entries.push(ScriptEntry::single(
                AgentRole::StanceGrader,
                keys::stance_specific(subtask, &prefixes[2]),
                stance_reply(stance, 9),
            ));
        }
    }
    entries
}

/// Debate and judge entries echoing the fusion of the Stage-1 labels, for
/// every label/detector combination: consensus in round one, judge
/// confident at 0.9.
pub fn consensus_debate_entries() -> Vec<ScriptEntry> {
    let mut entries = Vec::new();
    let text_labels = [SubtaskLabel::TextReal, SubtaskLabel::TextFake];
    let image_labels = [SubtaskLabel::ImageReal, SubtaskLabel::ImageFake];
    let detector_markers = ["none", "real", "fake"];
    for zt in text_labels {
        for zi in image_labels {
            for det in detector_markers {
                let fused = fusion_label(zt, zi);
                for round in 1..=3u32 {
                    entries.push(ScriptEntry::single(
                        AgentRole::Skeptic,
                        format!("debate:skeptic:r{round}:zt={zt}:zi={zi}:det={det}"),
                        debate_reply(fused, 0.85, "e001"),
                    ));
                    entries.push(ScriptEntry::single(
                        AgentRole::Supporter,
                        format!("debate:supporter:r{round}:zt={zt}:zi={zi}:det={det}"),
                        debate_reply(fused, 0.8, "e002"),
                    ));
                }
                entries.push(ScriptEntry::single(
                    AgentRole::Judge,
                    format!("judge:a={fused}:b={fused}:zt={zt}:zi={zi}:det={det}"),
                    judge_reply(fused, 0.9),
                ));
            }
        }
    }
    entries
}

/// One synthetic dataset record plus its corpus entry. The claim text
/// carries a unique topic marker the corpus keys on, and the snippet states
/// which way the scripted evidence leans.
pub fn synthetic_record(
    index: usize,
    gold: VerdictLabel,
    detector: Option<DetectorVerdict>,
    image_path: &str,
    detector_name: &str,
) -> (DatasetRecord, CorpusEntry) {
    let id = format!("c{index:04}");
    let topic = format!("topic-{index:04}");
    let record = DatasetRecord {
        id: id.clone(),
        image_path: image_path.to_string(),
        text: format!("Synthetic claim {id} about {topic} circulating online."),
        gold_label: gold.to_string(),
        detector: detector.map(|verdict| crate::harness::DetectorField {
            verdict,
            confidence: 0.9,
            name: detector_name.to_string(),
        }),
        meta: None,
    };
    let corpus = CorpusEntry {
        key: topic.clone(),
        snippet: format!("Coverage of {topic}: archives grade the account as {gold}."),
    };
    (record, corpus)
}

pub fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) {
    let mut file = std::fs::File::create(path).expect("fixture path is writable");
    for item in items {
        let line = serde_json::to_string(item).expect("fixture serializes");
        writeln!(file, "{line}").expect("fixture path is writable");
    }
}

/// Paths of one generated fixture set.
#[derive(Debug, Clone)]
pub struct FixturePaths {
    pub config: PathBuf,
    pub dataset: PathBuf,
    pub corpus: PathBuf,
    pub script: PathBuf,
    pub image: PathBuf,
}

/// Configuration text for a scripted, logical-clock run.
pub fn fixture_config_toml(mode: &str, seed: u64, workers: usize) -> String {
    format!(
        r#"# generated scripted fixture configuration

[search]
seed = {seed}

[run]
mode = "{mode}"
clock = "logical"
workers = {workers}

[backends.default]
kind = "script"
path = "script.jsonl"

[tools]
corpus = "corpus.jsonl"
"#
    )
}

/// The full synthetic fixture: `n` claims cycling through the four gold
/// labels, detector verdicts on every record, stances scripted to agree
/// with gold except where `noise` flips them, debate echoing fusion.
///
/// Returns the paths and the expected (gold, predicted) pairs for
/// plain-mode runs.
pub fn build_fixture(
    dir: &Path,
    n: usize,
    mode: &str,
    seed: u64,
    workers: usize,
    echo_detector: bool,
) -> (FixturePaths, Vec<(VerdictLabel, VerdictLabel)>) {
    let golds = VerdictLabel::ALL;
    let detector_name = "fixture_detector";
    let mut records = Vec::new();
    let mut corpus = Vec::new();
    let mut expected = Vec::new();

    for i in 0..n {
        let gold = golds[i % golds.len()];
        let detector = if i % 2 == 0 {
            Some(DetectorVerdict::Fake)
        } else {
            Some(DetectorVerdict::Real)
        };
        let (record, entry) = synthetic_record(i, gold, detector, "images/sample.png", detector_name);
        records.push(record);
        corpus.push(entry);
    }

    let registry = fixture_registry(corpus.clone());
    let mut script = Vec::new();
    script.extend(planner_entries(12));
    script.extend(coherence_entries());
    script.extend(consensus_debate_entries());
    // default stance keeps unexpected states deterministic and non-stopping
    script.push(ScriptEntry::single(
        AgentRole::StanceGrader,
        DEFAULT_KEY,
        stance_reply(Stance::Real, 2),
    ));

    for (i, record) in records.iter().enumerate() {
        let gold = golds[i % golds.len()];
        // scripted noise: some text stances and some image stances disagree
        // with gold, making the confusion matrix non-trivial
        let mut text = gold_stance(Subtask::Text, gold);
        let mut image = gold_stance(Subtask::Image, gold);
        if i % 5 == 3 {
            text = flip(text);
        }
        if i % 7 == 2 {
            image = flip(image);
        }
        let claim = Claim::new(
            record.id.clone(),
            record.image_path.clone(),
            record.text.clone(),
        );
        let plan = StancePlan {
            text,
            image,
            echo_detector,
        };
        script.extend(stance_entries_for_claim(&claim, plan, &registry, detector_name));
        let predicted = fusion_label(
            label_for(Subtask::Text, text),
            label_for(Subtask::Image, image),
        );
        expected.push((gold, predicted));
    }

    std::fs::create_dir_all(dir.join("images")).expect("fixture dir is writable");
    let paths = FixturePaths {
        config: dir.join("config.toml"),
        dataset: dir.join("dataset.jsonl"),
        corpus: dir.join("corpus.jsonl"),
        script: dir.join("script.jsonl"),
        image: dir.join("images/sample.png"),
    };
    std::fs::write(
        &paths.config,
        fixture_config_toml(mode, seed, workers),
    )
    .expect("fixture dir is writable");
    write_jsonl(&paths.dataset, &records);
    write_jsonl(&paths.corpus, &corpus);
    write_jsonl(&paths.script, &script);
    std::fs::write(&paths.image, placeholder_png()).expect("fixture dir is writable");
    (paths, expected)
}

fn flip(stance: Stance) -> Stance {
    match stance {
        Stance::Real => Stance::Fake,
        Stance::Fake => Stance::Real,
    }
}

/// Minimal valid 1x1 gray PNG.
pub fn placeholder_png() -> Vec<u8> {
    const PNG: [u8; 67] = [
        0x89, 0x50, 0x4E, 0x47, 0x0D, 0x0A, 0x1A, 0x0A, 0x00, 0x00, 0x00, 0x0D, 0x49, 0x48, 0x44,
        0x52, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x01, 0x08, 0x00, 0x00, 0x00, 0x00, 0x3A,
        0x7E, 0x9B, 0x55, 0x00, 0x00, 0x00, 0x0A, 0x49, 0x44, 0x41, 0x54, 0x78, 0x9C, 0x63, 0x68,
        0x00, 0x00, 0x00, 0x82, 0x00, 0x81, 0x77, 0xCD, 0x72, 0xB6, 0x00, 0x00, 0x00, 0x00, 0x49,
        0x45, 0x4E, 0x44, 0xAE, 0x42, 0x60, 0x82,
    ];
    PNG.to_vec()
}

/// Map BTreeMap-based args helper for tests.
pub fn args(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}
