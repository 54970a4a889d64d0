//! Goal-directed evidence acquisition: the select/expand/rollout/backprop
//! loop with UCT selection, early termination on the score product,
//! refutation pruning with budget reallocation between the two subtask
//! searches, and subtask label extraction.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{AgentSet, ProtocolError};
use crate::model::{
    Action, Claim, EvidenceAtom, SearchState, Stance, Subtask, SubtaskLabel, Trajectory,
};
use crate::scoring::{
    base_utility, confidence_from_grade, node_value, termination_met, trajectory_utility,
    ScoringConfig, ScoringError, TrajectoryScores,
};
use crate::toolplane::{DetectorReport, Environment, ToolError};
use crate::{Real, Score};

#[derive(Debug, Error)]
pub enum SearchError {
    /// Budget exhausted with zero successful expansions; carries the partial
    /// trace for diagnosis.
    #[error("degenerate {subtask} search: {steps_used} iterations, no successful expansion")]
    Degenerate {
        subtask: Subtask,
        steps_used: u32,
        trace: Box<SubtaskTrace>,
    },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error("disconnected backpropagation path at index {0}")]
    DisconnectedPath(usize),
}

/// Per-claim search knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub budget_text: u32,
    pub budget_image: u32,
    /// UCT exploration constant.
    pub exploration: Score,
    pub rollout_depth: u32,
    pub scoring: ScoringConfig,
    pub seed: u64,
    pub memory_bound: usize,
    pub content_cap: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            budget_text: 8,
            budget_image: 8,
            exploration: 1.414,
            rollout_depth: 1,
            scoring: ScoringConfig::default(),
            seed: 42,
            memory_bound: crate::model::DEFAULT_MEMORY_BOUND,
            content_cap: crate::model::DEFAULT_CONTENT_CAP,
        }
    }
}

impl SearchConfig {
    pub fn budget(&self, subtask: Subtask) -> u32 {
        match subtask {
            Subtask::Text => self.budget_text,
            Subtask::Image => self.budget_image,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.budget_text < 1 || self.budget_image < 1 {
            return Err("search budgets must be >= 1".into());
        }
        if self.exploration <= 0.0 {
            return Err(format!(
                "search.exploration = {} must be > 0",
                self.exploration
            ));
        }
        self.scoring.validate().map_err(|e| e.to_string())
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EdgeStats {
    /// Cumulative backed-up value for this edge.
    pub q_sum: Score,
    pub visits: u32,
}

/// One node of the search tree: the pair (state, trajectory) plus visit
/// statistics. Children keep insertion order; ties break toward the earliest
/// insertion everywhere.
#[derive(Debug, Clone)]
pub struct TreeNode {
    pub state: SearchState,
    pub trajectory: Trajectory,
    pub children: Vec<(Action, NodeId)>,
    /// Parallel to `children`.
    pub edges: Vec<EdgeStats>,
    pub visits: u32,
    /// Cached value of the last evaluation that ended at this node.
    pub value: Option<Score>,
    /// True once the planner has been consulted here.
    pub expanded: bool,
    pub terminal: bool,
}

impl TreeNode {
    pub fn new(state: SearchState, trajectory: Trajectory) -> Self {
        Self {
            state,
            trajectory,
            children: Vec::new(),
            edges: Vec::new(),
            visits: 0,
            value: None,
            expanded: false,
            terminal: false,
        }
    }
}

/// Arena-backed search tree.
#[derive(Debug, Clone)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn new(root: TreeNode) -> Self {
        Self { nodes: vec![root] }
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn add_child(&mut self, parent: NodeId, action: Action, child: TreeNode) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(child);
        self.nodes[parent].children.push((action, id));
        self.nodes[parent].edges.push(EdgeStats::default());
        id
    }
}

/// UCT score with the +1-shifted denominators:
/// `q_sum/(n_edge+1) + c * sqrt(ln(n_node+1)/(n_edge+1))`.
pub fn uct_score<F: Real>(q_sum: F, n_edge: u32, n_node: u32, c: F) -> F {
    let edge = F::from_u32(n_edge).unwrap() + F::one();
    let node = F::from_u32(n_node).unwrap() + F::one();
    q_sum / edge + c * (node.ln() / edge).sqrt()
}

/// Descend by UCT argmax while the node is fully expanded and non-terminal;
/// returns the visited path root-first. Ties break toward the
/// earliest-inserted action.
pub fn select_path(tree: &Tree, root: NodeId, c: Score) -> Vec<NodeId> {
    let mut path = vec![root];
    let mut current = root;
    loop {
        let node = &tree.nodes[current];
        if !node.expanded || node.terminal || node.children.is_empty() {
            break;
        }
        let mut best_index = 0;
        let mut best_score = uct_score(
            node.edges[0].q_sum,
            node.edges[0].visits,
            node.visits,
            c,
        );
        for (i, edge) in node.edges.iter().enumerate().skip(1) {
            let score = uct_score(edge.q_sum, edge.visits, node.visits, c);
            if score > best_score {
                best_index = i;
                best_score = score;
            }
        }
        current = node.children[best_index].1;
        path.push(current);
    }
    path
}

/// Add one iteration's value along the path: every node's visit count, every
/// traversed edge's count and cumulative value, and the leaf's cached value.
pub fn backpropagate(tree: &mut Tree, path: &[NodeId], value: Score) -> Result<(), SearchError> {
    for window in path.windows(2) {
        let (parent, child) = (window[0], window[1]);
        let index = tree.nodes[parent]
            .children
            .iter()
            .position(|(_, id)| *id == child)
            .ok_or(SearchError::DisconnectedPath(child))?;
        let edge = &mut tree.nodes[parent].edges[index];
        edge.visits += 1;
        edge.q_sum += value;
    }
    for &id in path {
        tree.nodes[id].visits += 1;
    }
    if let Some(&leaf) = path.last() {
        tree.nodes[leaf].value = Some(value);
    }
    Ok(())
}

/// Why a subtask search stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Score product of the best trajectory reached the threshold.
    Threshold,
    /// Refutation pruning froze this search and reallocated its budget.
    Pruned,
    BudgetExhausted,
}

/// Structured summary a subtask search returns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubtaskResult {
    pub subtask: Subtask,
    pub label: SubtaskLabel,
    /// 1..=10 grade behind the label.
    pub grade: i64,
    pub evidence: Vec<EvidenceAtom>,
    pub best_trajectory: Trajectory,
    /// Recomputed scores of the best trajectory.
    pub scores: TrajectoryScores,
    pub stopped_early: bool,
    pub steps_used: u32,
}

/// Recompute record for one iteration: the best node's refreshed scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecomputeTrace {
    pub best_node: NodeId,
    pub utility: Score,
    pub confidence: Score,
    pub stance: Stance,
    pub product: Score,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: u32,
    /// Node ids along the selection path, root first.
    pub path: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expanded_action: Option<Action>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansion_error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollout: Option<TrajectoryScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Score>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recompute: Option<RecomputeTrace>,
}

/// Ordered record of one subtask search, embedded in the per-claim report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubtaskTrace {
    pub subtask: Subtask,
    pub budget_initial: u32,
    pub budget_final: u32,
    pub steps_used: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<StopReason>,
    pub iterations: Vec<IterationTrace>,
}

/// Map evidence to a modality-qualified label via the stance grader. Empty
/// evidence defaults to modality-REAL at grade 1: maximum uncertainty,
/// presumption of authenticity.
pub fn subtask_label(
    evidence: &[EvidenceAtom],
    subtask: Subtask,
    agents: &AgentSet,
) -> Result<(SubtaskLabel, i64), ProtocolError> {
    if evidence.is_empty() {
        return Ok((SubtaskLabel::from_stance(subtask, Stance::Real), 1));
    }
    let (stance, grade) = agents.grade_stance(evidence, subtask)?;
    Ok((SubtaskLabel::from_stance(subtask, stance), grade))
}

/// Outcome of one interleaved iteration, consumed by the claim-level loop.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub finished: Option<StopReason>,
    pub recompute: Option<(TrajectoryScores, Stance)>,
}

/// One resumable subtask search, stepped one MCTS iteration at a time so the
/// two subtasks of a claim can interleave and reallocate budget.
pub struct SubtaskSearch {
    tree: Tree,
    subtask: Subtask,
    theta: Score,
    lambda: Score,
    exploration: Score,
    rollout_depth: u32,
    budget: u32,
    steps_used: u32,
    successful_expansions: u32,
    stop: Option<StopReason>,
    best: Option<(NodeId, TrajectoryScores, Stance)>,
    rng: ChaCha8Rng,
    trace_iterations: Vec<IterationTrace>,
    budget_initial: u32,
}

impl SubtaskSearch {
    pub fn new(initial_state: SearchState, cfg: &SearchConfig, rng_seed: u64) -> Self {
        let subtask = initial_state.subtask;
        let root = TreeNode::new(initial_state, Trajectory::default());
        Self {
            tree: Tree::new(root),
            subtask,
            theta: cfg.scoring.theta(subtask),
            lambda: cfg.scoring.lambda,
            exploration: cfg.exploration,
            rollout_depth: cfg.rollout_depth,
            budget: cfg.budget(subtask),
            steps_used: 0,
            successful_expansions: 0,
            stop: None,
            best: None,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            trace_iterations: Vec::new(),
            budget_initial: cfg.budget(subtask),
        }
    }

    pub fn subtask(&self) -> Subtask {
        self.subtask
    }

    pub fn theta(&self) -> Score {
        self.theta
    }

    pub fn finished(&self) -> Option<StopReason> {
        self.stop
    }

    pub fn steps_used(&self) -> u32 {
        self.steps_used
    }

    pub fn budget(&self) -> u32 {
        self.budget
    }

    pub fn remaining_budget(&self) -> u32 {
        self.budget.saturating_sub(self.steps_used)
    }

    pub fn grant_budget(&mut self, extra: u32) {
        self.budget += extra;
    }

    pub fn runnable(&self) -> bool {
        self.stop.is_none() && self.steps_used < self.budget
    }

    pub fn freeze(&mut self, reason: StopReason) {
        if self.stop.is_none() {
            self.stop = Some(reason);
        }
    }

    /// Score a node: structural utility over the (hypothetically extended)
    /// tool list blended with graded coherence of the real trajectory, plus
    /// the stance grade over the accumulated evidence. `depth` rollout steps
    /// append uniformly random untried tools; nothing is executed.
    fn evaluate_node(
        &mut self,
        id: NodeId,
        agents: &AgentSet,
        registry_tools: &[String],
        depth: u32,
    ) -> Result<(TrajectoryScores, Stance), SearchError> {
        let node = &self.tree.nodes[id];
        let trajectory = node.trajectory.clone();
        let evidence = node.state.evidence.clone();
        let mut extended = trajectory.tools();
        for _ in 0..depth {
            let untried: Vec<&String> = registry_tools
                .iter()
                .filter(|t| !extended.contains(t))
                .collect();
            if untried.is_empty() {
                break;
            }
            let pick = self.rng.gen_range(0..untried.len());
            extended.push(untried[pick].clone());
        }
        let base: Score = base_utility(&extended);
        let coherence = agents.grade_coherence(&trajectory)?;
        let utility = trajectory_utility(base, coherence)?;
        let (stance, grade) = agents.grade_stance(&evidence, self.subtask)?;
        let confidence = confidence_from_grade(grade)?;
        Ok((
            TrajectoryScores {
                utility,
                confidence,
            },
            stance,
        ))
    }

    /// Best node so far by cached value; ties break toward creation order.
    fn best_node(&self) -> Option<NodeId> {
        let mut best: Option<(NodeId, Score)> = None;
        for (id, node) in self.tree.nodes.iter().enumerate() {
            if let Some(value) = node.value {
                let replace = match best {
                    None => true,
                    Some((_, best_value)) => value > best_value,
                };
                if replace {
                    best = Some((id, value));
                }
            }
        }
        best.map(|(id, _)| id)
    }

    /// Run one MCTS iteration: select, expand, rollout, backpropagate, then
    /// recompute the best node's scores and test the termination criterion.
    pub fn step(
        &mut self,
        agents: &AgentSet,
        env: &mut Environment,
    ) -> Result<StepOutcome, SearchError> {
        if !self.runnable() {
            return Ok(StepOutcome {
                finished: self.stop,
                recompute: self.best.map(|(_, s, st)| (s, st)),
            });
        }
        self.steps_used += 1;
        let iteration = self.steps_used;
        let registry_tools = env.registry().tool_names();
        let descriptors: Vec<_> = env.registry().descriptors().cloned().collect();

        let mut path = select_path(&self.tree, self.tree.root(), self.exploration);
        let mut trace = IterationTrace {
            iteration,
            path: path.clone(),
            expanded_action: None,
            observation: None,
            expansion_error: None,
            rollout: None,
            value: None,
            recompute: None,
        };

        let leaf = *path.last().expect("selection path is never empty");
        let mut evaluated = leaf;
        let mut skip_scoring = false;
        if !self.tree.nodes[leaf].terminal {
            let state = self.tree.nodes[leaf].state.clone();
            let trajectory = self.tree.nodes[leaf].trajectory.clone();
            match agents.plan_next_action(&state, &trajectory, &descriptors) {
                Ok(action) => {
                    self.tree.nodes[leaf].expanded = true;
                    if let Some((_, existing)) = self.tree.nodes[leaf]
                        .children
                        .iter()
                        .find(|(a, _)| *a == action)
                        .cloned()
                    {
                        // planner repeated a known action: descend instead
                        evaluated = existing;
                        path.push(existing);
                    } else {
                        let (next_state, observation) = env.step(&state, &action)?;
                        let child_trajectory =
                            trajectory.extended(action.clone(), observation.clone());
                        let child = TreeNode::new(next_state, child_trajectory);
                        let child_id = self.tree.add_child(leaf, action.clone(), child);
                        self.successful_expansions += 1;
                        trace.expanded_action = Some(action);
                        trace.observation = Some(observation);
                        evaluated = child_id;
                        path.push(child_id);
                    }
                }
                Err(err) => {
                    // failures are informative but unscoreable: mark and move on
                    self.tree.nodes[leaf].terminal = true;
                    self.tree.nodes[leaf].expanded = true;
                    trace.expansion_error = Some(err.to_string());
                    skip_scoring = true;
                }
            }
        } else if self.tree.nodes[leaf].trajectory.is_empty() {
            // terminal root that never produced a step: nothing to score
            skip_scoring = true;
        }

        if !skip_scoring {
            let (scores, _stance) =
                self.evaluate_node(evaluated, agents, &registry_tools, self.rollout_depth)?;
            let value = node_value(scores, self.lambda);
            trace.rollout = Some(scores);
            trace.value = Some(value);
            backpropagate(&mut self.tree, &path, value)?;
            trace.path = path;
        }

        let mut outcome = StepOutcome {
            finished: None,
            recompute: None,
        };
        if let Some(best_id) = self.best_node() {
            let (scores, stance) = self.evaluate_node(best_id, agents, &registry_tools, 0)?;
            self.best = Some((best_id, scores, stance));
            trace.recompute = Some(RecomputeTrace {
                best_node: best_id,
                utility: scores.utility,
                confidence: scores.confidence,
                stance,
                product: scores.utility * scores.confidence,
            });
            outcome.recompute = Some((scores, stance));
            if termination_met(scores, self.theta) {
                self.freeze(StopReason::Threshold);
            }
        }
        if self.stop.is_none() && self.steps_used >= self.budget {
            self.freeze(StopReason::BudgetExhausted);
        }
        self.trace_iterations.push(trace);
        outcome.finished = self.stop;
        Ok(outcome)
    }

    fn trace(&self) -> SubtaskTrace {
        SubtaskTrace {
            subtask: self.subtask,
            budget_initial: self.budget_initial,
            budget_final: self.budget,
            steps_used: self.steps_used,
            stop_reason: self.stop,
            iterations: self.trace_iterations.clone(),
        }
    }

    /// Close out the search: the globally best node's evidence and
    /// trajectory become the result, labeled by the stance grader.
    pub fn finish(
        mut self,
        agents: &AgentSet,
    ) -> Result<(SubtaskResult, SubtaskTrace), SearchError> {
        if self.stop.is_none() {
            self.freeze(StopReason::BudgetExhausted);
        }
        let trace = self.trace();
        if self.successful_expansions == 0 {
            return Err(SearchError::Degenerate {
                subtask: self.subtask,
                steps_used: self.steps_used,
                trace: Box::new(trace),
            });
        }
        let (best_id, scores, _stance) = self
            .best
            .expect("successful expansions imply a recomputed best node");
        let node = &self.tree.nodes[best_id];
        let (label, grade) = subtask_label(&node.state.evidence, self.subtask, agents)?;
        let stopped_early = matches!(self.stop, Some(StopReason::Threshold | StopReason::Pruned));
        Ok((
            SubtaskResult {
                subtask: self.subtask,
                label,
                grade,
                evidence: node.state.evidence.clone(),
                best_trajectory: node.trajectory.clone(),
                scores,
                stopped_early,
                steps_used: self.steps_used,
            },
            trace,
        ))
    }
}

/// Stable per-(claim, subtask) RNG seed, independent of scheduling.
pub fn derive_seed(base: u64, claim_id: &str, subtask: Subtask) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(claim_id.as_bytes());
    hasher.update([match subtask {
        Subtask::Text => 0u8,
        Subtask::Image => 1u8,
    }]);
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    base ^ u64::from_le_bytes(bytes)
}

/// Run one subtask search to completion under its own budget.
pub fn run_subtask_search(
    claim: &Claim,
    subtask: Subtask,
    cfg: &SearchConfig,
    agents: &AgentSet,
    env: &mut Environment,
) -> Result<SubtaskResult, SearchError> {
    let state = SearchState::initial(claim.clone(), subtask, cfg.memory_bound);
    let mut search = SubtaskSearch::new(state, cfg, derive_seed(cfg.seed, &claim.id, subtask));
    while search.runnable() {
        search.step(agents, env)?;
    }
    search.finish(agents).map(|(result, _)| result)
}

/// Record of one budget transfer caused by refutation pruning.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BudgetTransfer {
    pub from: Subtask,
    pub to: Subtask,
    pub amount: u32,
    /// False when the receiving search had already finished.
    pub applied: bool,
}

/// Stage-1 output for a whole claim.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClaimSearchOutcome {
    pub text: SubtaskResult,
    pub image: SubtaskResult,
    pub text_trace: SubtaskTrace,
    pub image_trace: SubtaskTrace,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transfers: Vec<BudgetTransfer>,
}

/// Check the pruning rule against a recompute outcome: a confident FAKE
/// stance freezes the search and releases its remaining budget.
fn prune_fires(outcome: &StepOutcome, theta: Score) -> bool {
    match (&outcome.finished, &outcome.recompute) {
        (None, Some((scores, stance))) => {
            *stance == Stance::Fake && scores.confidence >= theta
        }
        _ => false,
    }
}

/// Run both subtask searches for one claim on the interleaved schedule
/// (text iteration 1, image iteration 1, text iteration 2, ...), applying
/// refutation pruning between iterations. In hybrid mode the detector
/// report is prepended to both subtasks' initial evidence.
pub fn run_claim_search(
    claim: &Claim,
    cfg: &SearchConfig,
    agents: &AgentSet,
    env: &mut Environment,
    detector: Option<&DetectorReport>,
) -> Result<ClaimSearchOutcome, SearchError> {
    let mut searches: Vec<SubtaskSearch> = Vec::with_capacity(2);
    for subtask in Subtask::ALL {
        let mut state = SearchState::initial(claim.clone(), subtask, cfg.memory_bound);
        if let Some(report) = detector {
            let now = env.now();
            state = crate::toolplane::inject_detector_evidence(&state, report, now)?;
        }
        searches.push(SubtaskSearch::new(
            state,
            cfg,
            derive_seed(cfg.seed, &claim.id, subtask),
        ));
    }
    let mut transfers = Vec::new();

    loop {
        let mut progressed = false;
        for index in 0..searches.len() {
            if !searches[index].runnable() {
                continue;
            }
            let outcome = searches[index].step(agents, env)?;
            progressed = true;
            if prune_fires(&outcome, searches[index].theta()) {
                let remaining = searches[index].remaining_budget();
                searches[index].freeze(StopReason::Pruned);
                let other = 1 - index;
                let applied = searches[other].finished().is_none();
                if applied && remaining > 0 {
                    searches[other].grant_budget(remaining);
                }
                transfers.push(BudgetTransfer {
                    from: searches[index].subtask(),
                    to: searches[other].subtask(),
                    amount: remaining,
                    applied,
                });
            }
        }
        if !progressed {
            break;
        }
    }

    let mut searches = searches.into_iter();
    let text_search = searches.next().expect("two searches");
    let image_search = searches.next().expect("two searches");
    let (text, text_trace) = text_search.finish(agents)?;
    let (image, image_trace) = image_search.finish(agents)?;
    Ok(ClaimSearchOutcome {
        text,
        image,
        text_trace,
        image_trace,
        transfers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::script::{ScriptEntry, ScriptedBackend, DEFAULT_KEY};
    use crate::agents::{keys, AgentRole};
    use crate::clock::{Clock, ClockKind};
    use crate::model::Modality;
    use crate::toolplane::{register_builtin_fixtures, CorpusEntry, ToolRegistry};
    use rand::RngCore;
    use std::sync::Arc;

    fn claim() -> Claim {
        Claim::new("c1", "img.png", "governor watching election returns")
    }

    fn registry() -> Arc<ToolRegistry> {
        let mut registry = ToolRegistry::new();
        register_builtin_fixtures(
            &mut registry,
            vec![CorpusEntry {
                key: "election returns".into(),
                snippet: "Archive confirms the gathering.".into(),
            }],
        )
        .unwrap();
        Arc::new(registry)
    }

    fn env() -> Environment {
        Environment::new(registry(), Clock::new(ClockKind::Logical), 2048)
    }

    fn agents(entries: Vec<ScriptEntry>) -> AgentSet {
        AgentSet::uniform(Arc::new(ScriptedBackend::new(entries)))
    }

    fn empty_state() -> SearchState {
        SearchState::initial(claim(), Subtask::Text, 5)
    }

    fn planner_reply(tool: &str) -> String {
        format!("{{\"tool\": \"{tool}\"}}")
    }

    fn coherence_reply(value: f64) -> String {
        format!("{{\"coherence\": {value}}}")
    }

    fn stance_reply(stance: &str, grade: i64) -> String {
        format!("{{\"stance\": \"{stance}\", \"grade\": {grade}}}")
    }

    #[test]
    fn uct_known_values() {
        // ln(1) = 0 zeroes the exploration term for any c
        for c in [0.1, 1.0, 1.414, 10.0] {
            assert_eq!(uct_score(1.0_f64, 1, 0, c), 0.5);
        }
        assert!((uct_score(0.0_f64, 0, 3, 1.0) - 1.1774100225154747).abs() < 1e-12);
        assert!((uct_score(1.0_f64, 1, 4, 1.0) - 1.3970612889970506).abs() < 1e-12);
    }

    #[test]
    fn uct_is_generic_over_f32() {
        assert_eq!(uct_score(1.0_f32, 1, 0, 1.414), 0.5);
    }

    fn constructed_tree(stats: &[(Score, u32)], root_visits: u32) -> Tree {
        let mut tree = Tree::new(TreeNode::new(empty_state(), Trajectory::default()));
        tree.nodes[0].expanded = true;
        tree.nodes[0].visits = root_visits;
        for (i, (q, n)) in stats.iter().enumerate() {
            let action = Action::new(format!("tool{i}"));
            let child = TreeNode::new(empty_state(), Trajectory::default());
            let id = tree.add_child(0, action, child);
            tree.nodes[0].edges[i] = EdgeStats {
                q_sum: *q,
                visits: *n,
            };
            assert_eq!(id, i + 1);
        }
        tree
    }

    #[test]
    fn select_path_stops_at_unexpanded_root() {
        let tree = Tree::new(TreeNode::new(empty_state(), Trajectory::default()));
        assert_eq!(select_path(&tree, 0, 1.414), vec![0]);
    }

    #[test]
    fn select_path_follows_higher_uct() {
        // child 0: q=0.4/1 visit; child 1: q=0.9/1 visit -> child 1 wins
        let tree = constructed_tree(&[(0.4, 1), (0.9, 1)], 2);
        let path = select_path(&tree, 0, 0.001);
        assert_eq!(path, vec![0, 2]);
    }

    #[test]
    fn select_path_breaks_ties_by_insertion_order() {
        let tree = constructed_tree(&[(0.5, 1), (0.5, 1), (0.5, 1)], 3);
        let path = select_path(&tree, 0, 1.0);
        assert_eq!(path, vec![0, 1]);
    }

    #[test]
    fn select_path_first_move_matches_bruteforce_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let k = 1 + (rng.next_u32() % 5) as usize;
            let stats: Vec<(Score, u32)> = (0..k)
                .map(|_| {
                    (
                        (rng.next_u32() % 1000) as Score / 500.0,
                        rng.next_u32() % 20,
                    )
                })
                .collect();
            let root_visits = rng.next_u32() % 40;
            let c = 0.1 + (rng.next_u32() % 300) as Score / 100.0;
            let tree = constructed_tree(&stats, root_visits);
            let path = select_path(&tree, 0, c);
            let brute = stats
                .iter()
                .enumerate()
                .map(|(i, (q, n))| (i, uct_score(*q, *n, root_visits, c)))
                .fold((0usize, Score::NEG_INFINITY), |acc, (i, s)| {
                    if s > acc.1 {
                        (i, s)
                    } else {
                        acc
                    }
                });
            assert_eq!(path[1], brute.0 + 1);
        }
    }

    #[test]
    fn backpropagate_single_node_updates_no_edges() {
        let mut tree = Tree::new(TreeNode::new(empty_state(), Trajectory::default()));
        backpropagate(&mut tree, &[0], 0.7).unwrap();
        assert_eq!(tree.nodes[0].visits, 1);
        assert_eq!(tree.nodes[0].value, Some(0.7));
    }

    #[test]
    fn backpropagate_accumulates_along_path() {
        let mut tree = Tree::new(TreeNode::new(empty_state(), Trajectory::default()));
        let mid = tree.add_child(0, Action::new("a"), TreeNode::new(empty_state(), Trajectory::default()));
        let leaf = tree.add_child(mid, Action::new("b"), TreeNode::new(empty_state(), Trajectory::default()));
        for _ in 0..2 {
            backpropagate(&mut tree, &[0, mid, leaf], 0.5).unwrap();
        }
        assert_eq!(tree.nodes[0].edges[0].visits, 2);
        assert_eq!(tree.nodes[0].edges[0].q_sum, 1.0);
        assert_eq!(tree.nodes[mid].edges[0].visits, 2);
        assert_eq!(tree.nodes[mid].edges[0].q_sum, 1.0);
        assert_eq!(tree.nodes[0].visits, 2);
        assert_eq!(tree.nodes[leaf].value, Some(0.5));
    }

    #[test]
    fn backpropagate_zero_value_increments_counts_only() {
        let mut tree = Tree::new(TreeNode::new(empty_state(), Trajectory::default()));
        let child = tree.add_child(0, Action::new("a"), TreeNode::new(empty_state(), Trajectory::default()));
        backpropagate(&mut tree, &[0, child], 0.0).unwrap();
        assert_eq!(tree.nodes[0].edges[0].visits, 1);
        assert_eq!(tree.nodes[0].edges[0].q_sum, 0.0);
    }

    #[test]
    fn backpropagate_rejects_disconnected_path() {
        let mut tree = Tree::new(TreeNode::new(empty_state(), Trajectory::default()));
        let _ = tree.add_child(0, Action::new("a"), TreeNode::new(empty_state(), Trajectory::default()));
        let orphan = tree.nodes.len();
        tree.nodes.push(TreeNode::new(empty_state(), Trajectory::default()));
        let err = backpropagate(&mut tree, &[0, orphan], 0.5);
        assert!(matches!(err, Err(SearchError::DisconnectedPath(_))));
    }

    #[test]
    fn subtask_label_defaults_on_empty_evidence() {
        let set = agents(vec![]);
        let (label, grade) = subtask_label(&[], Subtask::Image, &set).unwrap();
        assert_eq!(label, SubtaskLabel::ImageReal);
        assert_eq!(grade, 1);
    }

    #[test]
    fn subtask_label_passes_stance_through() {
        let set = agents(vec![ScriptEntry::single(
            AgentRole::StanceGrader,
            DEFAULT_KEY,
            stance_reply("FAKE", 9),
        )]);
        let atom = EvidenceAtom {
            modality: Modality::Text,
            content: "refutation".into(),
            source: "corpus_search#1".into(),
            timestamp: crate::clock::epoch(),
        };
        let (label, grade) = subtask_label(&[atom], Subtask::Text, &set).unwrap();
        assert_eq!(label, SubtaskLabel::TextFake);
        assert_eq!(grade, 9);
    }

    /// Script driving a search through distinct tools with low scores, so it
    /// exhausts its budget.
    fn exhaustive_script() -> Vec<ScriptEntry> {
        let tools = [
            "corpus_search",
            "image_caption_fixture",
            "entity_lookup_fixture",
            "time_check_fixture",
            "vqa_fixture",
        ];
        let mut entries = Vec::new();
        for (len, tool) in tools.iter().enumerate() {
            let last = if len == 0 { None } else { Some(tools[len - 1]) };
            entries.push(ScriptEntry::single(
                AgentRole::Planner,
                keys::planner(Subtask::Text, len, last),
                planner_reply(tool),
            ));
        }
        entries.push(ScriptEntry::single(
            AgentRole::Planner,
            DEFAULT_KEY,
            planner_reply("corpus_search"),
        ));
        entries.push(ScriptEntry::single(
            AgentRole::CoherenceGrader,
            DEFAULT_KEY,
            coherence_reply(0.2),
        ));
        entries.push(ScriptEntry::single(
            AgentRole::StanceGrader,
            DEFAULT_KEY,
            stance_reply("REAL", 1),
        ));
        entries
    }

    #[test]
    fn low_grades_exhaust_the_budget() {
        let cfg = SearchConfig {
            budget_text: 4,
            rollout_depth: 0,
            ..SearchConfig::default()
        };
        let set = agents(exhaustive_script());
        let mut environment = env();
        let result =
            run_subtask_search(&claim(), Subtask::Text, &cfg, &set, &mut environment).unwrap();
        assert!(!result.stopped_early);
        assert_eq!(result.steps_used, 4);
        // max product 0.1 * anything < theta
        assert!(result.scores.confidence <= 0.1 + 1e-12);
    }

    #[test]
    fn early_stop_fires_at_first_qualifying_iteration() {
        // iteration 1 product 0.3, iteration 2 product ~0.72 >= 0.6
        let c1 = 1.2 - 0.7563138071233317; // S_T = 0.6 at L = 1
        let c2 = 1.6 - 0.8333333333333334; // S_T = 0.8 at L = 2
        let entries = vec![
            ScriptEntry::single(
                AgentRole::Planner,
                keys::planner(Subtask::Text, 0, None),
                planner_reply("corpus_search"),
            ),
            ScriptEntry::single(
                AgentRole::Planner,
                keys::planner(Subtask::Text, 1, Some("corpus_search")),
                planner_reply("vqa_fixture"),
            ),
            ScriptEntry::single(
                AgentRole::CoherenceGrader,
                "coh:corpus_search",
                coherence_reply(c1),
            ),
            ScriptEntry::single(
                AgentRole::CoherenceGrader,
                "coh:corpus_search,vqa_fixture",
                coherence_reply(c2),
            ),
            ScriptEntry::single(AgentRole::CoherenceGrader, DEFAULT_KEY, coherence_reply(0.0)),
            ScriptEntry::single(
                AgentRole::StanceGrader,
                "stance:text:none:1",
                stance_reply("REAL", 5),
            ),
            ScriptEntry::single(
                AgentRole::StanceGrader,
                "stance:text:none:2",
                stance_reply("REAL", 9),
            ),
            ScriptEntry::single(AgentRole::StanceGrader, DEFAULT_KEY, stance_reply("REAL", 1)),
        ];
        let cfg = SearchConfig {
            budget_text: 8,
            rollout_depth: 0,
            ..SearchConfig::default()
        };
        let set = agents(entries);
        let mut environment = env();
        let result =
            run_subtask_search(&claim(), Subtask::Text, &cfg, &set, &mut environment).unwrap();
        assert!(result.stopped_early);
        assert_eq!(result.steps_used, 2);
        assert!((result.scores.utility * result.scores.confidence - 0.72).abs() < 1e-9);
    }

    #[test]
    fn permanently_failing_planner_is_degenerate() {
        let entries = vec![ScriptEntry::single(
            AgentRole::Planner,
            DEFAULT_KEY,
            "this is not a tool call",
        )];
        let cfg = SearchConfig {
            budget_text: 1,
            ..SearchConfig::default()
        };
        let set = agents(entries);
        let mut environment = env();
        let err = run_subtask_search(&claim(), Subtask::Text, &cfg, &set, &mut environment);
        match err {
            Err(SearchError::Degenerate {
                subtask,
                steps_used,
                trace,
            }) => {
                assert_eq!(subtask, Subtask::Text);
                assert_eq!(steps_used, 1);
                assert!(trace.iterations[0].expansion_error.is_some());
            }
            other => panic!("expected degenerate search, got {other:?}"),
        }
    }

    #[test]
    fn expansion_increments_trajectory_length() {
        let entries = exhaustive_script();
        let cfg = SearchConfig {
            budget_text: 3,
            rollout_depth: 0,
            ..SearchConfig::default()
        };
        let set = agents(entries);
        let mut environment = env();
        let state = SearchState::initial(claim(), Subtask::Text, cfg.memory_bound);
        let mut search = SubtaskSearch::new(state, &cfg, 1);
        search.step(&set, &mut environment).unwrap();
        assert_eq!(search.tree.nodes.len(), 2);
        assert_eq!(search.tree.nodes[1].trajectory.len(), 1);
        search.step(&set, &mut environment).unwrap();
        assert_eq!(search.tree.nodes[2].trajectory.len(), 2);
    }

    #[test]
    fn visit_counts_conserve_across_root_edges() {
        let entries = exhaustive_script();
        let cfg = SearchConfig {
            budget_text: 5,
            rollout_depth: 0,
            ..SearchConfig::default()
        };
        let set = agents(entries);
        let mut environment = env();
        let state = SearchState::initial(claim(), Subtask::Text, cfg.memory_bound);
        let mut search = SubtaskSearch::new(state, &cfg, 1);
        for _ in 0..5 {
            search.step(&set, &mut environment).unwrap();
        }
        let iterations_past_root = search
            .trace_iterations
            .iter()
            .filter(|t| t.path.len() > 1)
            .count() as u32;
        assert_eq!(iterations_past_root, 5);
        let edge_total: u32 = search.tree.nodes[0].edges.iter().map(|e| e.visits).sum();
        assert_eq!(edge_total, iterations_past_root);
    }

    #[test]
    fn rollout_extension_composes_scoring_ops() {
        // registry has 5 tools; trajectory [corpus_search]; depth 1 adds one
        // untried tool; base_utility over the extended pair feeds the blend.
        let entries = vec![
            ScriptEntry::single(
                AgentRole::CoherenceGrader,
                DEFAULT_KEY,
                coherence_reply(0.6),
            ),
            ScriptEntry::single(AgentRole::StanceGrader, DEFAULT_KEY, stance_reply("REAL", 8)),
        ];
        let set = agents(entries);
        let environment = env();
        let cfg = SearchConfig {
            rollout_depth: 1,
            ..SearchConfig::default()
        };
        let state = SearchState::initial(claim(), Subtask::Text, cfg.memory_bound);
        let mut search = SubtaskSearch::new(state.clone(), &cfg, 99);
        // hand-build a node with trajectory [corpus_search]
        let child = TreeNode::new(
            state.clone(),
            Trajectory::default().extended(Action::new("corpus_search"), "obs".into()),
        );
        let id = search.tree.add_child(0, Action::new("corpus_search"), child);
        let tools = environment.registry().tool_names();
        let (scores, _) = search.evaluate_node(id, &set, &tools, 1).unwrap();
        assert!((scores.confidence - 0.8).abs() < 1e-12);
        // extended pair: two distinct tools, L = 2
        let expected_base: Score = base_utility(&[
            "corpus_search".to_string(),
            "other".to_string(),
        ]);
        assert!((scores.utility - (0.5 * expected_base + 0.3)).abs() < 1e-12);

        // depth 0 scores the existing trajectory only
        let (depth0, _) = search.evaluate_node(id, &set, &tools, 0).unwrap();
        let bare_base: Score = base_utility(&["corpus_search".to_string()]);
        assert!((depth0.utility - (0.5 * bare_base + 0.3)).abs() < 1e-12);
    }

    #[test]
    fn grade_out_of_range_propagates_from_rollout() {
        let entries = vec![
            ScriptEntry::single(
                AgentRole::CoherenceGrader,
                DEFAULT_KEY,
                coherence_reply(0.6),
            ),
            ScriptEntry::single(AgentRole::StanceGrader, DEFAULT_KEY, stance_reply("REAL", 11)),
        ];
        let set = agents(entries);
        let environment = env();
        let cfg = SearchConfig::default();
        let state = SearchState::initial(claim(), Subtask::Text, cfg.memory_bound);
        let mut search = SubtaskSearch::new(state, &cfg, 3);
        let tools = environment.registry().tool_names();
        let err = search.evaluate_node(0, &set, &tools, 0);
        assert!(matches!(
            err,
            Err(SearchError::Protocol(ProtocolError::GradeOutOfRange(11)))
        ));
    }

    #[test]
    fn identical_seeds_give_identical_results() {
        let cfg = SearchConfig {
            budget_text: 4,
            rollout_depth: 1,
            ..SearchConfig::default()
        };
        let set = agents(exhaustive_script());
        let mut runs = Vec::new();
        for _ in 0..2 {
            let mut environment = env();
            let result =
                run_subtask_search(&claim(), Subtask::Text, &cfg, &set, &mut environment).unwrap();
            runs.push(serde_json::to_string(&result).unwrap());
        }
        assert_eq!(runs[0], runs[1]);
    }
}
