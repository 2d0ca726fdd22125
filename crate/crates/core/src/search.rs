//! Refinement drivers: pass-through, random walk and best-first search over
//! feedback space.

use std::fmt::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::construction::ConstructionResult;
use crate::feedback::{
    combined_pool, landmark_feedback_pool, plan_feedback_pool, select_feedback, FeedbackCase, FeedbackMessage,
    Selection,
};
use crate::generator::{syntax_repair_loop, Backend, History, Message, RepairError, Role};
use crate::pddl::{rebind_problem, Domain};
use crate::planner::{PlannerConfig, FEEDBACK_K};
use crate::seed::stable_seed;
use crate::semantics::validate_plan;
use crate::text::{extract_pddl_block, parse_domain, SourceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PipelineKind {
    N,
    LR,
    LS,
    VR,
    VS,
    LVR,
    LVS,
}

impl PipelineKind {
    pub const ALL: [PipelineKind; 7] = [
        PipelineKind::N,
        PipelineKind::LR,
        PipelineKind::LS,
        PipelineKind::VR,
        PipelineKind::VS,
        PipelineKind::LVR,
        PipelineKind::LVS,
    ];

    pub fn uses_plans(self) -> bool {
        matches!(
            self,
            PipelineKind::VR | PipelineKind::VS | PipelineKind::LVR | PipelineKind::LVS
        )
    }

    pub fn uses_landmarks(self) -> bool {
        matches!(
            self,
            PipelineKind::LR | PipelineKind::LS | PipelineKind::LVR | PipelineKind::LVS
        )
    }

    pub fn is_search(self) -> bool {
        matches!(self, PipelineKind::LS | PipelineKind::VS | PipelineKind::LVS)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineKind::N => "N",
            PipelineKind::LR => "LR",
            PipelineKind::LS => "LS",
            PipelineKind::VR => "VR",
            PipelineKind::VS => "VS",
            PipelineKind::LVR => "LVR",
            PipelineKind::LVS => "LVS",
        }
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        PipelineKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown pipeline {s}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub kind: PipelineKind,
    pub budget: usize,
    pub child_cap: usize,
    pub weight: f64,
    pub planner: PlannerConfig,
    pub seed: u64,
    pub syntax_retry_in_refinement: usize,
}

impl PipelineConfig {
    pub fn new(kind: PipelineKind) -> Self {
        PipelineConfig {
            kind,
            budget: 15,
            child_cap: 10,
            weight: 1.0,
            planner: PlannerConfig::with_k(FEEDBACK_K),
            seed: 0,
            syntax_retry_in_refinement: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Open,
    Expanded,
    Goal,
    Discarded,
}

impl NodeStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeStatus::Open => "open",
            NodeStatus::Expanded => "expanded",
            NodeStatus::Goal => "goal",
            NodeStatus::Discarded => "discarded",
        }
    }
}

/// A candidate domain in the feedback tree. `h` is always computed from the
/// node's own domain; discarded nodes carry their parent's domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub domain: Domain,
    pub history: History,
    pub g: usize,
    pub h: usize,
    pub f: f64,
    pub feedback_used: Option<FeedbackMessage>,
    pub status: NodeStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Goal,
    Budget,
    NoFeedback,
    Failure,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Goal => "goal",
            Termination::Budget => "budget",
            Termination::NoFeedback => "no_feedback",
            Termination::Failure => "failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub final_domain: Domain,
    pub tree: Vec<SearchNode>,
    pub termination: Termination,
    pub llm_calls: usize,
    pub expansions: usize,
    pub chosen_node: usize,
    /// Landmark messages still pending for the final domain, when the
    /// pipeline uses landmark feedback.
    pub remaining_landmark_feedback: Option<usize>,
    pub error: Option<String>,
}

impl RunResult {
    /// One line per node: id, parent, G, H, f, status, feedback kind.
    pub fn tree_dump(&self) -> String {
        let mut s = String::from("id parent g h f status feedback\n");
        for n in &self.tree {
            let _ = writeln!(
                s,
                "{} {} {} {} {:.3} {} {}",
                n.id,
                n.parent.map_or_else(|| "-".to_string(), |p| p.to_string()),
                n.g,
                n.h,
                n.f,
                n.status.as_str(),
                n.feedback_used.as_ref().map_or("-", |m| m.kind.as_str())
            );
        }
        s
    }

    pub fn chosen(&self) -> &SearchNode {
        &self.tree[self.chosen_node]
    }
}

/// Reference plans that fail under `gen`; a problem that does not bind
/// counts all of its plans.
pub fn score_h(gen: &Domain, cases: &[FeedbackCase]) -> usize {
    cases
        .iter()
        .map(|c| match rebind_problem(&c.problem, gen) {
            Ok(p) => c
                .plans
                .iter()
                .filter(|pl| !validate_plan(gen, &p, pl).is_valid())
                .count(),
            Err(_) => c.plans.len(),
        })
        .sum()
}

/// Messages available to `kind` for `gen`.
pub fn feedback_pool(
    kind: PipelineKind,
    gen: &Domain,
    cases: &[FeedbackCase],
    planner: &PlannerConfig,
) -> Vec<FeedbackMessage> {
    let plans = if kind.uses_plans() {
        plan_feedback_pool(gen, cases)
    } else {
        Vec::new()
    };
    let landmarks = if kind.uses_landmarks() {
        landmark_feedback_pool(gen, cases, planner)
    } else {
        Vec::new()
    };
    combined_pool(plans, landmarks)
}

fn parse_full_domain(text: &str) -> Result<Domain, SourceError> {
    parse_domain(&extract_pddl_block(text)?)
}

fn node(id: usize, parent: Option<&SearchNode>, domain: Domain, history: History, h: usize, weight: f64) -> SearchNode {
    let g = parent.map_or(0, |p| p.g + 1);
    SearchNode {
        id,
        parent: parent.map(|p| p.id),
        domain,
        history,
        g,
        h,
        f: g as f64 + weight * h as f64,
        feedback_used: None,
        status: NodeStatus::Open,
    }
}

fn remaining_landmarks(
    kind: PipelineKind,
    d: &Domain,
    cases: &[FeedbackCase],
    planner: &PlannerConfig,
) -> Option<usize> {
    kind.uses_landmarks()
        .then(|| landmark_feedback_pool(d, cases, planner).len())
}

/// The constructed domain, unrefined.
pub fn run_no_feedback(root: &ConstructionResult, cases: &[FeedbackCase]) -> RunResult {
    let mut n = node(
        0,
        None,
        root.domain.clone(),
        root.transcript.clone(),
        score_h(&root.domain, cases),
        1.0,
    );
    n.status = NodeStatus::Expanded;
    RunResult {
        final_domain: root.domain.clone(),
        tree: vec![n],
        termination: Termination::NoFeedback,
        llm_calls: 0,
        expansions: 0,
        chosen_node: 0,
        remaining_landmark_feedback: None,
        error: None,
    }
}

/// Random-single refinement. Every backend call, syntax retries included,
/// spends one unit of `cfg.budget`.
pub fn run_random_walk(
    root: &ConstructionResult,
    cfg: &PipelineConfig,
    cases: &[FeedbackCase],
    backend: &dyn Backend,
) -> RunResult {
    let mut tree = vec![node(
        0,
        None,
        root.domain.clone(),
        root.transcript.clone(),
        score_h(&root.domain, cases),
        cfg.weight,
    )];
    let mut calls = 0;
    let mut current = 0;
    let mut error = None;
    let mut conversation = root.transcript.clone();
    let termination = loop {
        let pool = feedback_pool(cfg.kind, &tree[current].domain, cases, &cfg.planner);
        if pool.is_empty() {
            break Termination::NoFeedback;
        }
        if calls >= cfg.budget {
            break Termination::Budget;
        }
        let seed = stable_seed(&[&cfg.seed.to_be_bytes(), b"walk", &(tree.len() as u64).to_be_bytes()]);
        let msg = select_feedback(&pool, Selection::RandomSingle, 1, seed)
            .expect("pool is nonempty")
            .remove(0);
        let parent = &tree[current];
        let mut history = conversation.clone();
        history.push(Message::user(msg.rendered.clone()));
        let limit = cfg.syntax_retry_in_refinement.min(cfg.budget - calls);
        let outcome = syntax_repair_loop(backend, &mut history, parse_full_domain, limit);
        let id = tree.len();
        let (mut child, failed) = match outcome {
            Ok(r) => {
                calls += r.calls;
                let h = score_h(&r.value, cases);
                (node(id, Some(parent), r.value, history, h, cfg.weight), None)
            }
            Err(e) => {
                calls += e.calls();
                let mut c = node(id, Some(parent), parent.domain.clone(), history, parent.h, cfg.weight);
                c.status = NodeStatus::Discarded;
                (c, matches!(e, RepairError::Backend { .. }).then(|| e.to_string()))
            }
        };
        child.feedback_used = Some(msg);
        tree[current].status = NodeStatus::Expanded;
        conversation = child.history.clone();
        if child.status != NodeStatus::Discarded {
            current = id;
        }
        tree.push(child);
        if let Some(e) = failed {
            error = Some(e);
            break Termination::Failure;
        }
    };
    if tree[current].status == NodeStatus::Open {
        tree[current].status = NodeStatus::Expanded;
    }
    RunResult {
        final_domain: tree[current].domain.clone(),
        remaining_landmark_feedback: remaining_landmarks(cfg.kind, &tree[current].domain, cases, &cfg.planner),
        tree,
        termination,
        llm_calls: calls,
        expansions: 0,
        chosen_node: current,
        error,
    }
}

/// Best-first search over feedback space ordered by (f, H, creation).
/// `cfg.budget` bounds expansions. A node is a goal when H is 0 or it has no
/// feedback left.
pub fn run_search(
    root: &ConstructionResult,
    cfg: &PipelineConfig,
    cases: &[FeedbackCase],
    backend: &dyn Backend,
) -> RunResult {
    let is_goal = |n: &SearchNode| n.h == 0 || feedback_pool(cfg.kind, &n.domain, cases, &cfg.planner).is_empty();
    let mut tree = vec![node(
        0,
        None,
        root.domain.clone(),
        root.transcript.clone(),
        score_h(&root.domain, cases),
        cfg.weight,
    )];
    let mut calls = 0;
    let mut expansions = 0;
    let mut goal = None;
    if is_goal(&tree[0]) {
        tree[0].status = NodeStatus::Goal;
        goal = Some(0);
    }
    while goal.is_none() && expansions < cfg.budget {
        let Some(best) = tree
            .iter()
            .filter(|n| n.status == NodeStatus::Open)
            .min_by(|a, b| a.f.total_cmp(&b.f).then(a.h.cmp(&b.h)).then(a.id.cmp(&b.id)))
            .map(|n| n.id)
        else {
            break;
        };
        tree[best].status = NodeStatus::Expanded;
        expansions += 1;
        let pool = feedback_pool(cfg.kind, &tree[best].domain, cases, &cfg.planner);
        let chosen = if cfg.child_cap == 1 {
            let seed = stable_seed(&[&cfg.seed.to_be_bytes(), b"search", &(best as u64).to_be_bytes()]);
            select_feedback(&pool, Selection::RandomSingle, 1, seed).unwrap_or_default()
        } else {
            select_feedback(&pool, Selection::FirstN, cfg.child_cap, 0).unwrap_or_default()
        };
        for msg in chosen {
            let parent = &tree[best];
            let mut history = parent.history.clone();
            history.push(Message::user(msg.rendered.clone()));
            let outcome = syntax_repair_loop(backend, &mut history, parse_full_domain, cfg.syntax_retry_in_refinement);
            let id = tree.len();
            let mut child = match outcome {
                Ok(r) => {
                    calls += r.calls;
                    let h = score_h(&r.value, cases);
                    node(id, Some(parent), r.value, history, h, cfg.weight)
                }
                Err(e) => {
                    calls += e.calls();
                    let mut c = node(id, Some(parent), parent.domain.clone(), history, parent.h, cfg.weight);
                    c.status = NodeStatus::Discarded;
                    c
                }
            };
            child.feedback_used = Some(msg);
            if child.status == NodeStatus::Open && is_goal(&child) {
                child.status = NodeStatus::Goal;
                goal = Some(id);
            }
            tree.push(child);
            if goal.is_some() {
                break;
            }
        }
    }
    let (termination, chosen_node) = match goal {
        Some(g) => (Termination::Goal, g),
        None => {
            let best = tree
                .iter()
                .filter(|n| n.status != NodeStatus::Discarded)
                .min_by_key(|n| (n.h, n.g, n.id))
                .map_or(0, |n| n.id);
            (Termination::Budget, best)
        }
    };
    let final_domain = tree[chosen_node].domain.clone();
    RunResult {
        remaining_landmark_feedback: remaining_landmarks(cfg.kind, &final_domain, cases, &cfg.planner),
        final_domain,
        tree,
        termination,
        llm_calls: calls,
        expansions,
        chosen_node,
        error: None,
    }
}

/// Dispatches on `cfg.kind`.
pub fn run_pipeline(
    root: &ConstructionResult,
    cfg: &PipelineConfig,
    cases: &[FeedbackCase],
    backend: &dyn Backend,
) -> RunResult {
    match cfg.kind {
        PipelineKind::N => run_no_feedback(root, cases),
        k if k.is_search() => run_search(root, cfg, cases, backend),
        _ => run_random_walk(root, cfg, cases, backend),
    }
}

/// Assistant messages in `h` beyond the first `base` messages.
pub fn assistant_messages_after(h: &History, base: usize) -> usize {
    h.messages()[base.min(h.len())..]
        .iter()
        .filter(|m| m.role == Role::Assistant)
        .count()
}
