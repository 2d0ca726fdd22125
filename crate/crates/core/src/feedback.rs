//! Feedback message pools and selection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::landmarks::{landmark_hit, DisjunctiveActionLandmark};
use crate::pddl::{rebind_problem, Domain, Plan, Problem};
use crate::planner::{enumerate_plans, PlannerConfig};
use crate::semantics::{validate_plan, Verdict};
use crate::text::{print_plan, print_problem};

pub const LANDMARK_TEMPLATE: &str = include_str!("../assets/templates/landmark_feedback.txt");
pub const PLAN_TEMPLATE: &str = include_str!("../assets/templates/plan_feedback.txt");
pub const NO_PLAN_MARKER: &str = "; no plan could be found for this problem";
/// Phrases that occur in exactly one of the two templates.
pub const PLAN_KIND_MARKER: &str = "The output of the plan validator VAL is:";
pub const LANDMARK_KIND_MARKER: &str = "since these actions are a disjunctive action landmark";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackKind {
    Plan,
    Landmark,
}

impl FeedbackKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeedbackKind::Plan => "plan",
            FeedbackKind::Landmark => "landmark",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Evidence {
    Plan {
        plan_index: usize,
        plan: Plan,
        verdict: Verdict,
    },
    Landmark {
        landmark_index: usize,
        landmark: DisjunctiveActionLandmark,
        shown_plan: Option<Plan>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackMessage {
    pub kind: FeedbackKind,
    pub problem_id: String,
    pub rendered: String,
    pub evidence: Evidence,
    pub stable_index: usize,
}

/// A feedback problem with its reference plans and landmarks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedbackCase {
    pub id: String,
    pub problem: Problem,
    pub plans: Vec<Plan>,
    pub landmarks: Vec<DisjunctiveActionLandmark>,
}

fn trimmed(s: &str) -> &str {
    s.trim_end_matches('\n')
}

pub fn render_plan_feedback(problem: &str, plan: &str, val_output: &str) -> String {
    PLAN_TEMPLATE
        .replace("{problem}", trimmed(problem))
        .replace("{plan}", trimmed(plan))
        .replace("{val_output}", trimmed(val_output))
}

pub fn render_landmark_feedback(problem: &str, landmark: &str, plan: &str) -> String {
    LANDMARK_TEMPLATE
        .replace("{problem}", trimmed(problem))
        .replace("{landmark}", trimmed(landmark))
        .replace("{plan}", trimmed(plan))
}

/// The landmark's actions joined by ", ".
pub fn landmark_field(lm: &DisjunctiveActionLandmark) -> String {
    lm.actions
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

/// The problem as it reads against `gen`, or unchanged when it does not bind.
fn problem_text(gen: &Domain, problem: &Problem) -> String {
    print_problem(&rebind_problem(problem, gen).unwrap_or_else(|_| problem.clone()))
}

fn sorted_cases(cases: &[FeedbackCase]) -> Vec<&FeedbackCase> {
    let mut v: Vec<&FeedbackCase> = cases.iter().collect();
    v.sort_by(|a, b| a.id.cmp(&b.id));
    v
}

fn reindex(mut msgs: Vec<FeedbackMessage>) -> Vec<FeedbackMessage> {
    for (i, m) in msgs.iter_mut().enumerate() {
        m.stable_index = i;
    }
    msgs
}

/// One message per reference plan that fails under `gen`, ordered by
/// (problem id, plan index).
pub fn plan_feedback_pool(gen: &Domain, cases: &[FeedbackCase]) -> Vec<FeedbackMessage> {
    let msgs = sorted_cases(cases)
        .into_iter()
        .flat_map(|c| {
            let text = problem_text(gen, &c.problem);
            c.plans.iter().enumerate().filter_map(move |(i, plan)| {
                let verdict = validate_plan(gen, &c.problem, plan);
                if verdict.is_valid() {
                    return None;
                }
                Some(FeedbackMessage {
                    kind: FeedbackKind::Plan,
                    problem_id: c.id.clone(),
                    rendered: render_plan_feedback(&text, &print_plan(plan), &verdict.rendered),
                    evidence: Evidence::Plan {
                        plan_index: i,
                        plan: plan.clone(),
                        verdict,
                    },
                    stable_index: 0,
                })
            })
        })
        .collect();
    reindex(msgs)
}

/// One message per reference landmark missed by every plan `gen` yields,
/// ordered by (problem id, landmark index). The shortest plan is shown.
pub fn landmark_feedback_pool(gen: &Domain, cases: &[FeedbackCase], cfg: &PlannerConfig) -> Vec<FeedbackMessage> {
    let per_case: Vec<Vec<FeedbackMessage>> = sorted_cases(cases)
        .into_par_iter()
        .map(|c| {
            let own = match rebind_problem(&c.problem, gen) {
                Ok(p) => enumerate_plans(gen, &p, cfg).plans,
                Err(_) => Vec::new(),
            };
            let shown = own.first().cloned();
            let plan_text = shown.as_ref().map_or_else(|| NO_PLAN_MARKER.to_string(), print_plan);
            let text = problem_text(gen, &c.problem);
            c.landmarks
                .iter()
                .enumerate()
                .filter(|(_, lm)| !landmark_hit(lm, &own))
                .map(|(i, lm)| FeedbackMessage {
                    kind: FeedbackKind::Landmark,
                    problem_id: c.id.clone(),
                    rendered: render_landmark_feedback(&text, &landmark_field(lm), &plan_text),
                    evidence: Evidence::Landmark {
                        landmark_index: i,
                        landmark: lm.clone(),
                        shown_plan: shown.clone(),
                    },
                    stable_index: 0,
                })
                .collect()
        })
        .collect();
    reindex(per_case.into_iter().flatten().collect())
}

/// Plan messages first, then landmark messages, re-indexed.
pub fn combined_pool(plan_pool: Vec<FeedbackMessage>, landmark_pool: Vec<FeedbackMessage>) -> Vec<FeedbackMessage> {
    reindex(plan_pool.into_iter().chain(landmark_pool).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    RandomSingle,
    FirstN,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FeedbackError {
    #[error("no feedback available")]
    Empty,
}

/// `RandomSingle` draws one message uniformly with a generator seeded by
/// `seed`; `FirstN` takes the `n` lowest stable indices.
pub fn select_feedback(
    pool: &[FeedbackMessage],
    strategy: Selection,
    n: usize,
    seed: u64,
) -> Result<Vec<FeedbackMessage>, FeedbackError> {
    match strategy {
        Selection::RandomSingle => {
            if pool.is_empty() {
                return Err(FeedbackError::Empty);
            }
            let i = ChaCha8Rng::seed_from_u64(seed).gen_range(0..pool.len());
            Ok(vec![pool[i].clone()])
        }
        Selection::FirstN => {
            let mut v = pool.to_vec();
            v.sort_by_key(|m| m.stable_index);
            v.truncate(n);
            Ok(v)
        }
    }
}
