//! Fact landmarks by backchaining, achiever-set action landmarks, and the
//! `.lmk` line format.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::pddl::{Atom, Diagnostic, Domain, Plan, PlanStep, Problem};
use crate::planner::{enumerate_plans, PlannerConfig};
use crate::semantics::{AtomId, Task};
use crate::text::{parse_step, read_one, Pos, SourceError};

/// States explored before achiever filtering falls back to relaxed reachability.
pub const REACHABILITY_LIMIT: usize = 200_000;

/// At least one of `actions` occurs in every valid plan.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DisjunctiveActionLandmark {
    pub actions: BTreeSet<PlanStep>,
    pub origin: Option<Atom>,
}

impl fmt::Display for DisjunctiveActionLandmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let acts: Vec<String> = self.actions.iter().map(ToString::to_string).collect();
        write!(f, "{}", acts.join(" | "))?;
        if let Some(o) = &self.origin {
            write!(f, " ; origin: {o}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LandmarkError {
    #[error("no landmarks for unsolvable problem")]
    Unsolvable,
    #[error("problem does not bind to the domain: {}", join_diags(.0))]
    Rebind(Vec<Diagnostic>),
    #[error("landmark fact {0} has no achiever")]
    NoAchiever(Atom),
}

fn join_diags(d: &[Diagnostic]) -> String {
    d.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

struct Analysis {
    task: Task,
    /// Actions applicable in some reachable state (or relaxed-reachable when
    /// the state space exceeds [`REACHABILITY_LIMIT`]).
    usable: Vec<bool>,
}

fn analyse(domain: &Domain, problem: &Problem) -> Result<Analysis, LandmarkError> {
    let task = Task::compile(domain, problem, false).map_err(LandmarkError::Rebind)?;
    let mut usable = vec![false; task.actions.len()];
    match task.reachable_states(REACHABILITY_LIMIT) {
        Ok(states) => {
            for s in &states {
                for (i, u) in usable.iter_mut().enumerate() {
                    *u = *u || task.applicable(s, i);
                }
            }
        }
        Err(_) => {
            for i in task.relaxed_reachable_actions() {
                usable[i] = true;
            }
        }
    }
    Ok(Analysis { task, usable })
}

fn achievers(a: &Analysis, fact: AtomId) -> Vec<usize> {
    (0..a.task.actions.len())
        .filter(|&i| a.usable[i] && a.task.actions[i].add.contains(&fact))
        .collect()
}

fn ensure_solvable(domain: &Domain, problem: &Problem) -> Result<(), LandmarkError> {
    let set = enumerate_plans(domain, problem, &PlannerConfig::with_k(1));
    if !set.diagnostics.is_empty() {
        return Err(LandmarkError::Rebind(set.diagnostics));
    }
    if set.plans.is_empty() {
        return Err(LandmarkError::Unsolvable);
    }
    Ok(())
}

/// Goal atoms plus, for every landmark not true initially, the atoms shared
/// by the preconditions of all its achievers; iterated to a fixpoint.
pub fn extract_fact_landmarks(domain: &Domain, problem: &Problem) -> Result<BTreeSet<Atom>, LandmarkError> {
    ensure_solvable(domain, problem)?;
    let a = analyse(domain, problem)?;
    let mut found: BTreeSet<AtomId> = a.task.goal.iter().copied().collect();
    let mut work: Vec<AtomId> = found.iter().copied().collect();
    while let Some(f) = work.pop() {
        if a.task.init.contains(f) {
            continue;
        }
        let ach = achievers(&a, f);
        let Some((&first, rest)) = ach.split_first() else {
            continue;
        };
        let mut shared: BTreeSet<AtomId> = a.task.actions[first].pre.iter().copied().collect();
        for &i in rest {
            let pre: BTreeSet<AtomId> = a.task.actions[i].pre.iter().copied().collect();
            shared = shared.intersection(&pre).copied().collect();
        }
        for p in shared {
            if found.insert(p) {
                work.push(p);
            }
        }
    }
    Ok(found.into_iter().map(|i| a.task.atoms[i as usize].clone()).collect())
}

/// One landmark per fact outside the initial state: the reachable ground
/// actions adding it. Sorted by origin fact.
pub fn achiever_landmarks(
    domain: &Domain,
    problem: &Problem,
    facts: &BTreeSet<Atom>,
) -> Result<Vec<DisjunctiveActionLandmark>, LandmarkError> {
    let a = analyse(domain, problem)?;
    let mut out = Vec::new();
    for f in facts {
        let id = a.task.index.get(f).copied();
        if id.is_some_and(|i| a.task.init.contains(i)) {
            continue;
        }
        let actions: BTreeSet<PlanStep> = id
            .map(|i| achievers(&a, i))
            .unwrap_or_default()
            .into_iter()
            .map(|i| a.task.actions[i].ground.step())
            .collect();
        if actions.is_empty() {
            return Err(LandmarkError::NoAchiever(f.clone()));
        }
        out.push(DisjunctiveActionLandmark {
            actions,
            origin: Some(f.clone()),
        });
    }
    out.sort_by(|x, y| x.origin.cmp(&y.origin));
    Ok(out)
}

/// Fact extraction followed by achiever landmarks.
pub fn action_landmarks(domain: &Domain, problem: &Problem) -> Result<Vec<DisjunctiveActionLandmark>, LandmarkError> {
    let facts = extract_fact_landmarks(domain, problem)?;
    achiever_landmarks(domain, problem, &facts)
}

pub fn landmark_hit(lm: &DisjunctiveActionLandmark, plans: &[Plan]) -> bool {
    plans.iter().any(|p| p.steps.iter().any(|s| lm.actions.contains(s)))
}

pub fn write_landmarks(lms: &[DisjunctiveActionLandmark]) -> String {
    lms.iter().map(|l| format!("{l}\n")).collect()
}

fn step_at(text: &str, line: usize, offset: usize) -> Result<PlanStep, SourceError> {
    let at = |e: SourceError| SourceError {
        line,
        column: e.column + offset,
        ..e
    };
    let form = read_one(text).map_err(at)?;
    parse_step(&form).map_err(at)
}

pub fn read_landmarks(text: &str) -> Result<Vec<DisjunctiveActionLandmark>, SourceError> {
    const ORIGIN: &str = " ; origin: ";
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let (acts, origin) = match raw.find(ORIGIN) {
            Some(i) => (&raw[..i], Some((&raw[i + ORIGIN.len()..], i + ORIGIN.len()))),
            None => (raw, None),
        };
        let mut actions = BTreeSet::new();
        let mut offset = 0;
        for part in acts.split('|') {
            let lead = part.len() - part.trim_start().len();
            if part.trim().is_empty() {
                let pos = Pos {
                    line,
                    column: offset + 1,
                };
                return Err(SourceError::new(pos, "empty action in landmark", raw));
            }
            actions.insert(step_at(part.trim(), line, offset + lead)?);
            offset += part.len() + 1;
        }
        let origin = match origin {
            Some((o, col)) => {
                let s = step_at(o.trim(), line, col)?;
                Some(Atom::new(s.name, s.args))
            }
            None => None,
        };
        out.push(DisjunctiveActionLandmark { actions, origin });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{parse_domain, parse_plan, parse_problem};

    const BLOCKS: &str = include_str!("../../../dataset/blocks/domain.pddl");

    fn problem(init: &str, goal: &str) -> Problem {
        parse_problem(&format!(
            "(define (problem t) (:domain blocks) (:objects a b - block) (:init {init}) (:goal {goal}))"
        ))
        .unwrap()
    }

    const TABLE: &str = "(ontable a) (ontable b) (clear a) (clear b) (handempty)";

    fn steps(s: &[(&str, &[&str])]) -> BTreeSet<PlanStep> {
        s.iter().map(|(n, a)| PlanStep::new(*n, a.iter().copied())).collect()
    }

    #[test]
    fn two_block_fact_landmarks() {
        let d = parse_domain(BLOCKS).unwrap();
        let f = extract_fact_landmarks(&d, &problem(TABLE, "(on a b)")).unwrap();
        assert!(f.contains(&Atom::new("on", ["a", "b"])));
        assert!(f.contains(&Atom::new("holding", ["a"])));
    }

    #[test]
    fn goal_in_init_gives_goal_only() {
        let d = parse_domain(BLOCKS).unwrap();
        let p = problem(TABLE, "(clear a)");
        let f = extract_fact_landmarks(&d, &p).unwrap();
        assert_eq!(f, p.goal);
        assert!(achiever_landmarks(&d, &p, &f).unwrap().is_empty());
    }

    #[test]
    fn only_non_initial_goal_yields_action_landmark() {
        let d = parse_domain(BLOCKS).unwrap();
        let p = problem(TABLE, "(and (clear b) (on a b))");
        let lms = achiever_landmarks(&d, &p, &p.goal).unwrap();
        assert_eq!(lms.len(), 1);
        assert_eq!(lms[0].origin, Some(Atom::new("on", ["a", "b"])));
    }

    #[test]
    fn achiever_sets() {
        let d = parse_domain(BLOCKS).unwrap();
        let p = problem(TABLE, "(on a b)");
        let facts = [
            Atom::new("on", ["a", "b"]),
            Atom::new("holding", ["a"]),
            Atom::new("handempty", Vec::<&str>::new()),
        ];
        let lms = achiever_landmarks(&d, &p, &facts.into()).unwrap();
        assert_eq!(lms.len(), 2);
        assert_eq!(lms[0].actions, steps(&[("pick-up", &["a"]), ("unstack", &["a", "b"])]));
        assert_eq!(lms[1].actions, steps(&[("stack", &["a", "b"])]));
    }

    #[test]
    fn unsolvable_is_an_error() {
        let d = parse_domain(BLOCKS).unwrap();
        let e = extract_fact_landmarks(&d, &problem(TABLE, "(on a a)")).unwrap_err();
        assert_eq!(e.to_string(), "no landmarks for unsolvable problem");
    }

    #[test]
    fn hits() {
        let lm = DisjunctiveActionLandmark {
            actions: steps(&[("stack", &["a", "b"]), ("stack", &["b", "a"])]),
            origin: None,
        };
        assert!(landmark_hit(&lm, &[parse_plan("(pick-up b)\n(stack b a)").unwrap()]));
        assert!(!landmark_hit(&lm, &[]));
        assert!(!landmark_hit(&lm, &[parse_plan("(pick-up a)").unwrap()]));
    }

    #[test]
    fn file_round_trip() {
        let text = "(stack a b)\n(pick-up a) | (unstack a b) ; origin: (holding a)\n";
        let lms = read_landmarks(text).unwrap();
        assert_eq!(lms[0].actions.len(), 1);
        assert_eq!(lms[0].origin, None);
        assert_eq!(lms[1].actions.len(), 2);
        assert_eq!(lms[1].origin, Some(Atom::new("holding", ["a"])));
        assert_eq!(write_landmarks(&lms), text);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let e = read_landmarks("(stack a b)\n(stack a b) | \n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = read_landmarks("(stack a b)\n\nstack\n").unwrap_err();
        assert_eq!(e.line, 3);
    }
}
