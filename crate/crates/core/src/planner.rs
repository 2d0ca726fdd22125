//! Top-k plan enumeration in (length, lexicographic) order.
//!
//! The reachable state graph is built breadth-first up to the horizon. A
//! table `exact[r][s]` records whether state `s` reaches a goal state in
//! exactly `r` steps. For each length `L`, a depth-first walk over actions in
//! (name, args) order then visits only prefixes that can still be completed,
//! so plans come out sorted and every visited node lies on some plan.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::pddl::{Diagnostic, Domain, Plan, Problem};
use crate::semantics::{BitState, Task};

pub const EVAL_K: usize = 100;
pub const FEEDBACK_K: usize = 2;
pub const DEFAULT_NODE_LIMIT: usize = 1_000_000;
/// Stand-in shortest length when no plan is known, for the automatic horizon.
pub const FALLBACK_SHORTEST: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub k: usize,
    /// `None` picks twice the shortest plan length.
    pub max_plan_length: Option<usize>,
    pub node_limit: usize,
    pub distinct_args: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            k: EVAL_K,
            max_plan_length: None,
            node_limit: DEFAULT_NODE_LIMIT,
            distinct_args: false,
        }
    }
}

impl PlannerConfig {
    pub fn with_k(k: usize) -> Self {
        PlannerConfig { k, ..Self::default() }
    }
}

/// Plans found plus the status flags of the search.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanSet {
    pub plans: Vec<Plan>,
    pub horizon: usize,
    /// The node limit was hit; `plans` may be incomplete.
    pub truncated: bool,
    pub diagnostics: Vec<Diagnostic>,
}

impl PlanSet {
    pub fn none_found(&self) -> bool {
        self.plans.is_empty()
    }

    pub fn flag(&self) -> Option<&'static str> {
        if self.truncated {
            Some("truncated")
        } else if self.plans.is_empty() {
            Some("none found")
        } else {
            None
        }
    }
}

struct Graph {
    states: Vec<BitState>,
    goal: Vec<bool>,
    /// Successors sorted by action index; empty for unexpanded states.
    edges: Vec<Vec<(usize, usize)>>,
    horizon: usize,
    truncated: bool,
}

fn explore(task: &Task, fixed_horizon: Option<usize>, node_limit: usize) -> Graph {
    let mut ids: HashMap<BitState, usize> = HashMap::new();
    let mut g = Graph {
        states: vec![task.init.clone()],
        goal: vec![task.is_goal(&task.init)],
        edges: vec![Vec::new()],
        horizon: fixed_horizon.unwrap_or(usize::MAX),
        truncated: false,
    };
    ids.insert(task.init.clone(), 0);
    if fixed_horizon.is_none() && g.goal[0] {
        g.horizon = 1;
    }
    let mut layer = vec![0usize];
    let mut depth = 0;
    while !layer.is_empty() && depth < g.horizon {
        let mut next_layer = Vec::new();
        for &s in &layer {
            let succ: Vec<(usize, BitState)> = task.successors(&g.states[s]).collect();
            let mut out = Vec::with_capacity(succ.len());
            for (a, t) in succ {
                let id = match ids.get(&t) {
                    Some(&id) => id,
                    None => {
                        if g.states.len() >= node_limit {
                            g.truncated = true;
                            break;
                        }
                        let id = g.states.len();
                        g.goal.push(task.is_goal(&t));
                        if fixed_horizon.is_none() && g.horizon == usize::MAX && g.goal[id] {
                            g.horizon = 2 * (depth + 1);
                        }
                        ids.insert(t.clone(), id);
                        g.states.push(t);
                        g.edges.push(Vec::new());
                        next_layer.push(id);
                        id
                    }
                };
                out.push((a, id));
            }
            g.edges[s] = out;
            if g.truncated {
                break;
            }
        }
        if g.truncated {
            break;
        }
        layer = next_layer;
        depth += 1;
    }
    if g.horizon == usize::MAX {
        g.horizon = 2 * FALLBACK_SHORTEST;
    }
    g
}

struct Walk<'a> {
    task: &'a Task,
    graph: &'a Graph,
    exact: &'a [Vec<bool>],
    k: usize,
    budget: usize,
    prefix: Vec<usize>,
    plans: Vec<Plan>,
    truncated: bool,
}

impl Walk<'_> {
    fn visit(&mut self, s: usize, remaining: usize) {
        if self.plans.len() >= self.k || self.truncated {
            return;
        }
        if self.budget == 0 {
            self.truncated = true;
            return;
        }
        self.budget -= 1;
        if remaining == 0 {
            let steps = self.prefix.iter().map(|&a| self.task.actions[a].ground.step());
            self.plans.push(Plan::new(steps.collect()));
            return;
        }
        for &(a, t) in &self.graph.edges[s] {
            if self.exact[remaining - 1][t] {
                self.prefix.push(a);
                self.visit(t, remaining - 1);
                self.prefix.pop();
                if self.plans.len() >= self.k || self.truncated {
                    return;
                }
            }
        }
    }
}

/// Up to `cfg.k` distinct valid plans, shortest first and lexicographic
/// within a length. Complete up to the horizon unless `truncated`.
pub fn enumerate_plans(domain: &Domain, problem: &Problem, cfg: &PlannerConfig) -> PlanSet {
    let task = match Task::compile(domain, problem, cfg.distinct_args) {
        Ok(t) => t,
        Err(diagnostics) => {
            return PlanSet {
                diagnostics,
                ..PlanSet::default()
            }
        }
    };
    if cfg.k == 0 {
        return PlanSet::default();
    }
    let graph = explore(&task, cfg.max_plan_length, cfg.node_limit);
    let h = graph.horizon;
    let n = graph.states.len();

    let mut exact: Vec<Vec<bool>> = Vec::with_capacity(h + 1);
    exact.push(graph.goal.clone());
    for r in 1..=h {
        let prev = &exact[r - 1];
        let row = (0..n).map(|s| graph.edges[s].iter().any(|&(_, t)| prev[t])).collect();
        exact.push(row);
    }

    let mut walk = Walk {
        task: &task,
        graph: &graph,
        exact: &exact,
        k: cfg.k,
        budget: cfg.node_limit.saturating_sub(n),
        prefix: Vec::new(),
        plans: Vec::new(),
        truncated: false,
    };
    for (len, row) in exact.iter().enumerate().take(h + 1) {
        if walk.plans.len() >= cfg.k || walk.truncated {
            break;
        }
        if row[0] {
            walk.visit(0, len);
        }
    }
    PlanSet {
        plans: walk.plans,
        horizon: h,
        truncated: walk.truncated || graph.truncated,
        diagnostics: Vec::new(),
    }
}

/// Whether some plan of length at most `horizon` exists.
pub fn solvable(domain: &Domain, problem: &Problem, horizon: usize) -> bool {
    let cfg = PlannerConfig {
        k: 1,
        max_plan_length: Some(horizon),
        ..PlannerConfig::default()
    };
    !enumerate_plans(domain, problem, &cfg).plans.is_empty()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pddl::PlanStep;
    use crate::semantics::validate_plan;
    use crate::text::{parse_domain, parse_problem};

    const BLOCKS: &str = include_str!("../../../dataset/blocks/domain.pddl");

    fn problem(init: &str, goal: &str) -> Problem {
        parse_problem(&format!(
            "(define (problem t) (:domain blocks) (:objects a b - block) (:init {init}) (:goal {goal}))"
        ))
        .unwrap()
    }

    fn two() -> Problem {
        problem("(ontable a) (ontable b) (clear a) (clear b) (handempty)", "(on a b)")
    }

    fn fixed(k: usize, h: usize) -> PlannerConfig {
        PlannerConfig {
            k,
            max_plan_length: Some(h),
            ..PlannerConfig::default()
        }
    }

    #[test]
    fn first_plan_is_pick_up_stack() {
        let d = parse_domain(BLOCKS).unwrap();
        let set = enumerate_plans(&d, &two(), &fixed(3, 4));
        assert_eq!(
            set.plans[0].steps,
            vec![PlanStep::new("pick-up", ["a"]), PlanStep::new("stack", ["a", "b"])]
        );
        for p in &set.plans {
            assert!(validate_plan(&d, &two(), p).is_valid());
        }
        assert!(!set.truncated);
    }

    #[test]
    fn goal_in_init_gives_empty_plan() {
        let d = parse_domain(BLOCKS).unwrap();
        let p = problem("(ontable a) (clear a) (handempty)", "(clear a)");
        let set = enumerate_plans(&d, &p, &PlannerConfig::with_k(3));
        assert!(set.plans[0].is_empty());
        assert_eq!(set.horizon, 1);
    }

    #[test]
    fn unreachable_goal_is_none_found() {
        let d = parse_domain(BLOCKS).unwrap();
        let p = problem("(ontable a) (ontable b) (clear a) (clear b) (handempty)", "(on a a)");
        let set = enumerate_plans(&d, &p, &PlannerConfig::default());
        assert!(set.plans.is_empty());
        assert_eq!(set.flag(), Some("none found"));
        assert_eq!(set.horizon, 2 * FALLBACK_SHORTEST);
    }

    #[test]
    fn automatic_horizon_doubles_shortest() {
        let d = parse_domain(BLOCKS).unwrap();
        let set = enumerate_plans(&d, &two(), &PlannerConfig::with_k(1000));
        assert_eq!(set.horizon, 4);
        assert!(set.plans.iter().all(|p| p.len() <= 4));
        assert!(set.plans.len() > 1);
    }

    #[test]
    fn solvable_cases() {
        let d = parse_domain(BLOCKS).unwrap();
        assert!(solvable(&d, &two(), 4));
        assert!(!solvable(&d, &two(), 1));
        assert!(!solvable(&d, &two(), 0));
    }

    #[test]
    fn node_limit_truncates() {
        let d = parse_domain(BLOCKS).unwrap();
        let cfg = PlannerConfig {
            node_limit: 3,
            ..fixed(10, 6)
        };
        let set = enumerate_plans(&d, &two(), &cfg);
        assert!(set.truncated);
        assert_eq!(set.flag(), Some("truncated"));
    }

    #[test]
    fn rebind_failure_yields_diagnostics() {
        let d = parse_domain(BLOCKS).unwrap();
        let p = problem("(ontable a) (handempty) (glued a)", "(clear a)");
        let set = enumerate_plans(&d, &p, &PlannerConfig::default());
        assert!(set.plans.is_empty());
        assert!(!set.diagnostics.is_empty());
    }
}
