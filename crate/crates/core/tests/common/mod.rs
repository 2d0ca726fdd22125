//! Test-only oracles. Nothing here calls the grounding, validation or search
//! code under test; only the parsed data model is shared.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::path::{Path, PathBuf};

use forge::pddl::{Atom, Domain, Plan, PlanStep, Problem};
use forge::text::{parse_domain, parse_problem};

pub fn dataset() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../dataset")
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn load_domain(name: &str) -> Domain {
    parse_domain(&std::fs::read_to_string(dataset().join(name).join("domain.pddl")).unwrap()).unwrap()
}

/// Pool problems of a dataset domain in file-name order.
pub fn load_pool(name: &str) -> Vec<(String, Problem)> {
    let dir = dataset().join(name).join("pool");
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "pddl"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let id = p.file_stem().unwrap().to_string_lossy().into_owned();
            (id, parse_problem(&std::fs::read_to_string(&p).unwrap()).unwrap())
        })
        .collect()
}

/// Ground atom as a flat string key, e.g. `on a b`.
pub type Fact = String;

pub fn fact(a: &Atom) -> Fact {
    std::iter::once(a.predicate.as_str())
        .chain(a.args.iter().map(String::as_str))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn atom(f: &str) -> Atom {
    let mut parts = f.split(' ');
    let p = parts.next().unwrap();
    Atom::new(p, parts)
}

#[derive(Debug, Clone)]
pub struct NaiveAction {
    pub step: PlanStep,
    pub pre: Vec<Fact>,
    pub add: Vec<Fact>,
    pub del: Vec<Fact>,
}

fn is_subtype(domain: &Domain, mut t: String, target: &str) -> bool {
    for _ in 0..64 {
        if t == target || target == "object" {
            return true;
        }
        match domain.types.parent_of(&t) {
            Some(p) if p != t => t = p.to_string(),
            _ => return false,
        }
    }
    false
}

fn substitute(a: &Atom, binding: &[(String, String)]) -> Fact {
    let args: Vec<String> = a
        .args
        .iter()
        .map(|x| {
            binding
                .iter()
                .find(|(v, _)| v == x)
                .map_or_else(|| x.clone(), |(_, o)| o.clone())
        })
        .collect();
    fact(&Atom::new(a.predicate.clone(), args))
}

/// Every typed argument tuple of every schema, repeated arguments allowed.
pub fn naive_ground(domain: &Domain, problem: &Problem) -> Vec<NaiveAction> {
    let mut out = Vec::new();
    for schema in &domain.actions {
        let mut tuples: Vec<Vec<String>> = vec![vec![]];
        for param in &schema.params {
            let objs: Vec<&String> = problem
                .objects
                .iter()
                .filter(|(_, t)| is_subtype(domain, (*t).clone(), &param.ty))
                .map(|(o, _)| o)
                .collect();
            tuples = tuples
                .into_iter()
                .flat_map(|t| {
                    objs.iter().map(move |o| {
                        let mut t = t.clone();
                        t.push((*o).clone());
                        t
                    })
                })
                .collect();
        }
        for args in tuples {
            let binding: Vec<(String, String)> = schema
                .params
                .iter()
                .map(|p| p.name.clone())
                .zip(args.iter().cloned())
                .collect();
            out.push(NaiveAction {
                step: PlanStep::new(schema.name.clone(), args.clone()),
                pre: schema.pre.iter().map(|a| substitute(a, &binding)).collect(),
                add: schema.add.iter().map(|a| substitute(a, &binding)).collect(),
                del: schema.del.iter().map(|a| substitute(a, &binding)).collect(),
            });
        }
    }
    out.sort_by(|a, b| a.step.cmp(&b.step));
    out
}

pub type NaiveState = BTreeSet<Fact>;

pub fn init_state(problem: &Problem) -> NaiveState {
    problem.init.iter().map(fact).collect()
}

pub fn goal_facts(problem: &Problem) -> Vec<Fact> {
    problem.goal.iter().map(fact).collect()
}

pub fn applicable(s: &NaiveState, a: &NaiveAction) -> bool {
    a.pre.iter().all(|p| s.contains(p))
}

pub fn step(s: &NaiveState, a: &NaiveAction) -> NaiveState {
    let mut n = s.clone();
    for d in &a.del {
        n.remove(d);
    }
    for x in &a.add {
        n.insert(x.clone());
    }
    n
}

pub fn is_goal(s: &NaiveState, goal: &[Fact]) -> bool {
    goal.iter().all(|g| s.contains(g))
}

/// All executable sequences of length at most `horizon` that end in a goal
/// state, ordered by (length, steps). `None` when more than `cap`
/// executable sequences exist.
pub fn brute_force_plans(domain: &Domain, problem: &Problem, horizon: usize, cap: usize) -> Option<Vec<Plan>> {
    let actions = naive_ground(domain, problem);
    let goal = goal_facts(problem);
    let mut found: Vec<Vec<PlanStep>> = Vec::new();
    let mut visited = 0usize;
    let mut stack: Vec<(NaiveState, Vec<PlanStep>)> = vec![(init_state(problem), vec![])];
    while let Some((s, seq)) = stack.pop() {
        visited += 1;
        if visited > cap {
            return None;
        }
        if is_goal(&s, &goal) {
            found.push(seq.clone());
        }
        if seq.len() == horizon {
            continue;
        }
        for a in &actions {
            if applicable(&s, a) {
                let mut next = seq.clone();
                next.push(a.step.clone());
                stack.push((step(&s, a), next));
            }
        }
    }
    found.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    Some(found.into_iter().map(Plan::new).collect())
}

/// Shortest plan length by breadth-first search over the full state space.
pub fn shortest_plan_length(domain: &Domain, problem: &Problem, excluded: &HashSet<PlanStep>) -> Option<usize> {
    let actions: Vec<NaiveAction> = naive_ground(domain, problem)
        .into_iter()
        .filter(|a| !excluded.contains(&a.step))
        .collect();
    let goal = goal_facts(problem);
    let start = init_state(problem);
    let mut seen: HashSet<NaiveState> = HashSet::from([start.clone()]);
    let mut queue = VecDeque::from([(start, 0usize)]);
    while let Some((s, d)) = queue.pop_front() {
        if is_goal(&s, &goal) {
            return Some(d);
        }
        for a in &actions {
            if applicable(&s, a) {
                let n = step(&s, a);
                if seen.insert(n.clone()) {
                    queue.push_back((n, d + 1));
                }
            }
        }
    }
    None
}

/// First `k` plans of length at most `horizon` in (length, steps) order,
/// found by lexicographic search pruned with an exact-length reachability
/// table over the explicit state graph. `None` past `state_cap` states.
pub fn top_k_plans(
    domain: &Domain,
    problem: &Problem,
    horizon: usize,
    k: usize,
    state_cap: usize,
) -> Option<Vec<Plan>> {
    let actions = naive_ground(domain, problem);
    let goal = goal_facts(problem);
    let mut index: std::collections::HashMap<NaiveState, usize> = std::collections::HashMap::new();
    let mut states = vec![init_state(problem)];
    index.insert(states[0].clone(), 0);
    let mut edges: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut i = 0;
    while i < states.len() {
        let mut out = Vec::new();
        for (ai, a) in actions.iter().enumerate() {
            if applicable(&states[i], a) {
                let n = step(&states[i], a);
                let id = match index.get(&n) {
                    Some(&id) => id,
                    None => {
                        if states.len() >= state_cap {
                            return None;
                        }
                        states.push(n.clone());
                        index.insert(n, states.len() - 1);
                        states.len() - 1
                    }
                };
                out.push((ai, id));
            }
        }
        edges.push(out);
        i += 1;
    }
    // can[r][s]: some sequence of exactly r steps leads from s to a goal state.
    let mut can: Vec<Vec<bool>> = vec![states.iter().map(|s| is_goal(s, &goal)).collect()];
    for r in 1..=horizon {
        let prev = &can[r - 1];
        let row = edges.iter().map(|es| es.iter().any(|&(_, t)| prev[t])).collect();
        can.push(row);
    }
    let mut found = Vec::new();
    for len in 0..=horizon {
        let mut seq = Vec::new();
        collect_exact(&actions, &edges, &can, 0, len, &mut seq, &mut found, k);
        if found.len() >= k {
            break;
        }
    }
    Some(found)
}

#[allow(clippy::too_many_arguments)]
fn collect_exact(
    actions: &[NaiveAction],
    edges: &[Vec<(usize, usize)>],
    can: &[Vec<bool>],
    s: usize,
    remaining: usize,
    seq: &mut Vec<PlanStep>,
    found: &mut Vec<Plan>,
    k: usize,
) {
    if found.len() >= k || !can[remaining][s] {
        return;
    }
    if remaining == 0 {
        found.push(Plan::new(seq.clone()));
        return;
    }
    for &(ai, t) in &edges[s] {
        seq.push(actions[ai].step.clone());
        collect_exact(actions, edges, can, t, remaining - 1, seq, found, k);
        seq.pop();
    }
}
