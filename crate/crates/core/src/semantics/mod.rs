//! Grounding, applicability, state transition and plan validation.

mod compiled;
mod verdict;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::pddl::{rebind_problem, ActionSchema, Atom, Diagnostic, Domain, PlanStep, Problem};

pub use compiled::{AtomId, BitState, CompiledAction, StateLimit, Task};
pub use verdict::{validate_plan, Verdict, VerdictKind};

/// A set of ground atoms.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct State {
    pub atoms: BTreeSet<Atom>,
}

impl State {
    pub fn new(atoms: impl IntoIterator<Item = Atom>) -> Self {
        State {
            atoms: atoms.into_iter().collect(),
        }
    }

    pub fn contains(&self, atom: &Atom) -> bool {
        self.atoms.contains(atom)
    }
}

/// A schema with every variable replaced by an object.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroundAction {
    pub name: String,
    pub args: Vec<String>,
    pub pre: BTreeSet<Atom>,
    pub add: BTreeSet<Atom>,
    pub del: BTreeSet<Atom>,
}

impl GroundAction {
    pub fn step(&self) -> PlanStep {
        PlanStep {
            name: self.name.clone(),
            args: self.args.clone(),
        }
    }
}

/// The atoms an inapplicable action was missing.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("action ({name}{}) is not applicable", args.iter().map(|a| format!(" {a}")).collect::<String>())]
pub struct NotApplicable {
    pub name: String,
    pub args: Vec<String>,
    pub missing: BTreeSet<Atom>,
}

fn substitute(atoms: &BTreeSet<Atom>, binding: &BTreeMap<&str, &str>) -> BTreeSet<Atom> {
    atoms
        .iter()
        .map(|a| Atom {
            predicate: a.predicate.clone(),
            args: a
                .args
                .iter()
                .map(|v| binding.get(v.as_str()).map_or_else(|| v.clone(), |o| o.to_string()))
                .collect(),
        })
        .collect()
}

/// Instantiates `schema` with `args` (positionally). No type checking.
/// Atoms both added and deleted stay true, so they are dropped from `del`.
pub fn ground_schema(schema: &ActionSchema, args: &[String]) -> GroundAction {
    let binding: BTreeMap<&str, &str> = schema
        .params
        .iter()
        .map(|p| p.name.as_str())
        .zip(args.iter().map(String::as_str))
        .collect();
    let add = substitute(&schema.add, &binding);
    let del = substitute(&schema.del, &binding)
        .into_iter()
        .filter(|d| !add.contains(d))
        .collect();
    GroundAction {
        name: schema.name.clone(),
        args: args.to_vec(),
        pre: substitute(&schema.pre, &binding),
        add,
        del,
    }
}

/// Objects of `problem` whose type is ≤ `ty` in `domain`, in name order.
pub(crate) fn objects_of_type<'a>(domain: &Domain, problem: &'a Problem, ty: &str) -> Vec<&'a str> {
    problem
        .objects
        .iter()
        .filter(|(_, t)| domain.types.type_leq(t, ty).unwrap_or(false))
        .map(|(o, _)| o.as_str())
        .collect()
}

pub(crate) fn cartesian<'a>(options: &[Vec<&'a str>]) -> Vec<Vec<&'a str>> {
    options.iter().fold(vec![Vec::new()], |acc, opts| {
        acc.into_iter()
            .flat_map(|prefix| {
                opts.iter().map(move |o| {
                    let mut next = prefix.clone();
                    next.push(*o);
                    next
                })
            })
            .collect()
    })
}

/// Every type-respecting instantiation of every schema, sorted by name then
/// arguments. With `distinct_args`, substitutions repeating an object are
/// skipped.
pub fn ground_actions(
    domain: &Domain,
    problem: &Problem,
    distinct_args: bool,
) -> Result<Vec<GroundAction>, Vec<Diagnostic>> {
    let bound = rebind_problem(problem, domain)?;
    let mut out = Vec::new();
    for schema in &domain.actions {
        let candidates: Vec<Vec<&str>> = schema
            .params
            .iter()
            .map(|p| objects_of_type(domain, &bound, &p.ty))
            .collect();
        for args in cartesian(&candidates) {
            let distinct = args.iter().collect::<BTreeSet<_>>().len() == args.len();
            if !distinct_args || distinct {
                let args: Vec<String> = args.into_iter().map(str::to_string).collect();
                out.push(ground_schema(schema, &args));
            }
        }
    }
    out.sort_by(|a, b| (&a.name, &a.args).cmp(&(&b.name, &b.args)));
    Ok(out)
}

pub fn applicable(state: &State, action: &GroundAction) -> bool {
    action.pre.is_subset(&state.atoms)
}

/// `(s \ del) ∪ add`. The input state is left untouched.
pub fn apply(state: &State, action: &GroundAction) -> Result<State, NotApplicable> {
    let missing: BTreeSet<Atom> = action.pre.difference(&state.atoms).cloned().collect();
    if !missing.is_empty() {
        return Err(NotApplicable {
            name: action.name.clone(),
            args: action.args.clone(),
            missing,
        });
    }
    let mut atoms: BTreeSet<Atom> = state.atoms.difference(&action.del).cloned().collect();
    atoms.extend(action.add.iter().cloned());
    Ok(State { atoms })
}

pub fn holds(state: &State, goal: &BTreeSet<Atom>) -> bool {
    goal.is_subset(&state.atoms)
}
