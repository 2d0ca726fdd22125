//! Canonical PDDL printing.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::pddl::{ActionSchema, Atom, Domain, Plan, Problem, TypedParam, OBJECT};

fn params(ps: &[TypedParam]) -> String {
    ps.iter()
        .map(|p| format!("{} - {}", p.name, p.ty))
        .collect::<Vec<_>>()
        .join(" ")
}

fn conjunction<'a>(atoms: impl Iterator<Item = &'a Atom>) -> String {
    let parts: Vec<String> = atoms.map(ToString::to_string).collect();
    format!("(and{}{})", if parts.is_empty() { "" } else { " " }, parts.join(" "))
}

/// Sections in fixed order (requirements, types, predicates, actions),
/// atoms sorted, two-space indentation.
pub fn print_domain(domain: &Domain) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "(define (domain {})", domain.name);
    if !domain.requirements.is_empty() {
        let reqs: Vec<_> = domain.requirements.iter().map(|r| r.keyword()).collect();
        let _ = writeln!(s, "  (:requirements {})", reqs.join(" "));
    }
    if !domain.types.is_empty() {
        // subtypes first so trailing bare names stay children of `object`
        let mut parts: Vec<String> = domain
            .types
            .entries()
            .filter(|(_, p)| *p != OBJECT)
            .map(|(t, p)| format!("{t} - {p}"))
            .collect();
        parts.extend(
            domain
                .types
                .entries()
                .filter(|(_, p)| *p == OBJECT)
                .map(|(t, _)| t.to_string()),
        );
        let _ = writeln!(s, "  (:types {})", parts.join(" "));
    }
    if domain.predicates.is_empty() {
        let _ = writeln!(s, "  (:predicates)");
    } else {
        let _ = writeln!(s, "  (:predicates");
        for p in domain.predicates.values() {
            let _ = writeln!(s, "    {p}");
        }
        let _ = writeln!(s, "  )");
    }
    for a in &domain.actions {
        write_action(&mut s, a, "  ");
    }
    s.push_str(")\n");
    s
}

fn write_action(s: &mut String, a: &ActionSchema, indent: &str) {
    let _ = writeln!(s, "{indent}(:action {}", a.name);
    let _ = writeln!(s, "{indent}  :parameters ({})", params(&a.params));
    let _ = writeln!(s, "{indent}  :precondition {}", conjunction(a.pre.iter()));
    let effects: Vec<String> = a
        .add
        .iter()
        .map(ToString::to_string)
        .chain(a.del.iter().map(|d| format!("(not {d})")))
        .collect();
    let _ = writeln!(
        s,
        "{indent}  :effect (and{}{})",
        if effects.is_empty() { "" } else { " " },
        effects.join(" ")
    );
    let _ = writeln!(s, "{indent})");
}

/// A lone `(:action ...)` form, as produced during per-action construction.
pub fn print_action(action: &ActionSchema) -> String {
    let mut s = String::new();
    write_action(&mut s, action, "");
    s
}

pub fn print_problem(problem: &Problem) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "(define (problem {})", problem.name);
    let _ = writeln!(s, "  (:domain {})", problem.domain_name);
    let mut by_type: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (o, t) in &problem.objects {
        by_type.entry(t.as_str()).or_default().push(o.as_str());
    }
    let groups: Vec<String> = by_type
        .iter()
        .map(|(t, os)| format!("{} - {t}", os.join(" ")))
        .collect();
    let _ = writeln!(s, "  (:objects {})", groups.join(" "));
    if problem.init.is_empty() {
        let _ = writeln!(s, "  (:init)");
    } else {
        let _ = writeln!(s, "  (:init");
        for a in &problem.init {
            let _ = writeln!(s, "    {a}");
        }
        let _ = writeln!(s, "  )");
    }
    let _ = writeln!(s, "  (:goal {})", conjunction(problem.goal.iter()));
    s.push_str(")\n");
    s
}

/// One step per line; the empty plan prints as "".
pub fn print_plan(plan: &Plan) -> String {
    plan.steps.iter().map(|st| format!("{st}\n")).collect()
}
