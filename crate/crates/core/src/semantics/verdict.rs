use std::collections::BTreeSet;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{apply, ground_schema, holds, State};
use crate::pddl::{rebind_problem, Atom, Domain, Plan, PlanStep, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerdictKind {
    Valid,
    PreconditionFailure,
    GoalFailure,
    UnknownAction,
    BadArguments,
}

/// Outcome of simulating a plan. `rendered` is VAL-style text that gets
/// spliced into plan feedback prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub step: Option<usize>,
    pub missing: BTreeSet<Atom>,
    pub rendered: String,
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        self.kind == VerdictKind::Valid
    }

    fn valid() -> Self {
        Verdict {
            kind: VerdictKind::Valid,
            step: None,
            missing: BTreeSet::new(),
            rendered: "Plan executed successfully - checking goal\nPlan valid\n".to_string(),
        }
    }

    fn precondition(step: usize, action: &PlanStep, missing: BTreeSet<Atom>) -> Self {
        let atoms = join(&missing);
        let mut r = String::new();
        let _ = writeln!(r, "Plan failed to execute");
        let _ = writeln!(
            r,
            "Plan failed because of unsatisfied precondition in action {action} at step {step}"
        );
        let _ = writeln!(r, "Unsatisfied precondition: {atoms}");
        let _ = writeln!(r);
        let _ = writeln!(r, "Plan Repair Advice:");
        let _ = writeln!(r, "{action} has an unsatisfied precondition at step {step}");
        for m in &missing {
            let _ = writeln!(r, "(Set {m} to true)");
        }
        Verdict {
            kind: VerdictKind::PreconditionFailure,
            step: Some(step),
            missing,
            rendered: r,
        }
    }

    fn goal(missing: BTreeSet<Atom>) -> Self {
        let atoms = join(&missing);
        let mut r = String::new();
        let _ = writeln!(r, "Plan executed successfully - checking goal");
        let _ = writeln!(r, "Goal not satisfied");
        let _ = writeln!(r, "Plan failed because the final state does not satisfy the goal");
        let _ = writeln!(r, "Unsatisfied goal: {atoms}");
        let _ = writeln!(r);
        let _ = writeln!(r, "Plan Repair Advice:");
        for m in &missing {
            let _ = writeln!(r, "(Set {m} to true)");
        }
        Verdict {
            kind: VerdictKind::GoalFailure,
            step: None,
            missing,
            rendered: r,
        }
    }

    fn rejected(kind: VerdictKind, step: usize, reason: String) -> Self {
        Verdict {
            kind,
            step: Some(step),
            missing: BTreeSet::new(),
            rendered: format!("Plan failed to execute\nPlan failed because {reason}\n"),
        }
    }
}

fn join(atoms: &BTreeSet<Atom>) -> String {
    atoms.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

/// Simulates `plan` from the initial state and reports the first defect.
/// A problem that does not bind to `domain` yields `BadArguments` at step 0.
pub fn validate_plan(domain: &Domain, problem: &Problem, plan: &Plan) -> Verdict {
    let bound = match rebind_problem(problem, domain) {
        Ok(p) => p,
        Err(diags) => {
            let why = diags.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
            return Verdict::rejected(
                VerdictKind::BadArguments,
                0,
                format!("the problem could not be bound to the domain: {why}"),
            );
        }
    };

    let mut state = State::new(bound.init.iter().cloned());
    for (i, step) in plan.steps.iter().enumerate() {
        let Some(schema) = domain.action(&step.name) else {
            return Verdict::rejected(
                VerdictKind::UnknownAction,
                i,
                format!("action {step} at step {i} is not defined in the domain"),
            );
        };
        if schema.params.len() != step.args.len() {
            return Verdict::rejected(
                VerdictKind::BadArguments,
                i,
                format!(
                    "action {step} at step {i} has bad arguments: {} expects {} argument(s), got {}",
                    schema.name,
                    schema.params.len(),
                    step.args.len()
                ),
            );
        }
        for (arg, param) in step.args.iter().zip(&schema.params) {
            let Some(obj_ty) = bound.objects.get(arg) else {
                return Verdict::rejected(
                    VerdictKind::BadArguments,
                    i,
                    format!("action {step} at step {i} has bad arguments: unknown object {arg}"),
                );
            };
            if !domain.types.type_leq(obj_ty, &param.ty).unwrap_or(false) {
                return Verdict::rejected(
                    VerdictKind::BadArguments,
                    i,
                    format!(
                        "action {step} at step {i} has bad arguments: {arg} is a {obj_ty}, not a {}",
                        param.ty
                    ),
                );
            }
        }
        let ground = ground_schema(schema, &step.args);
        match apply(&state, &ground) {
            Ok(next) => state = next,
            Err(e) => return Verdict::precondition(i, step, e.missing),
        }
    }

    if holds(&state, &bound.goal) {
        Verdict::valid()
    } else {
        Verdict::goal(bound.goal.difference(&state.atoms).cloned().collect())
    }
}
