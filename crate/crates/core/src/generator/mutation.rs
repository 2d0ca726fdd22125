use std::collections::BTreeSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Backend, BackendError, History, Message, Role, SYNTAX_REPAIR_MARKER};
use crate::construction::{format_action_response, ACTION_PREFIX};
use crate::feedback::{LANDMARK_KIND_MARKER, PLAN_KIND_MARKER};
use crate::pddl::{Atom, Domain, PredicateDecl, OBJECT};
use crate::seed::stable_seed;
use crate::text::{
    extract_pddl_block, fenced_blocks, parse_domain, parse_plan, parse_step, print_domain, read_all, read_one,
};

/// One edit of the defect language, applied to a reference domain.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Defect {
    RemovePrecondition { action: String, atom: Atom },
    RemoveAdd { action: String, atom: Atom },
    RemoveDel { action: String, atom: Atom },
    AddPrecondition { action: String, atom: Atom },
    RenamePredicate { action: String, from: String, to: String },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DefectError {
    #[error("defect spec line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot apply {defect}: {message}")]
    Apply { defect: String, message: String },
}

impl fmt::Display for Defect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Defect::RemovePrecondition { action, atom } => write!(f, "remove-precondition({action}, {atom})"),
            Defect::RemoveAdd { action, atom } => write!(f, "remove-add({action}, {atom})"),
            Defect::RemoveDel { action, atom } => write!(f, "remove-del({action}, {atom})"),
            Defect::AddPrecondition { action, atom } => write!(f, "add-precondition({action}, {atom})"),
            Defect::RenamePredicate { action, from, to } => {
                write!(f, "rename-predicate-in-action({action}, {from}, {to})")
            }
        }
    }
}

/// Splits on commas outside parentheses.
fn split_args(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(s[start..].trim());
    out
}

fn lifted_atom(text: &str) -> Result<Atom, String> {
    let form = read_one(text).map_err(|e| e.to_string())?;
    let step = parse_step(&form).map_err(|e| e.to_string())?;
    Ok(Atom::new(step.name, step.args))
}

impl Defect {
    pub fn parse(line: &str) -> Result<Defect, String> {
        let line = line.trim();
        let (op, rest) = line.split_once('(').ok_or("expected op(args)")?;
        let inner = rest.strip_suffix(')').ok_or("missing closing parenthesis")?;
        let args = split_args(inner);
        let action = args.first().ok_or("missing action")?.to_lowercase();
        let atom = || -> Result<Atom, String> {
            match args.as_slice() {
                [_, a] => lifted_atom(a),
                _ => Err(format!("{op} takes (action, atom)")),
            }
        };
        Ok(match op.trim() {
            "remove-precondition" => Defect::RemovePrecondition { action, atom: atom()? },
            "remove-add" => Defect::RemoveAdd { action, atom: atom()? },
            "remove-del" => Defect::RemoveDel { action, atom: atom()? },
            "add-precondition" => Defect::AddPrecondition { action, atom: atom()? },
            "rename-predicate-in-action" => match args.as_slice() {
                [_, from, to] => Defect::RenamePredicate {
                    action,
                    from: from.to_lowercase(),
                    to: to.to_lowercase(),
                },
                _ => return Err("rename-predicate-in-action takes (action, from, to)".into()),
            },
            other => return Err(format!("unknown edit {other}")),
        })
    }

    /// One edit per line; blank lines and `#` comments are skipped.
    pub fn parse_spec(text: &str) -> Result<Vec<Defect>, DefectError> {
        text.lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty())
            .map(|(line, l)| Defect::parse(l).map_err(|message| DefectError::Parse { line, message }))
            .collect()
    }

    pub fn action(&self) -> &str {
        match self {
            Defect::RemovePrecondition { action, .. }
            | Defect::RemoveAdd { action, .. }
            | Defect::RemoveDel { action, .. }
            | Defect::AddPrecondition { action, .. }
            | Defect::RenamePredicate { action, .. } => action,
        }
    }

    pub fn predicates(&self) -> Vec<&str> {
        match self {
            Defect::RemovePrecondition { atom, .. }
            | Defect::RemoveAdd { atom, .. }
            | Defect::RemoveDel { atom, .. }
            | Defect::AddPrecondition { atom, .. } => vec![atom.predicate.as_str()],
            Defect::RenamePredicate { from, to, .. } => vec![from.as_str(), to.as_str()],
        }
    }

    fn fail(&self, message: impl Into<String>) -> DefectError {
        DefectError::Apply {
            defect: self.to_string(),
            message: message.into(),
        }
    }

    pub fn apply(&self, domain: &mut Domain) -> Result<(), DefectError> {
        let declared = |p: &str| domain.predicate(p).cloned();
        let Some(a) = domain.action(self.action()).cloned() else {
            return Err(self.fail("no such action"));
        };
        let mut a = a;
        match self {
            Defect::RemovePrecondition { atom, .. } => {
                if !a.pre.remove(atom) {
                    return Err(self.fail("atom is not a precondition"));
                }
            }
            Defect::RemoveAdd { atom, .. } => {
                if !a.add.remove(atom) {
                    return Err(self.fail("atom is not an add effect"));
                }
            }
            Defect::RemoveDel { atom, .. } => {
                if !a.del.remove(atom) {
                    return Err(self.fail("atom is not a delete effect"));
                }
            }
            Defect::AddPrecondition { atom, .. } => {
                if declared(&atom.predicate).is_none() {
                    return Err(self.fail("predicate is not declared"));
                }
                if atom.args.iter().any(|v| a.param_type(v).is_none()) {
                    return Err(self.fail("atom uses an undeclared variable"));
                }
                if !a.pre.insert(atom.clone()) {
                    return Err(self.fail("atom is already a precondition"));
                }
            }
            Defect::RenamePredicate { from, to, .. } => {
                let Some(decl) = declared(from) else {
                    return Err(self.fail("source predicate is not declared"));
                };
                if declared(to).is_some() {
                    return Err(self.fail("target predicate already exists"));
                }
                if !a.atoms().any(|x| &x.predicate == from) {
                    return Err(self.fail("action does not use the predicate"));
                }
                rename_in(&mut a, from, to);
                domain.add_predicate(PredicateDecl {
                    name: to.clone(),
                    params: decl.params,
                });
            }
        }
        *domain.action_mut(self.action()).expect("checked above") = a;
        Ok(())
    }

    /// Whether the edit is still visible in `domain`.
    pub fn present(&self, domain: &Domain) -> bool {
        let Some(a) = domain.action(self.action()) else {
            return false;
        };
        match self {
            Defect::RemovePrecondition { atom, .. } => !a.pre.contains(atom),
            Defect::RemoveAdd { atom, .. } => !a.add.contains(atom),
            Defect::RemoveDel { atom, .. } => !a.del.contains(atom),
            Defect::AddPrecondition { atom, .. } => a.pre.contains(atom),
            Defect::RenamePredicate { to, .. } => a.atoms().any(|x| &x.predicate == to),
        }
    }

    /// Undoes the edit in `domain`.
    pub fn repair(&self, domain: &mut Domain) {
        let Some(a) = domain.action_mut(self.action()) else {
            return;
        };
        match self {
            Defect::RemovePrecondition { atom, .. } => {
                a.pre.insert(atom.clone());
            }
            Defect::RemoveAdd { atom, .. } => {
                a.del.remove(atom);
                a.add.insert(atom.clone());
            }
            Defect::RemoveDel { atom, .. } => {
                if !a.add.contains(atom) {
                    a.del.insert(atom.clone());
                }
            }
            Defect::AddPrecondition { atom, .. } => {
                a.pre.remove(atom);
            }
            Defect::RenamePredicate { from, to, .. } => {
                rename_in(a, to, from);
                if !domain.actions.iter().any(|x| x.atoms().any(|y| &y.predicate == to)) {
                    domain.predicates.remove(to);
                }
            }
        }
    }

    fn touched_by(&self, feedback: &Feedback) -> bool {
        match feedback {
            Feedback::Plan { actions, predicates } => {
                actions.contains(self.action()) || self.predicates().iter().any(|p| predicates.contains(*p))
            }
            Feedback::Landmark { actions } => actions.contains(self.action()),
        }
    }
}

fn rename_in(a: &mut crate::pddl::ActionSchema, from: &str, to: &str) {
    let swap = |set: &mut BTreeSet<Atom>| {
        *set = std::mem::take(set)
            .into_iter()
            .map(|mut x| {
                if x.predicate == from {
                    x.predicate = to.to_string();
                }
                x
            })
            .collect();
    };
    swap(&mut a.pre);
    swap(&mut a.add);
    swap(&mut a.del);
}

/// Action and predicate names a feedback message points at.
enum Feedback {
    Plan {
        actions: BTreeSet<String>,
        predicates: BTreeSet<String>,
    },
    Landmark {
        actions: BTreeSet<String>,
    },
}

fn step_names(text: &str) -> BTreeSet<String> {
    text.split(',')
        .filter_map(|part| read_one(part.trim()).ok())
        .filter_map(|f| parse_step(&f).ok())
        .map(|s| s.name)
        .collect()
}

fn read_feedback(content: &str) -> Option<Feedback> {
    let blocks = fenced_blocks(content);
    if content.contains(PLAN_KIND_MARKER) {
        let val = &blocks.get(2)?.body;
        let mut actions = BTreeSet::new();
        let mut predicates = BTreeSet::new();
        for line in val.lines() {
            if let Some(i) = line.find("in action (") {
                actions.extend(step_names(line[i + "in action ".len()..].split(" at step").next()?));
            }
            if line.starts_with("Unsatisfied") {
                if let Some((_, atoms)) = line.split_once(':') {
                    if let Ok(forms) = read_all(atoms) {
                        predicates.extend(forms.iter().filter_map(|f| f.head().map(str::to_string)));
                    }
                }
            }
            for piece in line.split("missing predicate ").skip(1) {
                if let Some(name) = piece.split('/').next() {
                    predicates.insert(name.trim().to_string());
                }
            }
        }
        Some(Feedback::Plan { actions, predicates })
    } else if content.contains(LANDMARK_KIND_MARKER) {
        let mut actions = step_names(&blocks.get(1)?.body);
        if let Ok(plan) = parse_plan(&blocks.get(2)?.body) {
            actions.extend(plan.steps.into_iter().map(|s| s.name));
        }
        Some(Feedback::Landmark { actions })
    } else {
        None
    }
}

/// Offline stand-in for a model: answers construction prompts with the
/// actions of a defective copy of the reference domain and answers feedback
/// by undoing the edits that the feedback points at.
#[derive(Debug, Clone)]
pub struct MutationBackend {
    defective: Domain,
    defects: Vec<Defect>,
    repair_probability: f64,
    seed: u64,
}

impl MutationBackend {
    pub fn new(
        reference: &Domain,
        defects: Vec<Defect>,
        repair_probability: f64,
        seed: u64,
    ) -> Result<Self, DefectError> {
        let mut defective = reference.clone();
        for d in &defects {
            d.apply(&mut defective)?;
        }
        Ok(MutationBackend {
            defective,
            defects,
            repair_probability: repair_probability.clamp(0.0, 1.0),
            seed,
        })
    }

    pub fn defective(&self) -> &Domain {
        &self.defective
    }

    pub fn defects(&self) -> &[Defect] {
        &self.defects
    }

    /// Latest full domain sent by the assistant, else the defective domain.
    fn current(&self, history: &History) -> Domain {
        history
            .messages()
            .iter()
            .rev()
            .filter(|m| m.role == Role::Assistant)
            .find_map(|m| {
                let block = extract_pddl_block(&m.content).ok()?;
                if !block.trim_start().starts_with("(define") {
                    return None;
                }
                parse_domain(&block).ok()
            })
            .unwrap_or_else(|| self.defective.clone())
    }

    fn action_answer(&self, name: &str) -> Result<Message, BackendError> {
        let a = self
            .defective
            .action(name)
            .ok_or_else(|| BackendError::Mock(format!("no action {name} in reference domain")))?;
        let used: BTreeSet<&str> = a.atoms().map(|x| x.predicate.as_str()).collect();
        let preds: Vec<(PredicateDecl, String)> = used
            .iter()
            .filter_map(|p| self.defective.predicate(p))
            .map(|p| (p.clone(), format!("{} relation", p.name)))
            .collect();
        let mut wanted: BTreeSet<String> = a.params.iter().map(|p| p.ty.clone()).collect();
        for (p, _) in &preds {
            wanted.extend(p.params.iter().map(|x| x.ty.clone()));
        }
        let mut closed = BTreeSet::new();
        for t in wanted {
            let mut cur = Some(t);
            while let Some(t) = cur.filter(|t| t != OBJECT) {
                cur = self.defective.types.parent_of(&t).map(str::to_string);
                closed.insert(t);
            }
        }
        let types: Vec<(String, String, String)> = closed
            .into_iter()
            .map(|t| {
                let parent = self.defective.types.parent_of(&t).unwrap_or(OBJECT).to_string();
                let gloss = format!("{t} objects");
                (t, parent, gloss)
            })
            .collect();
        Ok(Message::assistant(format_action_response(a, &preds, &types)))
    }
}

fn requested_action(content: &str) -> Option<&str> {
    content
        .lines()
        .find_map(|l| l.strip_prefix(ACTION_PREFIX))
        .map(str::trim)
}

impl Backend for MutationBackend {
    fn complete(&self, history: &History) -> Result<Message, BackendError> {
        let prompt = history
            .messages()
            .iter()
            .rev()
            .filter(|m| m.role == Role::User)
            .find(|m| !m.content.starts_with(SYNTAX_REPAIR_MARKER))
            .ok_or_else(|| BackendError::Mock("history has no user prompt".into()))?;
        if let Some(name) = requested_action(&prompt.content) {
            return self.action_answer(name);
        }
        let mut domain = self.current(history);
        let last_user = history
            .last_with_role(Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("");
        if let Some(fb) = read_feedback(last_user) {
            let mut rng = ChaCha8Rng::seed_from_u64(stable_seed(&[
                &self.seed.to_be_bytes(),
                &(history.len() as u64).to_be_bytes(),
                last_user.as_bytes(),
            ]));
            for d in &self.defects {
                if d.present(&domain) && d.touched_by(&fb) && rng.gen_bool(self.repair_probability) {
                    d.repair(&mut domain);
                }
            }
        }
        Ok(Message::assistant(format!("```pddl\n{}```", print_domain(&domain))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BLOCKS: &str = include_str!("../../../../dataset/blocks/domain.pddl");

    fn gt() -> Domain {
        parse_domain(BLOCKS).unwrap()
    }

    #[test]
    fn spec_round_trip() {
        let text = "# comment\nremove-add(stack, (on ?x ?y))\nrename-predicate-in-action(unstack, clear, free)\n";
        let ds = Defect::parse_spec(text).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds[0].to_string(), "remove-add(stack, (on ?x ?y))");
        assert_eq!(ds[1].to_string(), "rename-predicate-in-action(unstack, clear, free)");
        assert!(matches!(
            Defect::parse_spec("explode(stack)"),
            Err(DefectError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn apply_then_repair_restores_reference() {
        let specs = [
            "remove-precondition(stack, (holding ?x))",
            "remove-add(stack, (on ?x ?y))",
            "remove-del(unstack, (on ?x ?y))",
            "add-precondition(put-down, (clear ?x))",
            "rename-predicate-in-action(pick-up, ontable, on-table)",
        ];
        for s in specs {
            let d = Defect::parse(s).unwrap();
            let mut dom = gt();
            d.apply(&mut dom).unwrap();
            assert!(d.present(&dom), "{s}");
            assert_ne!(dom, gt(), "{s}");
            d.repair(&mut dom);
            assert!(!d.present(&dom), "{s}");
            assert_eq!(dom, gt(), "{s}");
        }
    }

    #[test]
    fn invalid_edits_are_rejected() {
        let mut dom = gt();
        assert!(Defect::parse("remove-add(stack, (ontable ?x))")
            .unwrap()
            .apply(&mut dom)
            .is_err());
        assert!(Defect::parse("add-precondition(stack, (flying ?x))")
            .unwrap()
            .apply(&mut dom)
            .is_err());
        assert!(Defect::parse("remove-add(fly, (on ?x ?y))")
            .unwrap()
            .apply(&mut dom)
            .is_err());
    }

    #[test]
    fn construction_prompt_gets_defective_action() {
        let d = Defect::parse("remove-add(stack, (on ?x ?y))").unwrap();
        let b = MutationBackend::new(&gt(), vec![d], 1.0, 7).unwrap();
        let mut h = History::new("s");
        h.push(Message::user("Action: stack\nStack a block."));
        let reply = b.complete(&h).unwrap();
        let r = crate::construction::parse_action_response(&reply.content).unwrap();
        assert_eq!(r.action.name, "stack");
        assert!(!r.action.add.contains(&Atom::new("on", ["?x", "?y"])));
        assert!(r.types.iter().any(|(t, _, _)| t == "block"));
    }

    #[test]
    fn zero_probability_echoes_current_domain() {
        let d = Defect::parse("remove-add(stack, (on ?x ?y))").unwrap();
        let b = MutationBackend::new(&gt(), vec![d], 0.0, 7).unwrap();
        let mut h = History::new("s");
        h.push(Message::user(format!(
            "x\n```\n(define (problem p) (:domain blocks))\n```\n{PLAN_KIND_MARKER}\n```\n(pick-up a)\n```\n```\nUnsatisfied goal: (on a b)\n```"
        )));
        let reply = b.complete(&h).unwrap();
        let dom = parse_domain(&extract_pddl_block(&reply.content).unwrap()).unwrap();
        assert_eq!(dom, *b.defective());
    }
}
