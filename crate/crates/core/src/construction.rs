//! Action-by-action construction of an initial domain from a description.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::generator::{syntax_repair_loop, Backend, BackendError, History, Message, RepairError};
use crate::pddl::{check_domain_wellformed, ActionSchema, Domain, PredicateDecl, OBJECT};
use crate::text::{
    extract_pddl_block, fenced_blocks, parse_action_form, predicate_decls, print_domain, read_all, read_one,
    type_decl_line, Pos, SourceError,
};

pub const CLASSES: [&str; 2] = ["simple", "detailed"];
pub const ACTION_PREFIX: &str = "Action: ";
pub const CONSTRUCTION_RETRY_LIMIT: usize = 5;
pub const REUSE_INSTRUCTION: &str = "Reuse the predicates and types listed above wherever they fit. \
Introduce a new predicate only if none of them can express what the action needs.";

/// Natural-language description keyed by class ("simple" / "detailed").
/// `actions` keeps document order, which is the generation order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainDescription {
    pub overall: BTreeMap<String, String>,
    pub predicates: BTreeMap<String, BTreeMap<String, String>>,
    pub actions: Vec<(String, BTreeMap<String, String>)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DescriptionError {
    #[error("description is not valid JSON: {0}")]
    Json(String),
    #[error("description field {0} is missing or not an object")]
    Shape(String),
    #[error("unknown description class {class} under {field}")]
    UnknownClass { field: String, class: String },
    #[error("description has no actions")]
    NoActions,
}

fn class_map(v: &Value, field: &str) -> Result<BTreeMap<String, String>, DescriptionError> {
    let obj = v
        .as_object()
        .ok_or_else(|| DescriptionError::Shape(field.to_string()))?;
    let mut out = BTreeMap::new();
    for (class, text) in obj {
        if !CLASSES.contains(&class.as_str()) {
            return Err(DescriptionError::UnknownClass {
                field: field.to_string(),
                class: class.clone(),
            });
        }
        let text = text
            .as_str()
            .ok_or_else(|| DescriptionError::Shape(format!("{field}.{class}")))?;
        out.insert(class.clone(), text.to_string());
    }
    Ok(out)
}

impl DomainDescription {
    pub fn from_json(text: &str) -> Result<Self, DescriptionError> {
        let v: Value = serde_json::from_str(text).map_err(|e| DescriptionError::Json(e.to_string()))?;
        let section = |name: &str| {
            v.get(name)
                .and_then(Value::as_object)
                .ok_or_else(|| DescriptionError::Shape(name.to_string()))
        };
        let overall = class_map(v.get("overall").unwrap_or(&Value::Null), "overall")?;
        let mut predicates = BTreeMap::new();
        for (name, texts) in section("predicates")? {
            predicates.insert(name.to_lowercase(), class_map(texts, &format!("predicates.{name}"))?);
        }
        let mut actions = Vec::new();
        for (name, texts) in section("actions")? {
            actions.push((name.to_lowercase(), class_map(texts, &format!("actions.{name}"))?));
        }
        if actions.is_empty() {
            return Err(DescriptionError::NoActions);
        }
        Ok(DomainDescription {
            overall,
            predicates,
            actions,
        })
    }

    pub fn action_names(&self) -> impl Iterator<Item = &str> {
        self.actions.iter().map(|(n, _)| n.as_str())
    }
}

/// System prompt plus (user, assistant) context examples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompts {
    pub system: String,
    pub examples: Vec<(String, String)>,
}

impl Prompts {
    pub fn builtin() -> Self {
        Prompts {
            system: include_str!("../assets/prompts/system.txt").to_string(),
            examples: vec![
                (
                    include_str!("../assets/prompts/example1_user.txt").to_string(),
                    include_str!("../assets/prompts/example1_assistant.txt").to_string(),
                ),
                (
                    include_str!("../assets/prompts/example2_user.txt").to_string(),
                    include_str!("../assets/prompts/example2_assistant.txt").to_string(),
                ),
            ],
        }
    }

    /// Reads `system.txt` and `example{1,2}_{user,assistant}.txt` from `dir`.
    pub fn load(dir: &Path) -> std::io::Result<Self> {
        let read = |f: &str| std::fs::read_to_string(dir.join(f));
        Ok(Prompts {
            system: read("system.txt")?,
            examples: vec![
                (read("example1_user.txt")?, read("example1_assistant.txt")?),
                (read("example2_user.txt")?, read("example2_assistant.txt")?),
            ],
        })
    }

    pub fn initial_history(&self) -> History {
        let mut h = History::new(self.system.clone());
        for (u, a) in &self.examples {
            h.push(Message::user(u.clone()));
            h.push(Message::assistant(a.clone()));
        }
        h
    }
}

/// Renders an action answer in the three-block response format.
pub fn format_action_response(
    action: &ActionSchema,
    predicates: &[(PredicateDecl, String)],
    types: &[(String, String, String)],
) -> String {
    let mut s = String::from("```pddl\n");
    s.push_str(&crate::text::print_action(action));
    s.push_str("```\n```predicates\n");
    for (p, gloss) in predicates {
        let _ = writeln!(s, "{p} ; {gloss}");
    }
    s.push_str("```\n```types\n");
    for (name, parent, gloss) in types {
        if parent == OBJECT {
            let _ = writeln!(s, "{name} ; {gloss}");
        } else {
            let _ = writeln!(s, "{name} - {parent} ; {gloss}");
        }
    }
    s.push_str("```\n");
    s
}

/// A parsed action answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionResponse {
    pub action: ActionSchema,
    pub predicates: Vec<(PredicateDecl, String)>,
    pub types: Vec<(String, String, String)>,
}

fn split_gloss(line: &str) -> (&str, String) {
    match line.split_once(';') {
        Some((decl, gloss)) => (decl.trim(), gloss.trim().to_string()),
        None => (line.trim(), String::new()),
    }
}

fn relocate(e: SourceError, line: usize) -> SourceError {
    SourceError { line, ..e }
}

/// Parses the three-block response format. Missing predicate or type blocks
/// read as empty.
pub fn parse_action_response(text: &str) -> Result<ActionResponse, SourceError> {
    let block = extract_pddl_block(text)?;
    let form = read_one(&block)?;
    if form.head() != Some(":action") {
        return Err(SourceError::new(
            form.pos,
            "expected an (:action ...) form",
            form.head().unwrap_or(""),
        ));
    }
    let action = parse_action_form(&form)?;
    let mut predicates = Vec::new();
    let mut types = Vec::new();
    for fence in fenced_blocks(text) {
        match fence.label.to_lowercase().as_str() {
            "predicates" => {
                for (i, line) in fence.body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                    let (decl, gloss) = split_gloss(line);
                    let forms = read_all(decl).map_err(|e| relocate(e, i + 1))?;
                    for (p, _) in predicate_decls(&forms).map_err(|e| relocate(e, i + 1))? {
                        predicates.push((p, gloss.clone()));
                    }
                }
            }
            "types" => {
                for (i, line) in fence.body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                    let (decl, gloss) = split_gloss(line);
                    for (n, p) in type_decl_line(decl).map_err(|e| relocate(e, i + 1))? {
                        types.push((n, p, gloss.clone()));
                    }
                }
            }
            _ => {}
        }
    }
    Ok(ActionResponse {
        action,
        predicates,
        types,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionResult {
    pub domain: Domain,
    pub transcript: History,
    pub predicate_glossary: BTreeMap<String, String>,
    pub type_glossary: BTreeMap<String, String>,
    pub per_action_attempts: BTreeMap<String, usize>,
    pub calls: usize,
}

impl ConstructionResult {
    pub fn domain_text(&self) -> String {
        print_domain(&self.domain)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConstructionError {
    #[error("description class {0} is not available")]
    MissingClass(String),
    #[error("action {action}: {source}")]
    Action {
        action: String,
        source: RepairError,
        transcript: History,
    },
    #[error("action {action}: arity conflict: {message}")]
    ArityConflict {
        action: String,
        message: String,
        transcript: History,
    },
}

impl ConstructionError {
    pub fn transcript(&self) -> Option<&History> {
        match self {
            ConstructionError::MissingClass(_) => None,
            ConstructionError::Action { transcript, .. } | ConstructionError::ArityConflict { transcript, .. } => {
                Some(transcript)
            }
        }
    }

    pub fn calls(&self) -> usize {
        match self {
            ConstructionError::Action { source, .. } => source.calls(),
            _ => 0,
        }
    }

    pub fn backend_error(&self) -> Option<&BackendError> {
        match self {
            ConstructionError::Action {
                source: RepairError::Backend { source, .. },
                ..
            } => Some(source),
            _ => None,
        }
    }
}

fn action_prompt(
    desc: &DomainDescription,
    class: &str,
    index: usize,
    acc: &Accumulated,
) -> Result<String, ConstructionError> {
    let (name, texts) = &desc.actions[index];
    let text = texts
        .get(class)
        .ok_or_else(|| ConstructionError::MissingClass(class.to_string()))?;
    let mut s = String::new();
    if index == 0 {
        if let Some(o) = desc.overall.get(class) {
            let _ = writeln!(s, "Domain description:\n{o}\n");
        }
    }
    let _ = writeln!(s, "{ACTION_PREFIX}{name}\n{text}");
    let pending: Vec<(&String, &String)> = desc
        .predicates
        .iter()
        .filter(|(p, _)| !acc.domain.predicates.contains_key(*p))
        .filter_map(|(p, t)| t.get(class).map(|t| (p, t)))
        .collect();
    if !pending.is_empty() {
        let _ = writeln!(s, "\nPredicate descriptions:");
        for (p, t) in pending {
            let _ = writeln!(s, "- {p}: {t}");
        }
    }
    if index > 0 {
        let _ = writeln!(s, "\nTypes declared so far:");
        for (t, parent) in acc.domain.types.entries() {
            let gloss = acc.type_glossary.get(t).map(String::as_str).unwrap_or("");
            if parent == OBJECT {
                let _ = writeln!(s, "{t} ; {gloss}");
            } else {
                let _ = writeln!(s, "{t} - {parent} ; {gloss}");
            }
        }
        let _ = writeln!(s, "\nPredicates declared so far:");
        for p in acc.domain.predicates.values() {
            let gloss = acc.predicate_glossary.get(&p.name).map(String::as_str).unwrap_or("");
            let _ = writeln!(s, "{p} ; {gloss}");
        }
        let _ = writeln!(s, "\n{REUSE_INSTRUCTION}");
    }
    Ok(s)
}

struct Accumulated {
    domain: Domain,
    predicate_glossary: BTreeMap<String, String>,
    type_glossary: BTreeMap<String, String>,
}

impl Accumulated {
    /// Signature clashes with earlier declarations or usages.
    fn conflict(&self, r: &ActionResponse) -> Option<String> {
        for (p, _) in &r.predicates {
            if let Some(prev) = self.domain.predicate(&p.name) {
                if prev.signature() != p.signature() {
                    return Some(format!("predicate {} declared as {prev} and as {p}", p.name));
                }
            }
        }
        for atom in r.action.atoms() {
            if let Some(prev) = self.domain.predicate(&atom.predicate) {
                if prev.arity() != atom.arity() {
                    return Some(format!(
                        "predicate {}/{} used with {} argument(s) in {atom}",
                        prev.name,
                        prev.arity(),
                        atom.arity()
                    ));
                }
            }
        }
        None
    }

    /// Domain with the response merged in; earlier declarations win.
    fn merged(&self, r: &ActionResponse) -> Domain {
        let mut d = self.domain.clone();
        for (t, parent, _) in &r.types {
            if !d.types.contains(t) && t != OBJECT {
                d.types.declare(t.clone(), Some(parent));
            }
        }
        for (p, _) in &r.predicates {
            if d.predicate(&p.name).is_none() {
                d.add_predicate(p.clone());
            }
        }
        d.actions.retain(|a| a.name != r.action.name);
        d.actions.push(r.action.clone());
        d
    }

    fn commit(&mut self, r: ActionResponse) {
        self.domain = self.merged(&r);
        for (p, gloss) in r.predicates {
            self.predicate_glossary.entry(p.name).or_insert(gloss);
        }
        for (t, _, gloss) in r.types {
            self.type_glossary.entry(t).or_insert(gloss);
        }
    }
}

/// Generates each described action in order and assembles the domain.
/// Every answer must name the requested action and leave the merged domain
/// well-formed; otherwise it is sent back for repair.
pub fn build_initial_domain(
    desc: &DomainDescription,
    class: &str,
    domain_name: &str,
    backend: &dyn Backend,
    prompts: &Prompts,
    retry_limit: usize,
) -> Result<ConstructionResult, ConstructionError> {
    let mut history = prompts.initial_history();
    let mut acc = Accumulated {
        domain: Domain::new(domain_name),
        predicate_glossary: BTreeMap::new(),
        type_glossary: BTreeMap::new(),
    };
    let mut attempts = BTreeMap::new();
    let mut calls = 0;
    for index in 0..desc.actions.len() {
        let name = desc.actions[index].0.clone();
        history.push(Message::user(action_prompt(desc, class, index, &acc)?));
        let acc_ref = &acc;
        let parse = |text: &str| -> Result<(ActionResponse, Option<String>), SourceError> {
            let r = parse_action_response(text)?;
            if r.action.name != name {
                return Err(SourceError::new(
                    Pos::START,
                    format!("expected action {name}, got {}", r.action.name),
                    r.action.name.clone(),
                ));
            }
            if let Some(c) = acc_ref.conflict(&r) {
                return Ok((r, Some(c)));
            }
            let merged = acc_ref.merged(&r);
            if let Some(d) = check_domain_wellformed(&merged).into_iter().next() {
                return Err(SourceError::new(Pos::START, d.to_string(), d.element));
            }
            Ok((r, None))
        };
        let outcome = syntax_repair_loop(backend, &mut history, parse, retry_limit);
        let repaired = match outcome {
            Ok(r) => r,
            Err(source) => {
                return Err(ConstructionError::Action {
                    action: name,
                    source,
                    transcript: history,
                })
            }
        };
        calls += repaired.calls;
        attempts.insert(name.clone(), repaired.calls);
        let (response, conflict) = repaired.value;
        if let Some(message) = conflict {
            return Err(ConstructionError::ArityConflict {
                action: name,
                message,
                transcript: history,
            });
        }
        acc.commit(response);
    }
    Ok(ConstructionResult {
        domain: acc.domain,
        transcript: history,
        predicate_glossary: acc.predicate_glossary,
        type_glossary: acc.type_glossary,
        per_action_attempts: attempts,
        calls,
    })
}

/// The result's action names equal the description's action keys.
pub fn action_name_contract(desc: &DomainDescription, result: &ConstructionResult) -> bool {
    let mut want: Vec<&str> = desc.action_names().collect();
    let mut got: Vec<&str> = result.domain.actions.iter().map(|a| a.name.as_str()).collect();
    want.sort_unstable();
    got.sort_unstable();
    want == got
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::ScriptedBackend;
    use crate::text::parse_domain;

    const ONE: &str = r#"{"overall": {"simple": "Lamps."},
        "predicates": {"on": {"simple": "lamp ?l is on"}},
        "actions": {"turn-on": {"simple": "Turn a lamp on."}}}"#;

    const TURN_ON: &str = "```pddl
(:action turn-on :parameters (?l - lamp) :precondition (and) :effect (and (on ?l)))
```
```predicates
(on ?l - lamp) ; lamp ?l is on
```
```types
lamp ; a lamp
```";

    #[test]
    fn description_keeps_action_order() {
        let d = DomainDescription::from_json(include_str!("../../../dataset/blocks/description.json")).unwrap();
        let names: Vec<_> = d.action_names().collect();
        assert_eq!(names, ["pick-up", "put-down", "stack", "unstack"]);
    }

    #[test]
    fn unknown_class_rejected() {
        let e =
            DomainDescription::from_json(r#"{"overall":{"terse":"x"},"predicates":{},"actions":{"a":{"simple":"x"}}}"#);
        assert!(matches!(e, Err(DescriptionError::UnknownClass { .. })));
    }

    #[test]
    fn single_action_domain() {
        let desc = DomainDescription::from_json(ONE).unwrap();
        let b = ScriptedBackend::new(vec![TURN_ON.into()]);
        let r = build_initial_domain(&desc, "simple", "lamps", &b, &Prompts::builtin(), 5).unwrap();
        assert_eq!(r.domain.actions.len(), 1);
        assert_eq!(r.per_action_attempts["turn-on"], 1);
        assert!(check_domain_wellformed(&r.domain).is_empty());
        assert!(action_name_contract(&desc, &r));
        assert_eq!(r.predicate_glossary["on"], "lamp ?l is on");
        parse_domain(&r.domain_text()).unwrap();
    }

    #[test]
    fn arity_conflict_fails() {
        let desc = DomainDescription::from_json(
            r#"{"overall": {}, "predicates": {},
                "actions": {"a": {"simple": "a"}, "b": {"simple": "b"}}}"#,
        )
        .unwrap();
        let a = "```pddl\n(:action a :parameters (?x - t ?y - t) :precondition (and) :effect (and (on ?x ?y)))\n```\n```predicates\n(on ?x - t ?y - t) ; x\n```\n```types\nt ; t\n```";
        let b = "```pddl\n(:action b :parameters (?x - t ?y - t ?z - t) :precondition (and) :effect (and (on ?x ?y ?z)))\n```\n```predicates\n(on ?x - t ?y - t ?z - t) ; x\n```\n```types\nt ; t\n```";
        let backend = ScriptedBackend::new(vec![a.into(), b.into()]);
        let e = build_initial_domain(&desc, "simple", "d", &backend, &Prompts::builtin(), 5).unwrap_err();
        assert!(e.to_string().contains("arity conflict"), "{e}");
    }

    #[test]
    fn undeclared_predicate_is_sent_back() {
        let desc = DomainDescription::from_json(ONE).unwrap();
        let bad = "```pddl\n(:action turn-on :parameters (?l - lamp) :precondition (and) :effect (and (on ?l)))\n```\n```types\nlamp ; a lamp\n```";
        let b = ScriptedBackend::new(vec![bad.into(), TURN_ON.into()]);
        let r = build_initial_domain(&desc, "simple", "lamps", &b, &Prompts::builtin(), 5).unwrap();
        assert_eq!(r.per_action_attempts["turn-on"], 2);
    }

    #[test]
    fn contract_detects_missing_and_extra() {
        let desc = DomainDescription::from_json(include_str!("../../../dataset/blocks/description.json")).unwrap();
        let gt = parse_domain(include_str!("../../../dataset/blocks/domain.pddl")).unwrap();
        let mut r = ConstructionResult {
            domain: gt,
            transcript: History::new("s"),
            predicate_glossary: BTreeMap::new(),
            type_glossary: BTreeMap::new(),
            per_action_attempts: BTreeMap::new(),
            calls: 0,
        };
        assert!(action_name_contract(&desc, &r));
        let extra = r.domain.actions[0].clone();
        r.domain.actions.retain(|a| a.name != "put-down");
        assert!(!action_name_contract(&desc, &r));
        r.domain.actions.push(ActionSchema {
            name: "put-down".into(),
            ..extra.clone()
        });
        r.domain.actions.push(ActionSchema {
            name: "spin".into(),
            ..extra
        });
        assert!(!action_name_contract(&desc, &r));
    }

    #[test]
    fn later_prompts_list_accumulated_declarations() {
        let desc = DomainDescription::from_json(include_str!("../../../dataset/blocks/description.json")).unwrap();
        let mut acc = Accumulated {
            domain: Domain::new("blocks"),
            predicate_glossary: BTreeMap::new(),
            type_glossary: BTreeMap::new(),
        };
        let first = action_prompt(&desc, "simple", 0, &acc).unwrap();
        assert!(first.starts_with("Domain description:"));
        assert!(first.contains("Action: pick-up"));
        assert!(!first.contains(REUSE_INSTRUCTION));
        acc.domain.types.declare("block", None);
        acc.domain.add_predicate(PredicateDecl {
            name: "handempty".into(),
            params: vec![],
        });
        let second = action_prompt(&desc, "simple", 1, &acc).unwrap();
        assert!(!second.contains("Domain description:"));
        assert!(second.contains("(handempty) ; "));
        assert!(!second.contains("- handempty:"));
        assert!(second.contains(REUSE_INSTRUCTION));
    }
}
