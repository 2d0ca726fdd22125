//! Typed lifted STRIPS domains and problems.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Name of the implicit root type.
pub const OBJECT: &str = "object";

/// A predicate applied to arguments. Lifted atoms carry `?variables`,
/// ground atoms carry object names.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<String>,
}

impl Atom {
    pub fn new<A: Into<String>>(predicate: impl Into<String>, args: impl IntoIterator<Item = A>) -> Self {
        Atom {
            predicate: predicate.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.predicate)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

/// A `?var - type` pair from a parameter or predicate declaration.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TypedParam {
    pub name: String,
    pub ty: String,
}

impl TypedParam {
    pub fn new(name: impl Into<String>, ty: impl Into<String>) -> Self {
        TypedParam {
            name: name.into(),
            ty: ty.into(),
        }
    }
}

/// The type tree. Every type maps to its parent; roots map to `object`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeHierarchy {
    parent: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown type {0}")]
pub struct UnknownType(pub String);

impl TypeHierarchy {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares `name` under `parent` (`None` means directly under `object`).
    /// Redeclaring `object` itself is a no-op.
    pub fn declare(&mut self, name: impl Into<String>, parent: Option<&str>) {
        let name = name.into();
        if name == OBJECT {
            return;
        }
        self.parent.insert(name, parent.unwrap_or(OBJECT).to_string());
    }

    pub fn contains(&self, ty: &str) -> bool {
        ty == OBJECT || self.parent.contains_key(ty)
    }

    pub fn parent_of(&self, ty: &str) -> Option<&str> {
        self.parent.get(ty).map(String::as_str)
    }

    /// Declared types (excluding `object`) in name order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.parent.keys().map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.parent.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// `t1 ≤ t2`: equal, or `t2` is an ancestor of `t1`.
    pub fn type_leq(&self, t1: &str, t2: &str) -> Result<bool, UnknownType> {
        for t in [t1, t2] {
            if !self.contains(t) {
                return Err(UnknownType(t.to_string()));
            }
        }
        if t1 == t2 || t2 == OBJECT {
            return Ok(true);
        }
        let mut cur = t1;
        // bounded walk so a malformed (cyclic) tree cannot hang
        for _ in 0..=self.parent.len() {
            match self.parent.get(cur) {
                Some(p) if p == t2 => return Ok(true),
                Some(p) => cur = p,
                None => return Ok(false),
            }
        }
        Ok(false)
    }

    /// Types that sit on a parent cycle or whose parent is undeclared.
    fn defects(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        for (ty, parent) in &self.parent {
            if !self.contains(parent) {
                out.push(Diagnostic::new(
                    DiagnosticKind::UndeclaredType,
                    format!("type {ty}"),
                    format!("parent type {parent} of {ty} is not declared"),
                ));
                continue;
            }
            let mut cur = parent.as_str();
            let mut steps = 0;
            while cur != OBJECT && steps <= self.parent.len() {
                if cur == ty {
                    out.push(Diagnostic::new(
                        DiagnosticKind::CyclicType,
                        format!("type {ty}"),
                        format!("type {ty} is its own ancestor"),
                    ));
                    break;
                }
                match self.parent.get(cur) {
                    Some(p) => cur = p,
                    None => break,
                }
                steps += 1;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateDecl {
    pub name: String,
    pub params: Vec<TypedParam>,
}

impl PredicateDecl {
    pub fn arity(&self) -> usize {
        self.params.len()
    }

    pub fn signature(&self) -> Vec<&str> {
        self.params.iter().map(|p| p.ty.as_str()).collect()
    }
}

impl fmt::Display for PredicateDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.name)?;
        for p in &self.params {
            write!(f, " {} - {}", p.name, p.ty)?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSchema {
    pub name: String,
    pub params: Vec<TypedParam>,
    pub pre: BTreeSet<Atom>,
    pub add: BTreeSet<Atom>,
    pub del: BTreeSet<Atom>,
}

impl ActionSchema {
    pub fn param_type(&self, var: &str) -> Option<&str> {
        self.params.iter().find(|p| p.name == var).map(|p| p.ty.as_str())
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.pre.iter().chain(&self.add).chain(&self.del)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Requirement {
    Strips,
    Typing,
}

impl Requirement {
    pub fn keyword(self) -> &'static str {
        match self {
            Requirement::Strips => ":strips",
            Requirement::Typing => ":typing",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        match s {
            ":strips" => Some(Requirement::Strips),
            ":typing" => Some(Requirement::Typing),
            _ => None,
        }
    }
}

/// A planning domain. Predicates are keyed by name, so two domains that
/// declare the same predicates in a different order compare equal; actions
/// keep declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domain {
    pub name: String,
    pub requirements: BTreeSet<Requirement>,
    pub types: TypeHierarchy,
    pub predicates: BTreeMap<String, PredicateDecl>,
    pub actions: Vec<ActionSchema>,
}

impl Domain {
    pub fn new(name: impl Into<String>) -> Self {
        Domain {
            name: name.into(),
            requirements: [Requirement::Strips, Requirement::Typing].into(),
            types: TypeHierarchy::new(),
            predicates: BTreeMap::new(),
            actions: Vec::new(),
        }
    }

    pub fn action(&self, name: &str) -> Option<&ActionSchema> {
        self.actions.iter().find(|a| a.name == name)
    }

    pub fn action_mut(&mut self, name: &str) -> Option<&mut ActionSchema> {
        self.actions.iter_mut().find(|a| a.name == name)
    }

    pub fn predicate(&self, name: &str) -> Option<&PredicateDecl> {
        self.predicates.get(name)
    }

    pub fn add_predicate(&mut self, decl: PredicateDecl) {
        self.predicates.insert(decl.name.clone(), decl);
    }
}

/// A problem. `domain_name` is the name it was written against; binding to
/// a concrete domain happens through [`rebind_problem`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub name: String,
    pub domain_name: String,
    pub objects: BTreeMap<String, String>,
    pub init: BTreeSet<Atom>,
    pub goal: BTreeSet<Atom>,
}

/// One grounded action reference in a plan: `(name arg1 arg2 ...)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PlanStep {
    pub name: String,
    pub args: Vec<String>,
}

impl PlanStep {
    pub fn new<A: Into<String>>(name: impl Into<String>, args: impl IntoIterator<Item = A>) -> Self {
        PlanStep {
            name: name.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }
}

impl fmt::Display for PlanStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.name)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
}

impl Plan {
    pub fn new(steps: Vec<PlanStep>) -> Self {
        Plan { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn contains(&self, step: &PlanStep) -> bool {
        self.steps.contains(step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiagnosticKind {
    UndeclaredVariable,
    DuplicateVariable,
    ArityMismatch,
    UndeclaredPredicate,
    UndeclaredType,
    TypeMismatch,
    CyclicType,
    AddDeleteConflict,
    DuplicateAction,
    UnsupportedRequirement,
    MissingPredicate,
    UndeclaredObject,
}

impl DiagnosticKind {
    pub fn label(self) -> &'static str {
        match self {
            DiagnosticKind::UndeclaredVariable => "undeclared variable",
            DiagnosticKind::DuplicateVariable => "duplicate variable",
            DiagnosticKind::ArityMismatch => "arity mismatch",
            DiagnosticKind::UndeclaredPredicate => "undeclared predicate",
            DiagnosticKind::UndeclaredType => "undeclared type",
            DiagnosticKind::TypeMismatch => "type mismatch",
            DiagnosticKind::CyclicType => "cyclic type",
            DiagnosticKind::AddDeleteConflict => "add/delete conflict",
            DiagnosticKind::DuplicateAction => "duplicate action",
            DiagnosticKind::UnsupportedRequirement => "unsupported requirement",
            DiagnosticKind::MissingPredicate => "missing predicate",
            DiagnosticKind::UndeclaredObject => "undeclared object",
        }
    }
}

/// One well-formedness or binding problem. `element` names the offending
/// action, predicate, type or object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub element: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(kind: DiagnosticKind, element: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            kind,
            element: element.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind.label(), self.message)
    }
}

fn check_atom(domain: &Domain, action: &ActionSchema, atom: &Atom, out: &mut Vec<Diagnostic>) {
    let element = format!("action {}", action.name);
    for arg in &atom.args {
        if action.param_type(arg).is_none() {
            out.push(Diagnostic::new(
                DiagnosticKind::UndeclaredVariable,
                &element,
                format!("undeclared variable {arg} in {atom} of action {}", action.name),
            ));
        }
    }
    let Some(decl) = domain.predicate(&atom.predicate) else {
        out.push(Diagnostic::new(
            DiagnosticKind::UndeclaredPredicate,
            &element,
            format!("undeclared predicate {} in action {}", atom.predicate, action.name),
        ));
        return;
    };
    if decl.arity() != atom.arity() {
        out.push(Diagnostic::new(
            DiagnosticKind::ArityMismatch,
            &element,
            format!(
                "arity mismatch: {atom} in action {} uses {} argument(s), {} declares {}",
                action.name,
                atom.arity(),
                decl.name,
                decl.arity()
            ),
        ));
        return;
    }
    for (arg, param) in atom.args.iter().zip(&decl.params) {
        let Some(arg_ty) = action.param_type(arg) else {
            continue;
        };
        // undeclared types are reported on the parameter itself
        if let Ok(false) = domain.types.type_leq(arg_ty, &param.ty) {
            out.push(Diagnostic::new(
                DiagnosticKind::TypeMismatch,
                &element,
                format!(
                    "type mismatch: {arg} - {arg_ty} in {atom} of action {} is not a {}",
                    action.name, param.ty
                ),
            ));
        }
    }
}

/// Checks every domain invariant; the empty list means well-formed.
pub fn check_domain_wellformed(domain: &Domain) -> Vec<Diagnostic> {
    let mut out = domain.types.defects();

    for pred in domain.predicates.values() {
        let mut seen = BTreeSet::new();
        for p in &pred.params {
            if !seen.insert(p.name.as_str()) {
                out.push(Diagnostic::new(
                    DiagnosticKind::DuplicateVariable,
                    format!("predicate {}", pred.name),
                    format!("duplicate variable {} in predicate {}", p.name, pred.name),
                ));
            }
            if !domain.types.contains(&p.ty) {
                out.push(Diagnostic::new(
                    DiagnosticKind::UndeclaredType,
                    format!("predicate {}", pred.name),
                    format!("undeclared type {} in predicate {}", p.ty, pred.name),
                ));
            }
        }
    }

    let mut names = BTreeSet::new();
    for action in &domain.actions {
        let element = format!("action {}", action.name);
        if !names.insert(action.name.as_str()) {
            out.push(Diagnostic::new(
                DiagnosticKind::DuplicateAction,
                &element,
                format!("action {} is declared more than once", action.name),
            ));
        }
        let mut seen = BTreeSet::new();
        for p in &action.params {
            if !seen.insert(p.name.as_str()) {
                out.push(Diagnostic::new(
                    DiagnosticKind::DuplicateVariable,
                    &element,
                    format!("duplicate variable {} in action {}", p.name, action.name),
                ));
            }
            if !domain.types.contains(&p.ty) {
                out.push(Diagnostic::new(
                    DiagnosticKind::UndeclaredType,
                    &element,
                    format!("undeclared type {} in action {}", p.ty, action.name),
                ));
            }
        }
        for atom in action.atoms() {
            check_atom(domain, action, atom, &mut out);
        }
        for atom in action.add.intersection(&action.del) {
            out.push(Diagnostic::new(
                DiagnosticKind::AddDeleteConflict,
                &element,
                format!("{atom} is both added and deleted by action {}", action.name),
            ));
        }
    }
    out
}

/// Binds `problem` to `domain`. Objects whose type the domain lacks fall
/// back to `object`; init/goal atoms must name existing predicates at the
/// declared arity and only declared objects.
pub fn rebind_problem(problem: &Problem, domain: &Domain) -> Result<Problem, Vec<Diagnostic>> {
    let mut out = Vec::new();
    let objects = problem
        .objects
        .iter()
        .map(|(o, t)| {
            let ty = if domain.types.contains(t) {
                t.clone()
            } else {
                OBJECT.to_string()
            };
            (o.clone(), ty)
        })
        .collect::<BTreeMap<_, _>>();

    let mut reported = BTreeSet::new();
    for atom in problem.init.iter().chain(&problem.goal) {
        match domain.predicate(&atom.predicate) {
            None => {
                if reported.insert((atom.predicate.clone(), atom.arity())) {
                    out.push(Diagnostic::new(
                        DiagnosticKind::MissingPredicate,
                        format!("predicate {}", atom.predicate),
                        format!("missing predicate {}/{}", atom.predicate, atom.arity()),
                    ));
                }
            }
            Some(decl) if decl.arity() != atom.arity() => {
                if reported.insert((atom.predicate.clone(), atom.arity())) {
                    out.push(Diagnostic::new(
                        DiagnosticKind::ArityMismatch,
                        format!("predicate {}", atom.predicate),
                        format!(
                            "arity mismatch: problem uses {}/{}, domain declares {}/{}",
                            atom.predicate,
                            atom.arity(),
                            decl.name,
                            decl.arity()
                        ),
                    ));
                }
            }
            Some(_) => {}
        }
        for arg in &atom.args {
            if !objects.contains_key(arg) && reported.insert((arg.clone(), usize::MAX)) {
                out.push(Diagnostic::new(
                    DiagnosticKind::UndeclaredObject,
                    format!("object {arg}"),
                    format!("undeclared object {arg} in {atom}"),
                ));
            }
        }
    }

    if out.is_empty() {
        Ok(Problem {
            name: problem.name.clone(),
            domain_name: domain.name.clone(),
            objects,
            init: problem.init.clone(),
            goal: problem.goal.clone(),
        })
    } else {
        Err(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vehicles() -> TypeHierarchy {
        let mut h = TypeHierarchy::new();
        h.declare("vehicle", None);
        h.declare("car", Some("vehicle"));
        h.declare("truck", Some("vehicle"));
        h.declare("block", None);
        h
    }

    #[test]
    fn type_leq_basics() {
        let h = vehicles();
        assert!(h.type_leq("block", "block").unwrap());
        assert!(h.type_leq("block", OBJECT).unwrap());
        assert!(h.type_leq("car", "vehicle").unwrap());
        assert!(!h.type_leq("vehicle", "car").unwrap());
        assert!(!h.type_leq("car", "truck").unwrap());
        assert_eq!(h.type_leq("boat", OBJECT), Err(UnknownType("boat".into())));
    }

    #[test]
    fn cycle_is_reported() {
        let mut h = TypeHierarchy::new();
        h.declare("a", Some("b"));
        h.declare("b", Some("a"));
        let mut d = Domain::new("d");
        d.types = h;
        let diags = check_domain_wellformed(&d);
        assert!(diags.iter().any(|d| d.kind == DiagnosticKind::CyclicType));
    }

    #[test]
    fn add_delete_conflict() {
        let mut d = Domain::new("d");
        d.add_predicate(PredicateDecl {
            name: "p".into(),
            params: vec![],
        });
        d.actions.push(ActionSchema {
            name: "flip".into(),
            params: vec![],
            pre: BTreeSet::new(),
            add: [Atom::new("p", Vec::<&str>::new())].into(),
            del: [Atom::new("p", Vec::<&str>::new())].into(),
        });
        let diags = check_domain_wellformed(&d);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].kind, DiagnosticKind::AddDeleteConflict);
    }

    #[test]
    fn rebind_maps_unknown_types_to_object() {
        let mut d = Domain::new("d");
        d.add_predicate(PredicateDecl {
            name: "at".into(),
            params: vec![TypedParam::new("?x", OBJECT)],
        });
        let p = Problem {
            name: "p".into(),
            domain_name: "d".into(),
            objects: [("a".to_string(), "thing".to_string())].into(),
            init: [Atom::new("at", ["a"])].into(),
            goal: [Atom::new("at", ["a"])].into(),
        };
        let bound = rebind_problem(&p, &d).unwrap();
        assert_eq!(bound.objects["a"], OBJECT);
    }

    #[test]
    fn rebind_reports_undeclared_object() {
        let mut d = Domain::new("d");
        d.add_predicate(PredicateDecl {
            name: "at".into(),
            params: vec![TypedParam::new("?x", OBJECT)],
        });
        let p = Problem {
            name: "p".into(),
            domain_name: "d".into(),
            objects: BTreeMap::new(),
            init: [Atom::new("at", ["ghost"])].into(),
            goal: [Atom::new("at", ["ghost"])].into(),
        };
        let diags = rebind_problem(&p, &d).unwrap_err();
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].kind, DiagnosticKind::UndeclaredObject);
    }
}
