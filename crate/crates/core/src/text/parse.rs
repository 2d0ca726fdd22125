//! PDDL domain, problem and plan readers for the typed STRIPS fragment.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::sexpr::{end_pos, read_all, read_one, Pos, SExpr, SourceError};
use crate::pddl::{
    check_domain_wellformed, ActionSchema, Atom, Domain, Plan, PlanStep, PredicateDecl, Problem, Requirement,
    TypeHierarchy, TypedParam, OBJECT,
};

fn err(at: &SExpr, message: impl Into<String>) -> SourceError {
    let snippet: String = at.to_string().chars().take(40).collect();
    SourceError::new(at.pos, message, snippet)
}

fn expect_list<'a>(e: &'a SExpr, what: &str) -> Result<&'a [SExpr], SourceError> {
    e.list().ok_or_else(|| err(e, format!("expected a list for {what}")))
}

fn expect_symbol<'a>(e: &'a SExpr, what: &str) -> Result<&'a str, SourceError> {
    e.symbol().ok_or_else(|| err(e, format!("expected a name for {what}")))
}

/// Parses `a b - t c` into `[(a, t), (b, t), (c, object)]`.
fn typed_list(items: &[SExpr], what: &str) -> Result<Vec<(String, String)>, SourceError> {
    let mut out = Vec::new();
    let mut pending: Vec<String> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let sym = expect_symbol(&items[i], what)?;
        if sym == "-" {
            let Some(ty) = items.get(i + 1) else {
                return Err(err(&items[i], format!("missing type after '-' in {what}")));
            };
            if ty.head() == Some("either") {
                return Err(err(ty, "either-types are not supported"));
            }
            let ty = expect_symbol(ty, what)?;
            if pending.is_empty() {
                return Err(err(&items[i], format!("'-' without names in {what}")));
            }
            out.extend(pending.drain(..).map(|n| (n, ty.to_string())));
            i += 2;
        } else {
            pending.push(sym.to_string());
            i += 1;
        }
    }
    out.extend(pending.into_iter().map(|n| (n, OBJECT.to_string())));
    Ok(out)
}

fn atom(e: &SExpr) -> Result<Atom, SourceError> {
    let items = expect_list(e, "an atom")?;
    let Some(first) = items.first() else {
        return Err(err(e, "empty atom"));
    };
    let pred = expect_symbol(first, "a predicate")?;
    if pred == "=" {
        return Err(err(e, "equality is not supported in typed STRIPS"));
    }
    if matches!(
        pred,
        "and" | "or" | "not" | "imply" | "forall" | "exists" | "when" | "increase" | "decrease"
    ) {
        return Err(err(
            e,
            format!("unexpected connective '{pred}' where an atom was expected"),
        ));
    }
    let args = items[1..]
        .iter()
        .map(|a| {
            if a.head() == Some("either") || a.list().is_some() {
                Err(err(a, "atom arguments must be names"))
            } else {
                Ok(a.symbol().unwrap_or_default().to_string())
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Atom {
        predicate: pred.to_string(),
        args,
    })
}

/// Conjunctions of positive atoms: `(and ...)`, a single atom, or `()`.
fn conjunction(e: &SExpr, what: &str) -> Result<Vec<Atom>, SourceError> {
    let items = expect_list(e, what)?;
    match e.head() {
        None if items.is_empty() => Ok(Vec::new()),
        Some("and") => {
            let mut out = Vec::new();
            for it in &items[1..] {
                out.extend(conjunction(it, what)?);
            }
            Ok(out)
        }
        Some("not") => Err(err(e, format!("negative literals are not supported in {what}"))),
        Some(c @ ("or" | "imply" | "forall" | "exists" | "when")) => {
            Err(err(e, format!("'{c}' is not supported in {what}")))
        }
        _ => Ok(vec![atom(e)?]),
    }
}

/// Effects: `(and lit*)` where a literal is an atom or `(not atom)`.
fn effect(e: &SExpr, add: &mut Vec<Atom>, del: &mut Vec<Atom>) -> Result<(), SourceError> {
    let items = expect_list(e, "an effect")?;
    match e.head() {
        None if items.is_empty() => Ok(()),
        Some("and") => {
            for it in &items[1..] {
                effect(it, add, del)?;
            }
            Ok(())
        }
        Some("not") => {
            if items.len() != 2 {
                return Err(err(e, "'not' takes exactly one atom"));
            }
            del.push(atom(&items[1])?);
            Ok(())
        }
        Some(c @ ("when" | "forall" | "increase" | "decrease" | "or")) => {
            Err(err(e, format!("'{c}' is not supported in effects")))
        }
        _ => {
            add.push(atom(e)?);
            Ok(())
        }
    }
}

fn check_action_args(action: &ActionSchema, at: &SExpr) -> Result<(), SourceError> {
    for a in action.atoms() {
        for arg in &a.args {
            if !arg.starts_with('?') {
                return Err(err(
                    at,
                    format!("constant {arg} in {a} is not supported; use a parameter"),
                ));
            }
        }
    }
    Ok(())
}

/// Parses a standalone `(:action ...)` form. Only syntax is checked here.
pub fn parse_action_form(e: &SExpr) -> Result<ActionSchema, SourceError> {
    let items = expect_list(e, "an action")?;
    if e.head() != Some(":action") {
        return Err(err(e, "expected (:action ...)"));
    }
    let Some(name) = items.get(1) else {
        return Err(err(e, "action without a name"));
    };
    let name = expect_symbol(name, "the action name")?.to_string();
    let mut params = Vec::new();
    let mut pre = Vec::new();
    let mut add = Vec::new();
    let mut del = Vec::new();
    let mut i = 2;
    while i < items.len() {
        let key = expect_symbol(&items[i], "an action field")?;
        let Some(value) = items.get(i + 1) else {
            return Err(err(&items[i], format!("missing value for {key}")));
        };
        match key {
            ":parameters" => {
                params = typed_list(expect_list(value, ":parameters")?, ":parameters")?
                    .into_iter()
                    .map(|(n, t)| {
                        if n.starts_with('?') {
                            Ok(TypedParam::new(n, t))
                        } else {
                            Err(err(value, format!("parameter {n} must start with '?'")))
                        }
                    })
                    .collect::<Result<_, _>>()?;
            }
            ":precondition" => pre = conjunction(value, "preconditions")?,
            ":effect" => effect(value, &mut add, &mut del)?,
            other => return Err(err(&items[i], format!("unknown action field {other}"))),
        }
        i += 2;
    }
    let action = ActionSchema {
        name,
        params,
        pre: pre.into_iter().collect(),
        add: add.into_iter().collect(),
        del: del.into_iter().collect(),
    };
    check_action_args(&action, e)?;
    Ok(action)
}

/// Parses a `(:predicates ...)` body entry list into declarations.
pub fn predicate_decls(items: &[SExpr]) -> Result<Vec<(PredicateDecl, Pos)>, SourceError> {
    let mut out = Vec::new();
    for p in items {
        let parts = expect_list(p, "a predicate declaration")?;
        let Some(name) = parts.first() else {
            return Err(err(p, "empty predicate declaration"));
        };
        let name = expect_symbol(name, "a predicate name")?.to_string();
        let params = typed_list(&parts[1..], "a predicate declaration")?
            .into_iter()
            .map(|(n, t)| TypedParam::new(n, t))
            .collect();
        out.push((PredicateDecl { name, params }, p.pos));
    }
    Ok(out)
}

/// Domain text to a well-formed [`Domain`]. Well-formedness diagnostics are
/// reported as a [`SourceError`] located at the offending element.
pub fn parse_domain(text: &str) -> Result<Domain, SourceError> {
    let root = read_one(text)?;
    let items = expect_list(&root, "a domain")?;
    if root.head() != Some("define") {
        return Err(err(&root, "expected (define (domain ...) ...)"));
    }
    let header = items.get(1).ok_or_else(|| err(&root, "missing (domain NAME)"))?;
    let header_items = expect_list(header, "(domain NAME)")?;
    if header.head() != Some("domain") || header_items.len() != 2 {
        return Err(err(header, "expected (domain NAME)"));
    }
    let mut domain = Domain::new(expect_symbol(&header_items[1], "the domain name")?);
    domain.requirements.clear();

    let mut spans: HashMap<String, Pos> = HashMap::new();
    for section in &items[2..] {
        let body = expect_list(section, "a domain section")?;
        match section.head() {
            Some(":requirements") => {
                for r in &body[1..] {
                    let kw = expect_symbol(r, "a requirement")?;
                    match Requirement::from_keyword(kw) {
                        Some(req) => {
                            domain.requirements.insert(req);
                        }
                        None => return Err(err(r, format!("unsupported requirement {kw}"))),
                    }
                }
            }
            Some(":types") => {
                for (name, parent) in typed_list(&body[1..], ":types")? {
                    if name == OBJECT {
                        continue;
                    }
                    spans.insert(format!("type {name}"), section.pos);
                    domain.types.declare(name, Some(&parent));
                }
            }
            Some(":predicates") => {
                for (decl, pos) in predicate_decls(&body[1..])? {
                    if let Some(existing) = domain.predicate(&decl.name) {
                        let msg = if existing.arity() != decl.arity() {
                            format!("arity conflict: predicate {} declared twice", decl.name)
                        } else {
                            format!("duplicate predicate {}", decl.name)
                        };
                        return Err(SourceError::new(pos, msg, decl.to_string()));
                    }
                    spans.insert(format!("predicate {}", decl.name), pos);
                    domain.add_predicate(decl);
                }
            }
            Some(":action") => {
                let action = parse_action_form(section)?;
                spans.insert(format!("action {}", action.name), section.pos);
                domain.actions.push(action);
            }
            Some(other) if other.starts_with(':') => {
                return Err(err(section, format!("unknown section {other}")));
            }
            _ => return Err(err(section, "expected a domain section such as (:action ...)")),
        }
    }

    if let Some(d) = check_domain_wellformed(&domain).into_iter().next() {
        let pos = spans.get(&d.element).copied().unwrap_or(root.pos);
        return Err(SourceError::new(pos, d.to_string(), d.element.clone()));
    }
    Ok(domain)
}

/// Structural problem parse; predicate existence is checked on rebind.
pub fn parse_problem(text: &str) -> Result<Problem, SourceError> {
    let root = read_one(text)?;
    let items = expect_list(&root, "a problem")?;
    if root.head() != Some("define") {
        return Err(err(&root, "expected (define (problem ...) ...)"));
    }
    let header = items.get(1).ok_or_else(|| err(&root, "missing (problem NAME)"))?;
    let header_items = expect_list(header, "(problem NAME)")?;
    if header.head() != Some("problem") || header_items.len() != 2 {
        return Err(err(header, "expected (problem NAME)"));
    }
    let name = expect_symbol(&header_items[1], "the problem name")?.to_string();
    let mut domain_name = None;
    let mut objects = BTreeMap::new();
    let mut init = BTreeSet::new();
    let mut goal = None;

    for section in &items[2..] {
        let body = expect_list(section, "a problem section")?;
        match section.head() {
            Some(":domain") => {
                let d = body.get(1).ok_or_else(|| err(section, "missing domain name"))?;
                domain_name = Some(expect_symbol(d, "the domain name")?.to_string());
            }
            Some(":requirements") => {
                for r in &body[1..] {
                    let kw = expect_symbol(r, "a requirement")?;
                    if Requirement::from_keyword(kw).is_none() {
                        return Err(err(r, format!("unsupported requirement {kw}")));
                    }
                }
            }
            Some(":objects") => {
                for (o, t) in typed_list(&body[1..], ":objects")? {
                    if objects.insert(o.clone(), t).is_some() {
                        return Err(err(section, format!("object {o} declared twice")));
                    }
                }
            }
            Some(":init") => {
                for a in &body[1..] {
                    let at = atom(a)?;
                    if let Some(v) = at.args.iter().find(|x| x.starts_with('?')) {
                        return Err(err(a, format!("variable {v} in initial state")));
                    }
                    init.insert(at);
                }
            }
            Some(":goal") => {
                let g = body.get(1).ok_or_else(|| err(section, "empty goal"))?;
                if body.len() > 2 {
                    return Err(err(&body[2], "goal takes a single formula"));
                }
                let atoms = conjunction(g, "the goal")?;
                if atoms.is_empty() {
                    return Err(err(section, "empty goal"));
                }
                goal = Some(atoms.into_iter().collect::<BTreeSet<_>>());
            }
            Some(other) if other.starts_with(':') => {
                return Err(err(section, format!("unknown section {other}")));
            }
            _ => return Err(err(section, "expected a problem section")),
        }
    }

    let end = end_pos(text);
    Ok(Problem {
        name,
        domain_name: domain_name.ok_or_else(|| SourceError::new(end, "missing (:domain NAME)", ""))?,
        objects,
        init,
        goal: goal.ok_or_else(|| SourceError::new(end, "empty goal", ""))?,
    })
}

/// One grounded action per non-comment line.
pub fn parse_plan(text: &str) -> Result<Plan, SourceError> {
    let mut steps = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split(';').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let col = raw.find(|c: char| !c.is_whitespace()).unwrap_or(0) + 1;
        let at = Pos {
            line: lineno,
            column: col,
        };
        let bad = |m: &str| SourceError::new(at, m.to_string(), line.to_string());
        if !line.starts_with('(') || !line.ends_with(')') {
            return Err(bad("expected a parenthesized action such as (name arg1 ...)"));
        }
        let forms = read_all(line).map_err(|e| bad(&e.message))?;
        let [form] = forms.as_slice() else {
            return Err(bad("expected exactly one action per line"));
        };
        let items = form.list().ok_or_else(|| bad("expected an action"))?;
        let mut symbols = items.iter().map(SExpr::symbol);
        let Some(Some(name)) = symbols.next() else {
            return Err(bad("action name missing"));
        };
        let args = symbols
            .map(|s| s.map(str::to_string).ok_or_else(|| bad("nested list in plan step")))
            .collect::<Result<Vec<_>, _>>()?;
        steps.push(PlanStep {
            name: name.to_string(),
            args,
        });
    }
    Ok(Plan { steps })
}

/// Parses a bare plan-step form such as `(stack a b)`.
pub fn parse_step(e: &SExpr) -> Result<PlanStep, SourceError> {
    let items = expect_list(e, "an action")?;
    let name = items
        .first()
        .and_then(SExpr::symbol)
        .ok_or_else(|| err(e, "action name missing"))?;
    let args = items[1..]
        .iter()
        .map(|a| expect_symbol(a, "an action argument").map(str::to_string))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PlanStep {
        name: name.to_string(),
        args,
    })
}

/// Types-hierarchy helper used by the construction response reader:
/// lines of `name` or `name - parent`.
pub fn type_decl_line(line: &str) -> Result<Vec<(String, String)>, SourceError> {
    let forms = read_all(line)?;
    typed_list(&forms, "a type declaration")
}

/// Builds a hierarchy from declared `(name, parent)` pairs.
pub fn hierarchy_from(pairs: &[(String, String)]) -> TypeHierarchy {
    let mut h = TypeHierarchy::new();
    for (n, p) in pairs {
        h.declare(n.clone(), Some(p));
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unsupported_requirement() {
        let e = parse_domain("(define (domain d) (:requirements :adl))").unwrap_err();
        assert_eq!(e.message, "unsupported requirement :adl");
        assert_eq!((e.line, e.column), (1, 35));
    }

    #[test]
    fn unknown_section() {
        let e = parse_domain("(define (domain d) (:constants a b))").unwrap_err();
        assert!(e.message.contains("unknown section :constants"));
    }

    #[test]
    fn negative_precondition_rejected() {
        let text = "(define (domain d) (:predicates (p))
          (:action a :parameters () :precondition (not (p)) :effect (p)))";
        let e = parse_domain(text).unwrap_err();
        assert!(e.message.contains("negative"), "{e}");
    }

    #[test]
    fn equality_rejected() {
        let text = "(define (domain d) (:predicates (p ?x))
          (:action a :parameters (?x ?y) :precondition (= ?x ?y) :effect (p ?x)))";
        let e = parse_domain(text).unwrap_err();
        assert!(e.message.contains("equality"), "{e}");
    }

    #[test]
    fn wellformedness_error_points_at_action() {
        let text = "(define (domain d)\n (:predicates (p ?x))\n (:action a :parameters (?x) :precondition (p ?z) :effect (p ?x)))";
        let e = parse_domain(text).unwrap_err();
        assert!(e.message.starts_with("undeclared variable"), "{e}");
        assert_eq!((e.line, e.column), (3, 2));
    }

    #[test]
    fn typed_lists() {
        let forms = read_all("a b - t c").unwrap();
        let l = typed_list(&forms, "x").unwrap();
        assert_eq!(
            l,
            vec![
                ("a".into(), "t".into()),
                ("b".into(), "t".into()),
                ("c".into(), OBJECT.into())
            ]
        );
    }

    #[test]
    fn plan_lines() {
        let p = parse_plan("; header\n(pick-up a)\n\n(STACK a b) ; done\n").unwrap();
        assert_eq!(p.steps.len(), 2);
        assert_eq!(p.steps[1], PlanStep::new("stack", ["a", "b"]));
        assert!(parse_plan("").unwrap().is_empty());
        let e = parse_plan("pick-up a").unwrap_err();
        assert_eq!(e.line, 1);
        let e = parse_plan("(a)\n(b (c))").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn empty_goal() {
        let text = "(define (problem p) (:domain d) (:objects a) (:init) (:goal (and)))";
        assert_eq!(parse_problem(text).unwrap_err().message, "empty goal");
    }
}
