//! In-memory typed STRIPS domains, problems and plans.

mod model;

pub use model::{
    check_domain_wellformed, rebind_problem, ActionSchema, Atom, Diagnostic, DiagnosticKind, Domain, Plan, PlanStep,
    PredicateDecl, Problem, Requirement, TypeHierarchy, TypedParam, UnknownType, OBJECT,
};
