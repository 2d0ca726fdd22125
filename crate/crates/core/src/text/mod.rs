//! Reading and writing the typed-STRIPS PDDL subset.

mod extract;
mod parse;
mod print;
mod sexpr;

pub use extract::{extract_pddl_block, fenced_blocks, Fence};
pub use parse::{
    hierarchy_from, parse_action_form, parse_domain, parse_plan, parse_problem, parse_step, predicate_decls,
    type_decl_line,
};
pub use print::{print_action, print_domain, print_plan, print_problem};
pub use sexpr::{end_pos, read_all, read_one, Pos, SExpr, SExprKind, SourceError};
