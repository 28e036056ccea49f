//! Attribute-based policy rules and update procedures.

mod ast;
mod eval;
mod parse;
mod update;

pub use ast::{Aggregator, ArithOp, CmpOp, PolicyRule, Role, RuleClass, Source, Term};
pub use eval::{decide, eval_rule, eval_term, Decision, EvalContext, EvalError};
pub use parse::{check_rule, parse_policy, parse_update, PolicyError};
pub use update::{
    apply_update, apply_update_unchecked, domain_violation, Assignment, UpdateProc, UpdateSpec,
};
