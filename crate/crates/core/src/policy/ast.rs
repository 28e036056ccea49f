use std::fmt;

use crate::model::Value;

/// Whose attribute a term reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Subject,
    Object,
    Action,
    /// The use under decision.
    Use,
    /// The variable bound by `choose` or `aggregate`.
    Bound,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Subject => "subject",
            Role::Object => "object",
            Role::Action => "action",
            Role::Use => "use",
            Role::Bound => "x",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Aggregator {
    Count,
    Sum,
    Min,
    Max,
}

impl Aggregator {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregator::Count => "count",
            Aggregator::Sum => "sum",
            Aggregator::Min => "min",
            Aggregator::Max => "max",
        }
    }
}

/// The set an aggregate ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Entities,
    Uses,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Entities => "entities",
            Source::Uses => "uses",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn as_str(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "/=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }

    pub(crate) fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Const(Value),
    /// Attribute of a direct entity, of the use under decision, or of the
    /// bound variable.
    Attr {
        role: Role,
        name: String,
    },
    /// The single entity satisfying a predicate over `x`, as an identity.
    Choose(Box<PolicyRule>),
    /// Attribute of the entity selected by `choose`.
    ChosenAttr {
        select: Box<PolicyRule>,
        name: String,
    },
    Aggregate {
        agg: Aggregator,
        source: Source,
        filter: Box<PolicyRule>,
        project: Option<String>,
    },
    Arith {
        op: ArithOp,
        lhs: Box<Term>,
        rhs: Box<Term>,
    },
    /// The logical clock; only valid inside update procedures.
    Tick,
}

impl Term {
    pub fn attr(role: Role, name: &str) -> Term {
        Term::Attr {
            role,
            name: name.to_string(),
        }
    }

    pub(crate) fn reads_tick(&self) -> bool {
        match self {
            Term::Tick => true,
            Term::Const(_) | Term::Attr { .. } => false,
            Term::Choose(r) | Term::ChosenAttr { select: r, .. } => r.reads_tick(),
            Term::Aggregate { filter, .. } => filter.reads_tick(),
            Term::Arith { lhs, rhs, .. } => lhs.reads_tick() || rhs.reads_tick(),
        }
    }

    fn is_direct(&self) -> bool {
        match self {
            Term::Const(_) => true,
            Term::Attr { role, .. } => {
                matches!(role, Role::Subject | Role::Object | Role::Action)
            }
            Term::Arith { lhs, rhs, .. } => lhs.is_direct() && rhs.is_direct(),
            _ => false,
        }
    }

    fn has_aggregate(&self) -> bool {
        match self {
            Term::Aggregate { .. } => true,
            Term::Choose(r) | Term::ChosenAttr { select: r, .. } => r.has_aggregate(),
            Term::Arith { lhs, rhs, .. } => lhs.has_aggregate() || rhs.has_aggregate(),
            _ => false,
        }
    }
}

/// A boolean policy expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicyRule {
    Const(bool),
    Compare { op: CmpOp, lhs: Term, rhs: Term },
    And(Box<PolicyRule>, Box<PolicyRule>),
    Or(Box<PolicyRule>, Box<PolicyRule>),
    Not(Box<PolicyRule>),
}

/// Category of a rule by where its parameters come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleClass {
    /// Reads only the direct entities and constants.
    Direct,
    /// Reaches other entities or the use set through a selection.
    Indirect,
    /// Aggregates over a selected set.
    ComplexIndirect,
}

impl PolicyRule {
    pub fn compare(op: CmpOp, lhs: Term, rhs: Term) -> PolicyRule {
        PolicyRule::Compare { op, lhs, rhs }
    }

    pub fn and(a: PolicyRule, b: PolicyRule) -> PolicyRule {
        PolicyRule::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: PolicyRule, b: PolicyRule) -> PolicyRule {
        PolicyRule::Or(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: PolicyRule) -> PolicyRule {
        PolicyRule::Not(Box::new(a))
    }

    pub fn class(&self) -> RuleClass {
        if self.has_aggregate() {
            RuleClass::ComplexIndirect
        } else if self.is_direct() {
            RuleClass::Direct
        } else {
            RuleClass::Indirect
        }
    }

    pub(crate) fn reads_tick(&self) -> bool {
        match self {
            PolicyRule::Const(_) => false,
            PolicyRule::Compare { lhs, rhs, .. } => lhs.reads_tick() || rhs.reads_tick(),
            PolicyRule::And(a, b) | PolicyRule::Or(a, b) => a.reads_tick() || b.reads_tick(),
            PolicyRule::Not(a) => a.reads_tick(),
        }
    }

    fn is_direct(&self) -> bool {
        match self {
            PolicyRule::Const(_) => true,
            PolicyRule::Compare { lhs, rhs, .. } => lhs.is_direct() && rhs.is_direct(),
            PolicyRule::And(a, b) | PolicyRule::Or(a, b) => a.is_direct() && b.is_direct(),
            PolicyRule::Not(a) => a.is_direct(),
        }
    }

    fn has_aggregate(&self) -> bool {
        match self {
            PolicyRule::Const(_) => false,
            PolicyRule::Compare { lhs, rhs, .. } => lhs.has_aggregate() || rhs.has_aggregate(),
            PolicyRule::And(a, b) | PolicyRule::Or(a, b) => a.has_aggregate() || b.has_aggregate(),
            PolicyRule::Not(a) => a.has_aggregate(),
        }
    }
}
