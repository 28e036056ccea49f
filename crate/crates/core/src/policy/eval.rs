//! Evaluation of checked rules against a state.

use thiserror::Error;

use super::ast::{Aggregator, ArithOp, PolicyRule, Role, Source, Term};
use crate::model::{ChooseMode, EntityId, SystemConfig, Use, Value, ValueType, World};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("choose selected no entity")]
    SelectEmpty,
    #[error("choose selected {0} entities")]
    SelectAmbiguous(usize),
    #[error("cannot compare {left} with {right}")]
    TypeMismatch { left: ValueType, right: ValueType },
    #[error("entity '{entity}' has no attribute '{attr}'")]
    MissingAttribute { entity: String, attr: String },
    #[error("{0} over an empty set")]
    EmptyAggregate(&'static str),
    #[error("integer overflow")]
    Overflow,
    #[error("'{attr}' := {value} lies outside the declared domain")]
    DomainViolation { attr: String, value: String },
    #[error("no use under decision")]
    NoCurrentUse,
}

impl EvalError {
    /// Errors after which the rule is taken as false rather than reported.
    pub fn is_fail_safe(&self) -> bool {
        matches!(self, EvalError::SelectEmpty | EvalError::EmptyAggregate(_))
    }
}

impl From<crate::model::TypeMismatch> for EvalError {
    fn from(e: crate::model::TypeMismatch) -> Self {
        EvalError::TypeMismatch {
            left: e.left,
            right: e.right,
        }
    }
}

/// The request being decided and the state it is decided in.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub subject: EntityId,
    pub action: EntityId,
    pub object: EntityId,
    pub current: Option<&'a Use>,
    pub world: &'a World,
    pub config: &'a SystemConfig,
}

impl<'a> EvalContext<'a> {
    /// Context for deciding the use `u` in `world`.
    pub fn for_use(u: &'a Use, world: &'a World, config: &'a SystemConfig) -> Self {
        EvalContext {
            subject: u.key.sid,
            action: u.key.aid,
            object: u.key.oid,
            current: Some(u),
            world,
            config,
        }
    }
}

/// Result of a policy decision. A fail-safe error denies and is kept as a
/// diagnostic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub permit: bool,
    pub diagnostic: Option<EvalError>,
}

/// Decides a rule; fail-safe errors become a denial, others are returned.
pub fn decide(rule: &PolicyRule, ctx: &EvalContext<'_>) -> Result<Decision, EvalError> {
    match eval_rule(rule, ctx) {
        Ok(permit) => Ok(Decision {
            permit,
            diagnostic: None,
        }),
        Err(e) if e.is_fail_safe() => Ok(Decision {
            permit: false,
            diagnostic: Some(e),
        }),
        Err(e) => Err(e),
    }
}

pub fn eval_rule(rule: &PolicyRule, ctx: &EvalContext<'_>) -> Result<bool, EvalError> {
    Evaluator { ctx, bound: None }.rule(rule)
}

pub fn eval_term(term: &Term, ctx: &EvalContext<'_>) -> Result<Value, EvalError> {
    Evaluator { ctx, bound: None }.term(term)
}

#[derive(Clone, Copy)]
enum Binding<'a> {
    Entity(EntityId),
    Use(&'a Use),
}

/// Raised internally when the bound variable lacks an attribute; the
/// enclosing filter treats the candidate as a non-match.
enum Failure {
    Unbound,
    Eval(EvalError),
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        Failure::Eval(e)
    }
}

struct Evaluator<'c, 'a> {
    ctx: &'c EvalContext<'a>,
    bound: Option<Binding<'a>>,
}

impl<'a> Evaluator<'_, 'a> {
    fn rule(&self, rule: &PolicyRule) -> Result<bool, EvalError> {
        self.rule_f(rule).map_err(|f| match f {
            Failure::Eval(e) => e,
            Failure::Unbound => EvalError::MissingAttribute {
                entity: "x".into(),
                attr: String::new(),
            },
        })
    }

    fn term(&self, term: &Term) -> Result<Value, EvalError> {
        self.term_f(term).map_err(|f| match f {
            Failure::Eval(e) => e,
            Failure::Unbound => EvalError::MissingAttribute {
                entity: "x".into(),
                attr: String::new(),
            },
        })
    }

    fn rule_f(&self, rule: &PolicyRule) -> Result<bool, Failure> {
        Ok(match rule {
            PolicyRule::Const(b) => *b,
            PolicyRule::And(a, b) => self.rule_f(a)? && self.rule_f(b)?,
            PolicyRule::Or(a, b) => self.rule_f(a)? || self.rule_f(b)?,
            PolicyRule::Not(a) => !self.rule_f(a)?,
            PolicyRule::Compare { op, lhs, rhs } => {
                let l = self.term_f(lhs)?;
                let r = self.term_f(rhs)?;
                op.holds(l.try_cmp(&r).map_err(EvalError::from)?)
            }
        })
    }

    fn nested(&self, b: Binding<'a>) -> Evaluator<'_, 'a> {
        Evaluator {
            ctx: self.ctx,
            bound: Some(b),
        }
    }

    /// Whether `b` satisfies `filter`; a missing attribute on `b` is a miss.
    fn matches(&self, filter: &PolicyRule, b: Binding<'a>) -> Result<bool, EvalError> {
        match self.nested(b).rule_f(filter) {
            Ok(m) => Ok(m),
            Err(Failure::Unbound) => Ok(false),
            Err(Failure::Eval(e)) => Err(e),
        }
    }

    fn entity_attr(&self, id: EntityId, name: &str) -> Result<Value, EvalError> {
        let e = self.ctx.config.entity(id);
        e.attr(name)
            .cloned()
            .ok_or_else(|| EvalError::MissingAttribute {
                entity: e.name.clone(),
                attr: name.to_string(),
            })
    }

    fn use_field(&self, u: &Use, name: &str) -> Option<Value> {
        Some(match name {
            "sid" => Value::Id(u.key.sid),
            "aid" => Value::Id(u.key.aid),
            "oid" => Value::Id(u.key.oid),
            "st" => Value::token(u.st.as_str()),
            _ => u.attrs.get(self.ctx.config.use_attr_index(name)?)?.clone(),
        })
    }

    fn bound_attr(&self, name: &str) -> Result<Value, Failure> {
        match self.bound {
            Some(Binding::Entity(id)) => self
                .ctx
                .config
                .entity(id)
                .attr(name)
                .cloned()
                .ok_or(Failure::Unbound),
            Some(Binding::Use(u)) => self.use_field(u, name).ok_or(Failure::Unbound),
            None => Err(Failure::Unbound),
        }
    }

    fn select(&self, filter: &PolicyRule) -> Result<EntityId, EvalError> {
        let mut found = None;
        let mut count = 0usize;
        for e in self.ctx.config.entities() {
            if self.matches(filter, Binding::Entity(e.id))? {
                count += 1;
                found.get_or_insert(e.id);
            }
        }
        match (found, count, self.ctx.config.choose_mode()) {
            (None, ..) => Err(EvalError::SelectEmpty),
            (Some(_), n, ChooseMode::Strict) if n > 1 => Err(EvalError::SelectAmbiguous(n)),
            (Some(id), ..) => Ok(id),
        }
    }

    fn aggregate(
        &self,
        agg: Aggregator,
        source: Source,
        filter: &PolicyRule,
        project: Option<&str>,
    ) -> Result<Value, EvalError> {
        let items: Vec<Binding<'a>> = match source {
            Source::Entities => self
                .ctx
                .config
                .entities()
                .iter()
                .map(|e| Binding::Entity(e.id))
                .collect(),
            Source::Uses => self.ctx.world.uses.iter().map(Binding::Use).collect(),
        };
        let mut count = 0i64;
        let mut acc: Option<i64> = None;
        for b in items {
            if !self.matches(filter, b)? {
                continue;
            }
            if agg == Aggregator::Count {
                count += 1;
                continue;
            }
            let name = project.unwrap_or_default();
            let v = match self.nested(b).bound_attr(name) {
                Ok(v) => v,
                Err(Failure::Unbound) => continue,
                Err(Failure::Eval(e)) => return Err(e),
            };
            let v = v.as_int().ok_or(EvalError::TypeMismatch {
                left: v.value_type(),
                right: ValueType::Int,
            })?;
            acc = Some(match (acc, agg) {
                (None, _) => v,
                (Some(a), Aggregator::Sum) => a.checked_add(v).ok_or(EvalError::Overflow)?,
                (Some(a), Aggregator::Min) => a.min(v),
                (Some(a), _) => a.max(v),
            });
        }
        match (agg, acc) {
            (Aggregator::Count, _) => Ok(Value::Int(count)),
            (Aggregator::Sum, None) => Ok(Value::Int(0)),
            (_, Some(v)) => Ok(Value::Int(v)),
            (_, None) => Err(EvalError::EmptyAggregate(agg.as_str())),
        }
    }

    fn term_f(&self, term: &Term) -> Result<Value, Failure> {
        let ctx = self.ctx;
        Ok(match term {
            Term::Const(v) => v.clone(),
            Term::Tick => {
                Value::Int(i64::try_from(ctx.world.tick).map_err(|_| EvalError::Overflow)?)
            }
            Term::Attr { role, name } => match role {
                Role::Subject => self.entity_attr(ctx.subject, name)?,
                Role::Object => self.entity_attr(ctx.object, name)?,
                Role::Action => self.entity_attr(ctx.action, name)?,
                Role::Use => {
                    let u = ctx.current.ok_or(EvalError::NoCurrentUse)?;
                    self.use_field(u, name)
                        .ok_or_else(|| EvalError::MissingAttribute {
                            entity: ctx.config.display_key(&u.key),
                            attr: name.clone(),
                        })?
                }
                Role::Bound => self.bound_attr(name)?,
            },
            Term::Choose(filter) => Value::Id(self.select(filter)?),
            Term::ChosenAttr { select, name } => {
                let id = self.select(select)?;
                self.entity_attr(id, name)?
            }
            Term::Aggregate {
                agg,
                source,
                filter,
                project,
            } => self.aggregate(*agg, *source, filter, project.as_deref())?,
            Term::Arith { op, lhs, rhs } => {
                let l = self.term_f(lhs)?;
                let r = self.term_f(rhs)?;
                let (a, b) = match (l.as_int(), r.as_int()) {
                    (Some(a), Some(b)) => (a, b),
                    _ => {
                        return Err(EvalError::TypeMismatch {
                            left: l.value_type(),
                            right: r.value_type(),
                        }
                        .into())
                    }
                };
                let v = match op {
                    ArithOp::Add => a.checked_add(b),
                    ArithOp::Sub => a.checked_sub(b),
                };
                Value::Int(v.ok_or(EvalError::Overflow)?)
            }
        })
    }
}
