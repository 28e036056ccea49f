//! S-expression syntax for rules and update procedures, plus the static
//! checker that resolves attribute names and literal identities.
//!
//! ```text
//! RULE := true | false | (and RULE RULE..) | (or RULE RULE..) | (not RULE)
//!       | (CMP TERM TERM)
//! CMP  := = | /= | < | <= | > | >=
//! TERM := integer | "token" | (attr ROLE name) | (attr (choose RULE) name)
//!       | (choose RULE) | (aggregate AGG SRC RULE [name])
//!       | (+ TERM TERM) | (- TERM TERM) | tick
//! ROLE := subject | object | action | use | x
//! AGG  := count | sum | min | max
//! SRC  := entities | uses
//! ```
//!
//! `tick` is accepted only in update procedures.

use thiserror::Error;

use super::ast::{Aggregator, ArithOp, CmpOp, PolicyRule, Role, Source, Term};
use super::update::{Assignment, UpdateProc, UpdateSpec};
use crate::model::{EntityKind, SystemConfig, UseStatus, Value, ValueType};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown attribute '{0}'")]
    UnknownAttribute(String),
    #[error("'{op}' cannot relate {left} and {right}")]
    TypeMismatch {
        op: String,
        left: ValueType,
        right: ValueType,
    },
    #[error("unknown entity '{0}'")]
    UnknownEntity(String),
    #[error("'x' used outside choose/aggregate")]
    UnboundVariable,
    #[error("'tick' is only available in update procedures")]
    TickOutsideUpdate,
}

fn syntax(position: usize, message: impl Into<String>) -> PolicyError {
    PolicyError::Syntax {
        position,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum SExpr {
    Atom(String, usize),
    Str(String, usize),
    Int(i64, usize),
    List(Vec<SExpr>, usize),
}

impl SExpr {
    fn pos(&self) -> usize {
        match self {
            SExpr::Atom(_, p) | SExpr::Str(_, p) | SExpr::Int(_, p) | SExpr::List(_, p) => *p,
        }
    }

    fn atom(&self) -> Option<&str> {
        match self {
            SExpr::Atom(a, _) => Some(a),
            _ => None,
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn expr(&mut self) -> Result<SExpr, PolicyError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            None => Err(syntax(start, "unexpected end of input")),
            Some('(') => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        None => return Err(syntax(self.pos, "missing ')'")),
                        Some(')') => {
                            self.pos += 1;
                            return Ok(SExpr::List(items, start));
                        }
                        Some(_) => items.push(self.expr()?),
                    }
                }
            }
            Some(')') => Err(syntax(start, "unexpected ')'")),
            Some('"') => {
                self.pos += 1;
                let mut text = String::new();
                loop {
                    let c = self
                        .peek()
                        .ok_or_else(|| syntax(start, "unterminated string"))?;
                    self.pos += c.len_utf8();
                    match c {
                        '"' => return Ok(SExpr::Str(text, start)),
                        '\\' => {
                            let e = self
                                .peek()
                                .ok_or_else(|| syntax(start, "unterminated string"))?;
                            self.pos += e.len_utf8();
                            text.push(e);
                        }
                        c => text.push(c),
                    }
                }
            }
            Some(_) => {
                while let Some(c) = self.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == '"' {
                        break;
                    }
                    self.pos += c.len_utf8();
                }
                let text = &self.src[start..self.pos];
                let is_num = text
                    .strip_prefix('-')
                    .unwrap_or(text)
                    .chars()
                    .all(|c| c.is_ascii_digit())
                    && !text.trim_start_matches('-').is_empty();
                if is_num {
                    text.parse::<i64>()
                        .map(|v| SExpr::Int(v, start))
                        .map_err(|_| syntax(start, "integer out of range"))
                } else {
                    Ok(SExpr::Atom(text.to_string(), start))
                }
            }
        }
    }
}

fn read_one(text: &str) -> Result<SExpr, PolicyError> {
    let mut lx = Lexer { src: text, pos: 0 };
    let e = lx.expr()?;
    lx.skip_ws();
    if lx.pos != text.len() {
        return Err(syntax(lx.pos, "trailing input"));
    }
    Ok(e)
}

fn rule_from(e: &SExpr) -> Result<PolicyRule, PolicyError> {
    match e {
        SExpr::Atom(a, p) => match a.as_str() {
            "true" => Ok(PolicyRule::Const(true)),
            "false" => Ok(PolicyRule::Const(false)),
            _ => Err(syntax(*p, format!("expected a rule, found '{a}'"))),
        },
        SExpr::List(items, p) => {
            let head = items
                .first()
                .and_then(SExpr::atom)
                .ok_or_else(|| syntax(*p, "expected an operator"))?;
            let args = &items[1..];
            match head {
                "and" | "or" => {
                    if args.len() < 2 {
                        return Err(syntax(*p, format!("'{head}' needs at least two rules")));
                    }
                    let mut rules = args.iter().map(rule_from);
                    let first = rules.next().unwrap()?;
                    rules.try_fold(first, |acc, r| {
                        let r = r?;
                        Ok(if head == "and" {
                            PolicyRule::and(acc, r)
                        } else {
                            PolicyRule::or(acc, r)
                        })
                    })
                }
                "not" => match args {
                    [r] => Ok(PolicyRule::not(rule_from(r)?)),
                    _ => Err(syntax(*p, "'not' takes one rule")),
                },
                _ => {
                    let op = match head {
                        "=" => CmpOp::Eq,
                        "/=" => CmpOp::Ne,
                        "<" => CmpOp::Lt,
                        "<=" => CmpOp::Le,
                        ">" => CmpOp::Gt,
                        ">=" => CmpOp::Ge,
                        other => return Err(syntax(*p, format!("unknown operator '{other}'"))),
                    };
                    match args {
                        [l, r] => Ok(PolicyRule::compare(op, term_from(l)?, term_from(r)?)),
                        _ => Err(syntax(*p, format!("'{head}' takes two terms"))),
                    }
                }
            }
        }
        other => Err(syntax(other.pos(), "expected a rule")),
    }
}

fn name_from(e: &SExpr) -> Result<String, PolicyError> {
    e.atom()
        .map(str::to_string)
        .ok_or_else(|| syntax(e.pos(), "expected an attribute name"))
}

fn term_from(e: &SExpr) -> Result<Term, PolicyError> {
    match e {
        SExpr::Int(v, _) => Ok(Term::Const(Value::Int(*v))),
        SExpr::Str(s, _) => Ok(Term::Const(Value::token(s))),
        SExpr::Atom(a, p) => match a.as_str() {
            "tick" => Ok(Term::Tick),
            _ => Err(syntax(*p, format!("expected a term, found '{a}'"))),
        },
        SExpr::List(items, p) => {
            let head = items
                .first()
                .and_then(SExpr::atom)
                .ok_or_else(|| syntax(*p, "expected a term operator"))?;
            let args = &items[1..];
            match (head, args) {
                ("attr", [target, name]) => {
                    let name = name_from(name)?;
                    if let SExpr::List(inner, ip) = target {
                        match (inner.first().and_then(SExpr::atom), &inner[1..]) {
                            (Some("choose"), [r]) => Ok(Term::ChosenAttr {
                                select: Box::new(rule_from(r)?),
                                name,
                            }),
                            _ => Err(syntax(*ip, "expected (choose RULE)")),
                        }
                    } else {
                        let role = match target.atom() {
                            Some("subject") => Role::Subject,
                            Some("object") => Role::Object,
                            Some("action") => Role::Action,
                            Some("use") => Role::Use,
                            Some("x") => Role::Bound,
                            _ => return Err(syntax(target.pos(), "unknown role")),
                        };
                        Ok(Term::Attr { role, name })
                    }
                }
                ("attr", _) => Err(syntax(*p, "'attr' takes a role and a name")),
                ("choose", [r]) => Ok(Term::Choose(Box::new(rule_from(r)?))),
                ("choose", _) => Err(syntax(*p, "'choose' takes one rule")),
                ("aggregate", [agg, src, filter, rest @ ..]) if rest.len() <= 1 => {
                    let agg = match agg.atom() {
                        Some("count") => Aggregator::Count,
                        Some("sum") => Aggregator::Sum,
                        Some("min") => Aggregator::Min,
                        Some("max") => Aggregator::Max,
                        _ => return Err(syntax(agg.pos(), "unknown aggregator")),
                    };
                    let source = match src.atom() {
                        Some("entities") => Source::Entities,
                        Some("uses") => Source::Uses,
                        _ => return Err(syntax(src.pos(), "expected entities or uses")),
                    };
                    Ok(Term::Aggregate {
                        agg,
                        source,
                        filter: Box::new(rule_from(filter)?),
                        project: rest.first().map(name_from).transpose()?,
                    })
                }
                ("aggregate", _) => Err(syntax(*p, "malformed aggregate")),
                ("+" | "-", [l, r]) => Ok(Term::Arith {
                    op: if head == "+" {
                        ArithOp::Add
                    } else {
                        ArithOp::Sub
                    },
                    lhs: Box::new(term_from(l)?),
                    rhs: Box::new(term_from(r)?),
                }),
                (other, _) => Err(syntax(*p, format!("unknown term '{other}'"))),
            }
        }
    }
}

#[derive(Clone, Copy)]
struct Scope {
    bound: Option<Source>,
    allow_tick: bool,
}

struct Checker<'a> {
    config: &'a SystemConfig,
}

impl Checker<'_> {
    fn field_type(&self, scope: Scope, role: Role, name: &str) -> Result<ValueType, PolicyError> {
        let t = match role {
            Role::Subject => self
                .config
                .entity_attr_type(Some(EntityKind::Subject), name),
            Role::Object => self.config.entity_attr_type(Some(EntityKind::Object), name),
            Role::Action => self.config.entity_attr_type(Some(EntityKind::Action), name),
            Role::Use => self.config.use_field_type(name),
            Role::Bound => match scope.bound {
                None => return Err(PolicyError::UnboundVariable),
                Some(Source::Entities) => self.config.entity_attr_type(None, name),
                Some(Source::Uses) => self.config.use_field_type(name),
            },
        };
        t.ok_or_else(|| PolicyError::UnknownAttribute(name.to_string()))
    }

    fn rule(&self, scope: Scope, rule: PolicyRule) -> Result<PolicyRule, PolicyError> {
        Ok(match rule {
            PolicyRule::Const(b) => PolicyRule::Const(b),
            PolicyRule::And(a, b) => PolicyRule::and(self.rule(scope, *a)?, self.rule(scope, *b)?),
            PolicyRule::Or(a, b) => PolicyRule::or(self.rule(scope, *a)?, self.rule(scope, *b)?),
            PolicyRule::Not(a) => PolicyRule::not(self.rule(scope, *a)?),
            PolicyRule::Compare { op, lhs, rhs } => {
                let (lhs, lt) = self.term(scope, lhs)?;
                let (rhs, rt) = self.term(scope, rhs)?;
                let (lhs, lt) = self.coerce(lhs, lt, rt)?;
                let (rhs, rt) = self.coerce(rhs, rt, lt)?;
                let mismatch = || PolicyError::TypeMismatch {
                    op: op.as_str().to_string(),
                    left: lt,
                    right: rt,
                };
                if lt != rt || (op.is_ordering() && lt == ValueType::IdTuple) {
                    return Err(mismatch());
                }
                PolicyRule::Compare { op, lhs, rhs }
            }
        })
    }

    /// A quoted token compared with an identity names an entity.
    fn coerce(
        &self,
        term: Term,
        have: ValueType,
        want: ValueType,
    ) -> Result<(Term, ValueType), PolicyError> {
        match (&term, have, want) {
            (Term::Const(Value::Token(t)), ValueType::Token, ValueType::Id) => {
                let id = self
                    .config
                    .entity_by_name(t)
                    .ok_or_else(|| PolicyError::UnknownEntity(t.to_string()))?;
                Ok((Term::Const(Value::Id(id)), ValueType::Id))
            }
            _ => Ok((term, have)),
        }
    }

    fn term(&self, scope: Scope, term: Term) -> Result<(Term, ValueType), PolicyError> {
        match term {
            Term::Const(v) => {
                let t = v.value_type();
                Ok((Term::Const(v), t))
            }
            Term::Tick => {
                if scope.allow_tick {
                    Ok((Term::Tick, ValueType::Int))
                } else {
                    Err(PolicyError::TickOutsideUpdate)
                }
            }
            Term::Attr { role, name } => {
                let t = self.field_type(scope, role, &name)?;
                Ok((Term::Attr { role, name }, t))
            }
            Term::Choose(r) => {
                let inner = Scope {
                    bound: Some(Source::Entities),
                    ..scope
                };
                Ok((Term::Choose(Box::new(self.rule(inner, *r)?)), ValueType::Id))
            }
            Term::ChosenAttr { select, name } => {
                let inner = Scope {
                    bound: Some(Source::Entities),
                    ..scope
                };
                let t = self
                    .config
                    .entity_attr_type(None, &name)
                    .ok_or_else(|| PolicyError::UnknownAttribute(name.clone()))?;
                let select = Box::new(self.rule(inner, *select)?);
                Ok((Term::ChosenAttr { select, name }, t))
            }
            Term::Aggregate {
                agg,
                source,
                filter,
                project,
            } => {
                let inner = Scope {
                    bound: Some(source),
                    ..scope
                };
                let filter = Box::new(self.rule(inner, *filter)?);
                match (&project, agg) {
                    (None, Aggregator::Count) => {}
                    (None, _) => {
                        return Err(PolicyError::Syntax {
                            position: 0,
                            message: format!("'{}' needs a projected attribute", agg.as_str()),
                        })
                    }
                    (Some(name), _) => {
                        let t = self.field_type(inner, Role::Bound, name)?;
                        if agg != Aggregator::Count && t != ValueType::Int {
                            return Err(PolicyError::TypeMismatch {
                                op: agg.as_str().to_string(),
                                left: t,
                                right: ValueType::Int,
                            });
                        }
                    }
                }
                Ok((
                    Term::Aggregate {
                        agg,
                        source,
                        filter,
                        project,
                    },
                    ValueType::Int,
                ))
            }
            Term::Arith { op, lhs, rhs } => {
                let (lhs, lt) = self.term(scope, *lhs)?;
                let (rhs, rt) = self.term(scope, *rhs)?;
                if lt != ValueType::Int || rt != ValueType::Int {
                    return Err(PolicyError::TypeMismatch {
                        op: if op == ArithOp::Add { "+" } else { "-" }.to_string(),
                        left: lt,
                        right: rt,
                    });
                }
                Ok((
                    Term::Arith {
                        op,
                        lhs: Box::new(lhs),
                        rhs: Box::new(rhs),
                    },
                    ValueType::Int,
                ))
            }
        }
    }
}

const RULE_SCOPE: Scope = Scope {
    bound: None,
    allow_tick: false,
};

/// Parses and checks a policy rule against the attribute schema of `config`.
pub fn parse_policy(text: &str, config: &SystemConfig) -> Result<PolicyRule, PolicyError> {
    let raw = rule_from(&read_one(text.trim())?)?;
    check_rule(raw, config)
}

/// Checks a programmatically built rule: resolves names, rejects type
/// mismatches and rewrites tokens compared with identities into identities.
pub fn check_rule(rule: PolicyRule, config: &SystemConfig) -> Result<PolicyRule, PolicyError> {
    Checker { config }.rule(RULE_SCOPE, rule)
}

/// Parses an update procedure body: comma-separated `st=STATUS` and
/// `attr=TERM` items. Without an `st` item the procedure's usual target
/// status applies.
pub fn parse_update(
    body: &str,
    proc: UpdateProc,
    config: &SystemConfig,
) -> Result<UpdateSpec, PolicyError> {
    let checker = Checker { config };
    let scope = Scope {
        bound: None,
        allow_tick: true,
    };
    let mut target = None;
    let mut assignments: Vec<Assignment> = Vec::new();
    for (offset, item) in split_top_level(body) {
        let trimmed = item.trim();
        if trimmed.is_empty() {
            continue;
        }
        let lead = offset + (item.len() - item.trim_start().len());
        let (name, rhs) = trimmed
            .split_once('=')
            .ok_or_else(|| syntax(lead, "expected name=value"))?;
        let name = name.trim();
        let rhs = rhs.trim();
        if name == "st" {
            if target.is_some() {
                return Err(syntax(lead, "st assigned twice"));
            }
            let st = rhs
                .trim_matches('"')
                .parse::<UseStatus>()
                .map_err(|e| syntax(lead, e.to_string()))?;
            target = Some(st);
            continue;
        }
        let attr = config
            .use_attr_index(name)
            .ok_or_else(|| PolicyError::UnknownAttribute(name.to_string()))?;
        if assignments.iter().any(|a| a.attr == attr) {
            return Err(syntax(lead, format!("{name} assigned twice")));
        }
        let raw = term_from(&read_one(rhs).map_err(|e| shift(e, lead))?)?;
        let (term, t) = checker.term(scope, raw)?;
        let want = config.use_attrs()[attr]
            .domain
            .value_type()
            .unwrap_or(ValueType::Int);
        let (term, t) = checker.coerce(term, t, want)?;
        if t != want {
            return Err(PolicyError::TypeMismatch {
                op: "=".to_string(),
                left: want,
                right: t,
            });
        }
        assignments.push(Assignment {
            attr,
            name: name.to_string(),
            term,
        });
    }
    Ok(UpdateSpec {
        target: target.unwrap_or_else(|| proc.default_target()),
        assignments,
    })
}

fn shift(e: PolicyError, by: usize) -> PolicyError {
    match e {
        PolicyError::Syntax { position, message } => PolicyError::Syntax {
            position: position + by,
            message,
        },
        other => other,
    }
}

/// Splits on commas that are outside parentheses and string literals.
fn split_top_level(s: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let (mut depth, mut in_str, mut start) = (0i32, false, 0usize);
    let mut chars = s.char_indices();
    while let Some((i, c)) = chars.next() {
        match c {
            '"' => in_str = !in_str,
            '\\' if in_str => {
                chars.next();
            }
            '(' if !in_str => depth += 1,
            ')' if !in_str => depth -= 1,
            ',' if !in_str && depth == 0 => {
                out.push((start, &s[start..i]));
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push((start, &s[start..]));
    out
}
