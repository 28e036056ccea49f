use std::fmt;

use super::ast::Term;
use super::eval::{eval_term, EvalContext, EvalError};
use crate::model::{SystemConfig, Use, UseStatus};

/// The five update procedures invoked by the transition system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UpdateProc {
    PreUpdate,
    DenUpdate,
    ComUpdate,
    OnUpdate,
    StopUpdate,
}

impl UpdateProc {
    pub const ALL: [UpdateProc; 5] = [
        UpdateProc::PreUpdate,
        UpdateProc::DenUpdate,
        UpdateProc::ComUpdate,
        UpdateProc::OnUpdate,
        UpdateProc::StopUpdate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            UpdateProc::PreUpdate => "preUpdate",
            UpdateProc::DenUpdate => "denUpdate",
            UpdateProc::ComUpdate => "comUpdate",
            UpdateProc::OnUpdate => "onUpdate",
            UpdateProc::StopUpdate => "stopUpdate",
        }
    }

    pub fn from_name(name: &str) -> Option<UpdateProc> {
        UpdateProc::ALL.into_iter().find(|p| p.as_str() == name)
    }

    /// Status the procedure assigns when its body does not set `st`.
    pub fn default_target(self) -> UseStatus {
        match self {
            UpdateProc::PreUpdate | UpdateProc::OnUpdate => UseStatus::Activated,
            UpdateProc::DenUpdate => UseStatus::Denied,
            UpdateProc::ComUpdate => UseStatus::Completed,
            UpdateProc::StopUpdate => UseStatus::Stopped,
        }
    }
}

impl fmt::Display for UpdateProc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `attr := term`, with `attr` an index into the declared use attributes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub attr: usize,
    pub name: String,
    pub term: Term,
}

/// Body of an update procedure. All terms read the pre-state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateSpec {
    pub target: UseStatus,
    pub assignments: Vec<Assignment>,
}

impl UpdateSpec {
    pub fn plain(target: UseStatus) -> UpdateSpec {
        UpdateSpec {
            target,
            assignments: Vec::new(),
        }
    }

    pub fn reads_tick(&self) -> bool {
        self.assignments.iter().any(|a| a.term.reads_tick())
    }

    /// Leaves everything unchanged except the status.
    pub fn is_plain(&self) -> bool {
        self.assignments.is_empty()
    }
}

/// Applies `spec` to `u`, without checking the new values against their
/// domains. `ctx` supplies the pre-state.
pub fn apply_update_unchecked(
    spec: &UpdateSpec,
    u: &Use,
    ctx: &EvalContext<'_>,
) -> Result<Use, EvalError> {
    let mut post = u.clone();
    post.st = spec.target;
    for a in &spec.assignments {
        post.attrs[a.attr] = eval_term(&a.term, ctx)?;
    }
    Ok(post)
}

/// First assigned value of `u` outside its declared domain.
pub fn domain_violation(u: &Use, config: &SystemConfig) -> Option<EvalError> {
    config
        .use_attrs()
        .iter()
        .zip(&u.attrs)
        .find(|(d, v)| !d.domain.contains(v))
        .map(|(d, v)| EvalError::DomainViolation {
            attr: d.name.clone(),
            value: config.display_value(v),
        })
}

/// Applies `spec` and rejects out-of-domain results.
pub fn apply_update(spec: &UpdateSpec, u: &Use, ctx: &EvalContext<'_>) -> Result<Use, EvalError> {
    let post = apply_update_unchecked(spec, u, ctx)?;
    match domain_violation(&post, ctx.config) {
        Some(e) => Err(e),
        None => Ok(post),
    }
}
