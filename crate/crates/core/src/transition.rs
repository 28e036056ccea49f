//! Next-state relations of the pre-authorisation and ongoing-authorisation
//! models.

use std::fmt;

use thiserror::Error;

use crate::model::{ModelKind, SystemConfig, Use, UseKey, UseStatus, World};
use crate::policy::{
    apply_update_unchecked, decide, domain_violation, EvalContext, EvalError, UpdateProc,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionKind {
    Request,
    PreEvaluate,
    Activate,
    OnEvaluate,
    Complete,
}

impl ActionKind {
    pub const ALL: [ActionKind; 5] = [
        ActionKind::Request,
        ActionKind::PreEvaluate,
        ActionKind::Activate,
        ActionKind::OnEvaluate,
        ActionKind::Complete,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Request => "Request",
            ActionKind::PreEvaluate => "preEvaluate",
            ActionKind::Activate => "Activate",
            ActionKind::OnEvaluate => "onEvaluate",
            ActionKind::Complete => "Complete",
        }
    }

    pub fn from_name(name: &str) -> Option<ActionKind> {
        ActionKind::ALL.into_iter().find(|k| k.as_str() == name)
    }

    /// Actions of the next-state relation of `model`.
    pub fn enabled_in(self, model: ModelKind) -> bool {
        match self {
            ActionKind::Request | ActionKind::Complete => true,
            ActionKind::PreEvaluate => model == ModelKind::Pre,
            ActionKind::Activate | ActionKind::OnEvaluate => model == ModelKind::Ongoing,
        }
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(code: u8) -> Option<ActionKind> {
        ActionKind::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    Permitted,
    Denied,
    Stopped,
    Unchanged,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [
        Outcome::Permitted,
        Outcome::Denied,
        Outcome::Stopped,
        Outcome::Unchanged,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Permitted => "permitted",
            Outcome::Denied => "denied",
            Outcome::Stopped => "stopped",
            Outcome::Unchanged => "unchanged",
        }
    }

    pub fn from_name(name: &str) -> Option<Outcome> {
        Outcome::ALL.into_iter().find(|o| o.as_str() == name)
    }

    pub(crate) fn code(self) -> u8 {
        self as u8 + 1
    }

    pub(crate) fn from_code(code: u8) -> Option<Option<Outcome>> {
        match code {
            0 => Some(None),
            1..=4 => Some(Some(Outcome::ALL[code as usize - 1])),
            _ => None,
        }
    }
}

/// `kind` applied to the use `key`. Only the evaluating actions carry an
/// outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionLabel {
    pub kind: ActionKind,
    pub key: UseKey,
    pub outcome: Option<Outcome>,
}

impl ActionLabel {
    /// `kind:sid,aid,oid[:outcome]`.
    pub fn display(&self, config: &SystemConfig) -> String {
        let mut s = format!("{}:{}", self.kind, config.display_key(&self.key));
        if let Some(o) = self.outcome {
            s.push(':');
            s.push_str(o.as_str());
        }
        s
    }
}

/// One atomic step. `diagnostic` records a fail-safe denial or an update
/// that left its declared domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub label: ActionLabel,
    pub post: World,
    pub diagnostic: Option<EvalError>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransitionError {
    #[error("use {0:?} already exists")]
    AlreadyRequested(UseKey),
    #[error("{kind} is not enabled for {key:?}")]
    NotEnabled { kind: ActionKind, key: UseKey },
    #[error("no use with key {0:?}")]
    UnknownUse(UseKey),
    #[error("{0:?} is not a candidate use of this system")]
    NotCandidate(UseKey),
    #[error("{kind} on {key:?}: {source}")]
    Evaluation {
        kind: ActionKind,
        key: UseKey,
        source: EvalError,
    },
}

fn advance(world: &World) -> World {
    let mut w = world.clone();
    w.tick += 1;
    w
}

pub fn step_request(
    world: &World,
    key: UseKey,
    config: &SystemConfig,
) -> Result<Step, TransitionError> {
    if config.slot_of(&key).is_none() {
        return Err(TransitionError::NotCandidate(key));
    }
    if world.contains(&key) {
        return Err(TransitionError::AlreadyRequested(key));
    }
    let mut post = advance(world);
    post.insert(config.create_use(key));
    Ok(Step {
        label: ActionLabel {
            kind: ActionKind::Request,
            key,
            outcome: None,
        },
        post,
        diagnostic: None,
    })
}

fn guarded<'w>(
    world: &'w World,
    key: UseKey,
    kind: ActionKind,
    status: UseStatus,
    config: &SystemConfig,
) -> Result<&'w Use, TransitionError> {
    let u = world.get(&key).ok_or(TransitionError::UnknownUse(key))?;
    if u.st != status || !kind.enabled_in(config.model()) {
        return Err(TransitionError::NotEnabled { kind, key });
    }
    Ok(u)
}

/// Applies `proc` to `u` and replaces it in a copy of `world`.
fn updated(
    world: &World,
    u: &Use,
    kind: ActionKind,
    proc: UpdateProc,
    outcome: Option<Outcome>,
    diagnostic: Option<EvalError>,
    config: &SystemConfig,
) -> Result<Step, TransitionError> {
    let ctx = EvalContext::for_use(u, world, config);
    let spec = config.update(proc);
    let new_use =
        apply_update_unchecked(spec, u, &ctx).map_err(|source| TransitionError::Evaluation {
            kind,
            key: u.key,
            source,
        })?;
    let diagnostic = diagnostic.or_else(|| domain_violation(&new_use, config));
    let mut post = advance(world);
    post.replace(new_use);
    Ok(Step {
        label: ActionLabel {
            kind,
            key: u.key,
            outcome,
        },
        post,
        diagnostic,
    })
}

fn evaluate(
    world: &World,
    u: &Use,
    kind: ActionKind,
    config: &SystemConfig,
) -> Result<(bool, Option<EvalError>), TransitionError> {
    let ctx = EvalContext::for_use(u, world, config);
    let d = decide(config.policy(), &ctx).map_err(|source| TransitionError::Evaluation {
        kind,
        key: u.key,
        source,
    })?;
    Ok((d.permit, d.diagnostic))
}

pub fn step_pre_evaluate(
    world: &World,
    key: UseKey,
    config: &SystemConfig,
) -> Result<Step, TransitionError> {
    let kind = ActionKind::PreEvaluate;
    let u = guarded(world, key, kind, UseStatus::Requested, config)?;
    let (permit, diag) = evaluate(world, u, kind, config)?;
    if permit {
        updated(
            world,
            u,
            kind,
            UpdateProc::PreUpdate,
            Some(Outcome::Permitted),
            diag,
            config,
        )
    } else {
        updated(
            world,
            u,
            kind,
            UpdateProc::DenUpdate,
            Some(Outcome::Denied),
            diag,
            config,
        )
    }
}

pub fn step_activate(
    world: &World,
    key: UseKey,
    config: &SystemConfig,
) -> Result<Step, TransitionError> {
    let kind = ActionKind::Activate;
    let u = guarded(world, key, kind, UseStatus::Requested, config)?;
    updated(world, u, kind, UpdateProc::PreUpdate, None, None, config)
}

pub fn step_on_evaluate(
    world: &World,
    key: UseKey,
    config: &SystemConfig,
) -> Result<Step, TransitionError> {
    let kind = ActionKind::OnEvaluate;
    let u = guarded(world, key, kind, UseStatus::Activated, config)?;
    let (permit, diag) = evaluate(world, u, kind, config)?;
    if permit {
        updated(
            world,
            u,
            kind,
            UpdateProc::OnUpdate,
            Some(Outcome::Unchanged),
            diag,
            config,
        )
    } else {
        updated(
            world,
            u,
            kind,
            UpdateProc::StopUpdate,
            Some(Outcome::Stopped),
            diag,
            config,
        )
    }
}

pub fn step_complete(
    world: &World,
    key: UseKey,
    config: &SystemConfig,
) -> Result<Step, TransitionError> {
    let kind = ActionKind::Complete;
    let u = guarded(world, key, kind, UseStatus::Activated, config)?;
    updated(world, u, kind, UpdateProc::ComUpdate, None, None, config)
}

/// Applies `kind` to `key`, dispatching on the action.
pub fn step(
    world: &World,
    kind: ActionKind,
    key: UseKey,
    config: &SystemConfig,
) -> Result<Step, TransitionError> {
    match kind {
        ActionKind::Request => step_request(world, key, config),
        ActionKind::PreEvaluate => step_pre_evaluate(world, key, config),
        ActionKind::Activate => step_activate(world, key, config),
        ActionKind::OnEvaluate => step_on_evaluate(world, key, config),
        ActionKind::Complete => step_complete(world, key, config),
    }
}

/// Enabled `(kind, key)` pairs in canonical order: Request candidates in
/// key order, then the actions of each existing use in key order.
pub fn enabled_actions(world: &World, config: &SystemConfig) -> Vec<(ActionKind, UseKey)> {
    let mut out = Vec::new();
    let mut existing = world.uses.iter().map(|u| u.key).peekable();
    for &key in config.candidates() {
        while existing.next_if(|k| *k < key).is_some() {}
        if existing.peek() != Some(&key) {
            out.push((ActionKind::Request, key));
        }
    }
    let model = config.model();
    for u in &world.uses {
        match (u.st, model) {
            (UseStatus::Requested, ModelKind::Pre) => out.push((ActionKind::PreEvaluate, u.key)),
            (UseStatus::Requested, ModelKind::Ongoing) => out.push((ActionKind::Activate, u.key)),
            (UseStatus::Activated, ModelKind::Pre) => out.push((ActionKind::Complete, u.key)),
            (UseStatus::Activated, ModelKind::Ongoing) => {
                out.push((ActionKind::OnEvaluate, u.key));
                out.push((ActionKind::Complete, u.key));
            }
            _ => {}
        }
    }
    out
}

/// Every enabled step in canonical order. A step whose policy evaluation
/// fails with a non-fail-safe error is reported in place as an error.
pub fn successors(world: &World, config: &SystemConfig) -> Vec<Result<Step, TransitionError>> {
    enabled_actions(world, config)
        .into_iter()
        .map(|(kind, key)| step(world, kind, key, config))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{initial_world, SystemBuilder, UseCounts, Value};

    fn cfg(model: ModelKind, n: usize, policy: &str) -> SystemConfig {
        SystemBuilder::generated(model, UseCounts::uses(n))
            .policy_text(policy)
            .build()
            .unwrap()
    }

    fn ok(steps: Vec<Result<Step, TransitionError>>) -> Vec<Step> {
        steps.into_iter().map(Result::unwrap).collect()
    }

    #[test]
    fn request_creates_requested_use() {
        let c = cfg(ModelKind::Pre, 2, "true");
        let k = c.candidates()[0];
        let s = step_request(&initial_world(), k, &c).unwrap();
        assert_eq!(s.post.uses.len(), 1);
        assert_eq!(s.post.uses[0].st, UseStatus::Requested);
        assert_eq!(s.post.tick, 1);
        assert_eq!(
            step_request(&s.post, k, &c),
            Err(TransitionError::AlreadyRequested(k))
        );
    }

    #[test]
    fn initial_world_enables_one_request_per_candidate() {
        let c = cfg(ModelKind::Pre, 2, "true");
        let steps = ok(successors(&initial_world(), &c));
        assert_eq!(steps.len(), 2);
        assert!(steps.iter().all(|s| s.label.kind == ActionKind::Request));
        assert!(steps[0].label.key < steps[1].label.key);
    }

    #[test]
    fn pre_evaluate_branches() {
        for (policy, st, outcome) in [
            ("true", UseStatus::Activated, Outcome::Permitted),
            ("false", UseStatus::Denied, Outcome::Denied),
        ] {
            let c = cfg(ModelKind::Pre, 1, policy);
            let k = c.candidates()[0];
            let w = step_request(&initial_world(), k, &c).unwrap().post;
            let s = step_pre_evaluate(&w, k, &c).unwrap();
            assert_eq!(s.post.uses[0].st, st);
            assert_eq!(s.label.outcome, Some(outcome));
        }
    }

    #[test]
    fn count_policy_denies_when_another_use_is_active() {
        let c = cfg(
            ModelKind::Pre,
            2,
            "(< (aggregate count uses (= (attr x st) \"activated\")) 1)",
        );
        let (k1, k2) = (c.candidates()[0], c.candidates()[1]);
        let mut w = initial_world();
        w = step_request(&w, k1, &c).unwrap().post;
        w = step_pre_evaluate(&w, k1, &c).unwrap().post;
        w = step_request(&w, k2, &c).unwrap().post;
        let s = step_pre_evaluate(&w, k2, &c).unwrap();
        assert_eq!(s.post.get(&k2).unwrap().st, UseStatus::Denied);
    }

    #[test]
    fn activate_is_gated_by_model_and_status() {
        let c = cfg(ModelKind::Ongoing, 1, "true");
        let k = c.candidates()[0];
        let w = step_request(&initial_world(), k, &c).unwrap().post;
        let active = step_activate(&w, k, &c).unwrap().post;
        assert_eq!(active.uses[0].st, UseStatus::Activated);
        assert!(matches!(
            step_activate(&active, k, &c),
            Err(TransitionError::NotEnabled { .. })
        ));
        let pre = c.with_model(ModelKind::Pre);
        assert!(matches!(
            step_activate(&w, k, &pre),
            Err(TransitionError::NotEnabled { .. })
        ));
    }

    #[test]
    fn on_evaluate_true_is_a_self_loop() {
        let c = cfg(ModelKind::Ongoing, 1, "true");
        let k = c.candidates()[0];
        let mut w = step_request(&initial_world(), k, &c).unwrap().post;
        w = step_activate(&w, k, &c).unwrap().post;
        let steps = ok(successors(&w, &c));
        assert_eq!(steps.len(), 2);
        assert_eq!(steps[0].label.kind, ActionKind::OnEvaluate);
        assert_eq!(steps[0].post.uses, w.uses);
        assert_eq!(steps[1].label.kind, ActionKind::Complete);
        assert_eq!(steps[1].post.uses[0].st, UseStatus::Completed);

        let f = cfg(ModelKind::Ongoing, 1, "false");
        let s = step_on_evaluate(&w, k, &f).unwrap();
        assert_eq!(s.post.uses[0].st, UseStatus::Stopped);
    }

    #[test]
    fn complete_requires_activated() {
        let c = cfg(ModelKind::Pre, 3, "true");
        let mut w = initial_world();
        for &k in c.candidates() {
            w = step_request(&w, k, &c).unwrap().post;
        }
        let k0 = c.candidates()[0];
        assert!(step_complete(&w, k0, &c).is_err());
        for &k in c.candidates() {
            w = step_pre_evaluate(&w, k, &c).unwrap().post;
        }
        let completes = ok(successors(&w, &c))
            .into_iter()
            .filter(|s| s.label.kind == ActionKind::Complete)
            .count();
        assert_eq!(completes, 3);
    }

    #[test]
    fn finished_pre_world_has_no_successors() {
        let c = cfg(ModelKind::Pre, 2, "false");
        let mut w = initial_world();
        for &k in c.candidates() {
            w = step_request(&w, k, &c).unwrap().post;
            w = step_pre_evaluate(&w, k, &c).unwrap().post;
        }
        assert!(successors(&w, &c).is_empty());
    }

    #[test]
    fn out_of_domain_update_is_a_diagnostic() {
        let c = SystemBuilder::generated(ModelKind::Ongoing, UseCounts::uses(1))
            .use_attr("att", vec![0.into(), 1.into(), 2.into()], Some(2.into()))
            .update(UpdateProc::OnUpdate, "att=(+ (attr use att) 1)")
            .build()
            .unwrap();
        let k = c.candidates()[0];
        let mut w = step_request(&initial_world(), k, &c).unwrap().post;
        w = step_activate(&w, k, &c).unwrap().post;
        let s = step_on_evaluate(&w, k, &c).unwrap();
        assert_eq!(s.post.uses[0].attrs[0], Value::Int(3));
        assert!(matches!(
            s.diagnostic,
            Some(EvalError::DomainViolation { .. })
        ));
    }

    #[test]
    fn update_reads_pre_state_tick() {
        let c = SystemBuilder::generated(ModelKind::Pre, UseCounts::uses(1))
            .use_attr("allowedtime", (0..=8).map(Into::into).collect(), None)
            .update(UpdateProc::ComUpdate, "st=completed, allowedtime=tick")
            .build()
            .unwrap();
        assert!(c.tick_dependent());
        let k = c.candidates()[0];
        let mut w = step_request(&initial_world(), k, &c).unwrap().post;
        w = step_pre_evaluate(&w, k, &c).unwrap().post;
        w.tick = 4;
        let s = step_complete(&w, k, &c).unwrap();
        assert_eq!(s.post.uses[0].attrs[0], Value::Int(4));
        assert_eq!(s.post.uses[0].st, UseStatus::Completed);
        assert_eq!(s.post.tick, 5);
    }

    #[test]
    fn labels_print_with_outcome() {
        let c = cfg(ModelKind::Pre, 1, "true");
        let l = ActionLabel {
            kind: ActionKind::PreEvaluate,
            key: c.candidates()[0],
            outcome: Some(Outcome::Denied),
        };
        assert_eq!(l.display(&c), "preEvaluate:s1,a1,o1:denied");
    }
}
