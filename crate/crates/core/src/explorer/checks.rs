//! State invariants, per-edge status monitors and deadlock classification,
//! plus their post-hoc forms over a finished graph.

use std::fmt;
use std::sync::Arc;

use super::graph::{packed_slot, unpack_label, StateGraph};
use super::trace::{path_to, TraceStep};
use super::{Violation, ViolationKind};
use crate::model::{decode, status_in_key, StateKey, SystemConfig, UseStatus, World};

/// Forbidden `(former, latter)` status pairs of one use across one edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMonitor {
    pub name: String,
    pub former: UseStatus,
    forbidden: u8,
}

impl EdgeMonitor {
    pub fn new(name: impl Into<String>, former: UseStatus, forbidden: &[UseStatus]) -> Self {
        EdgeMonitor {
            name: name.into(),
            former,
            forbidden: forbidden.iter().fold(0, |m, s| m | s.bit()),
        }
    }

    pub fn forbidden(&self) -> Vec<UseStatus> {
        UseStatus::ALL
            .into_iter()
            .filter(|s| self.forbidden & s.bit() != 0)
            .collect()
    }

    pub fn forbids(&self, pre: UseStatus, post: UseStatus) -> bool {
        pre == self.former && self.forbidden & post.bit() != 0
    }
}

type Predicate = dyn Fn(&World, &SystemConfig) -> bool + Send + Sync;

/// A named predicate that must hold in every reachable state.
#[derive(Clone)]
pub struct StateInvariant {
    pub name: String,
    pred: Arc<Predicate>,
}

impl StateInvariant {
    pub fn new(
        name: impl Into<String>,
        pred: impl Fn(&World, &SystemConfig) -> bool + Send + Sync + 'static,
    ) -> Self {
        StateInvariant {
            name: name.into(),
            pred: Arc::new(pred),
        }
    }

    pub fn holds(&self, world: &World, config: &SystemConfig) -> bool {
        (self.pred)(world, config)
    }
}

impl fmt::Debug for StateInvariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StateInvariant")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeadlockClass {
    /// Every candidate use exists and sits in a final status.
    ExpectedTerminal,
    Unexpected,
}

impl DeadlockClass {
    pub fn as_str(self) -> &'static str {
        match self {
            DeadlockClass::ExpectedTerminal => "expected-terminal",
            DeadlockClass::Unexpected => "unexpected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deadlock {
    pub key: StateKey,
    pub class: DeadlockClass,
}

/// Classifies a state without successors from its key.
pub fn classify_terminal(key: &[u8], config: &SystemConfig) -> DeadlockClass {
    let finals = config.model().final_statuses();
    let all_final = (0..config.candidates().len())
        .all(|slot| status_in_key(key, slot).is_some_and(|st| finals.contains(&st)));
    if all_final {
        DeadlockClass::ExpectedTerminal
    } else {
        DeadlockClass::Unexpected
    }
}

pub(crate) fn deadlock_violation(graph: &StateGraph, id: u32) -> Violation {
    Violation {
        kind: ViolationKind::Deadlock,
        property: "Deadlock".into(),
        message: Some("a state without successors leaves some use unfinished".into()),
        trace: path_to(graph, id),
    }
}

/// Terminal states of `graph` in id order with their classification.
pub fn classify_deadlocks(graph: &StateGraph) -> Vec<Deadlock> {
    (0..graph.len() as u32)
        .filter(|&id| graph.is_terminal(id))
        .filter_map(|id| {
            let key = graph.key(id)?;
            let class = classify_terminal(key.as_bytes(), graph.config());
            Some(Deadlock { key, class })
        })
        .collect()
}

/// A violation for the first unexpected deadlock, if any.
pub fn check_deadlocks(graph: &StateGraph) -> Vec<Violation> {
    (0..graph.len() as u32)
        .filter(|&id| graph.is_terminal(id))
        .find(|&id| {
            graph.key(id).is_some_and(|k| {
                classify_terminal(k.as_bytes(), graph.config()) == DeadlockClass::Unexpected
            })
        })
        .map(|id| deadlock_violation(graph, id))
        .into_iter()
        .collect()
}

/// Evaluates each predicate on every retained state; reports the first
/// failure of each with a shortest trace.
pub fn check_invariant_states(graph: &StateGraph, invariants: &[StateInvariant]) -> Vec<Violation> {
    let config = graph.config();
    let mut found: Vec<Option<Violation>> = vec![None; invariants.len()];
    for id in 0..graph.len() as u32 {
        if found.iter().all(Option::is_some) {
            break;
        }
        let Some(key) = graph.key(id) else { continue };
        let Ok(world) = decode(key.as_bytes(), config) else {
            continue;
        };
        for (inv, slot) in invariants.iter().zip(&mut found) {
            if slot.is_none() && !inv.holds(&world, config) {
                *slot = Some(Violation {
                    kind: ViolationKind::Invariant,
                    property: inv.name.clone(),
                    message: None,
                    trace: path_to(graph, id),
                });
            }
        }
    }
    found.into_iter().flatten().collect()
}

/// Checks every recorded edge against the monitors; reports the first
/// offending edge of each monitor.
pub fn check_edge_monitors(graph: &StateGraph, monitors: &[EdgeMonitor]) -> Vec<Violation> {
    let config = graph.config();
    let mut found: Vec<Option<Violation>> = vec![None; monitors.len()];
    for id in 0..graph.len() as u32 {
        let Some(pre_key) = graph.key(id) else {
            continue;
        };
        let (labels, targets) = graph.out_packed(id);
        for (&packed, &t) in labels.iter().zip(targets) {
            let slot = packed_slot(packed);
            let Some(post_key) = graph.key(t) else {
                continue;
            };
            let (Some(pre), Some(post)) = (
                status_in_key(pre_key.as_bytes(), slot),
                status_in_key(post_key.as_bytes(), slot),
            ) else {
                continue;
            };
            for (m, slot_v) in monitors.iter().zip(&mut found) {
                if slot_v.is_none() && m.forbids(pre, post) {
                    let mut trace = path_to(graph, id);
                    trace.steps.push(TraceStep {
                        label: Some(unpack_label(packed, config)),
                        key: post_key.clone(),
                    });
                    *slot_v = Some(monitor_violation(m, pre, post, trace));
                }
            }
        }
    }
    found.into_iter().flatten().collect()
}

pub(crate) fn monitor_violation(
    m: &EdgeMonitor,
    pre: UseStatus,
    post: UseStatus,
    trace: super::Trace,
) -> Violation {
    Violation {
        kind: ViolationKind::Safety,
        property: m.name.clone(),
        message: Some(format!("use moved from {pre} to {post}")),
        trace,
    }
}
