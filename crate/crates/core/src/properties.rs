//! The standard property packs of both models.

use crate::explorer::{
    Checks, EdgeMonitor, Fairness, LeadsToGoal, StateInvariant, TYPE_CORRECTNESS,
};
use crate::model::{key_uniqueness, type_correctness, ModelKind, SystemConfig, UseStatus};

use UseStatus::{Activated, Completed, Denied, Requested, Stopped};

#[derive(Debug, Clone)]
pub struct PropertyPack {
    pub invariants: Vec<StateInvariant>,
    pub safety_monitors: Vec<EdgeMonitor>,
    pub liveness_goals: Vec<LeadsToGoal>,
}

impl PropertyPack {
    pub fn for_config(config: &SystemConfig) -> PropertyPack {
        PropertyPack {
            invariants: standard_invariants(config),
            safety_monitors: safety_monitors_for(config.model()),
            liveness_goals: liveness_goals_for(config.model()),
        }
    }

    /// Every property of the pack, with `fairness` applied to all goals.
    pub fn into_checks(self, fairness: Fairness) -> Checks {
        Checks {
            deadlock: true,
            invariants: self.invariants,
            monitors: self.safety_monitors,
            liveness: self
                .liveness_goals
                .into_iter()
                .map(|g| g.with_fairness(fairness))
                .collect(),
        }
    }
}

fn others(former: UseStatus) -> Vec<UseStatus> {
    UseStatus::ALL
        .into_iter()
        .filter(|s| *s != former)
        .collect()
}

/// Forbidden status changes of a single use.
pub fn safety_monitors_for(model: ModelKind) -> Vec<EdgeMonitor> {
    match model {
        ModelKind::Pre => vec![
            EdgeMonitor::new("Completed/AnyOther", Completed, &others(Completed)),
            EdgeMonitor::new(
                "Activated/RequestedOrDenied",
                Activated,
                &[Requested, Denied],
            ),
            EdgeMonitor::new("Denied/AnyOther", Denied, &others(Denied)),
        ],
        ModelKind::Ongoing => vec![
            EdgeMonitor::new("Completed/AnyOther", Completed, &others(Completed)),
            EdgeMonitor::new("Activated/Requested", Activated, &[Requested]),
            EdgeMonitor::new("Stopped/AnyOther", Stopped, &others(Stopped)),
        ],
    }
}

/// Leads-to goals over the status of each use, with the default fairness.
pub fn liveness_goals_for(model: ModelKind) -> Vec<LeadsToGoal> {
    match model {
        ModelKind::Pre => vec![
            LeadsToGoal::new(
                "Requested~>ActivatedOrDenied",
                &[Requested],
                &[Activated, Denied],
            ),
            LeadsToGoal::new(
                "Requested~>CompletedOrDenied",
                &[Requested],
                &[Completed, Denied],
            ),
            LeadsToGoal::new("Activated~>Completed", &[Activated], &[Completed]),
        ],
        ModelKind::Ongoing => vec![
            LeadsToGoal::new("Requested~>Activated", &[Requested], &[Activated]),
            LeadsToGoal::new(
                "Requested~>CompletedOrStopped",
                &[Requested],
                &[Completed, Stopped],
            ),
            LeadsToGoal::new(
                "Activated~>CompletedOrStopped",
                &[Activated],
                &[Completed, Stopped],
            ),
        ],
    }
}

/// Type correctness against the domains of `config`, and key uniqueness.
pub fn standard_invariants(config: &SystemConfig) -> Vec<StateInvariant> {
    let bound = config.clone();
    vec![
        StateInvariant::new(TYPE_CORRECTNESS, move |w, _| type_correctness(w, &bound)),
        StateInvariant::new("KeyUniqueness", |w, _| key_uniqueness(w)),
    ]
}
