//! Property packs, deadlock classification and mutated systems.

mod common;

use std::collections::{BTreeSet, VecDeque};

use common::{config, run, MODELS};
use usecon::explorer::{
    check_edge_monitors, explore, Checks, DeadlockClass, ExploreOptions, Fairness, ViolationKind,
};
use usecon::model::{
    canonical_encode, initial_world, ModelKind, SystemBuilder, SystemConfig, UseCounts, UseStatus,
};
use usecon::policy::UpdateProc;
use usecon::properties::{liveness_goals_for, safety_monitors_for, PropertyPack};
use usecon::transition::{successors, ActionKind};

use UseStatus::*;

fn pack(c: &SystemConfig, fairness: Fairness) -> Checks {
    PropertyPack::for_config(c).into_checks(fairness)
}

fn mutated(model: ModelKind, n: usize, proc: UpdateProc, body: &str) -> SystemConfig {
    SystemBuilder::generated(model, UseCounts::uses(n))
        .update(proc, body)
        .build()
        .unwrap()
}

#[test]
fn standard_packs_hold_under_weak_fairness() {
    for n in 1..=4 {
        for model in MODELS {
            for policy in ["true", "false", "activated-count<2"] {
                let c = config(model, n, policy);
                let r = run(&c, &pack(&c, Fairness::Weak), 1).result;
                assert!(
                    r.violations.is_empty(),
                    "{model} {policy} n={n}: {:?}",
                    r.violated_properties()
                );
                assert_eq!(r.unexpected_deadlocks(), 0);
            }
        }
    }
}

#[test]
fn single_expected_terminal_when_everything_is_permitted() {
    for n in 1..=4 {
        for model in MODELS {
            let r = run(&config(model, n, "true"), &Checks::default(), 1).result;
            assert_eq!(r.deadlocks.len(), 1, "{model} n={n}");
            assert_eq!(r.deadlocks[0].class, DeadlockClass::ExpectedTerminal);
            let c = config(model, n, "true");
            let w = usecon::model::decode(r.deadlocks[0].key.as_bytes(), &c).unwrap();
            assert_eq!(w.count_status(Completed), n);
        }
        let c = config(ModelKind::Pre, n, "false");
        let r = run(&c, &Checks::default(), 1).result;
        assert_eq!(r.deadlocks.len(), 1);
        assert_eq!(r.deadlocks[0].class, DeadlockClass::ExpectedTerminal);
        let w = usecon::model::decode(r.deadlocks[0].key.as_bytes(), &c).unwrap();
        assert_eq!(w.count_status(Denied), n);
    }
}

/// Monitor names violated on some reachable edge, found by walking worlds
/// directly with a hand-written forbidden table.
fn path_checker(c: &SystemConfig) -> BTreeSet<String> {
    let forbidden: Vec<(&str, UseStatus, Vec<UseStatus>)> = match c.model() {
        ModelKind::Pre => vec![
            (
                "Completed/AnyOther",
                Completed,
                vec![Requested, Activated, Denied, Stopped],
            ),
            (
                "Activated/RequestedOrDenied",
                Activated,
                vec![Requested, Denied],
            ),
            (
                "Denied/AnyOther",
                Denied,
                vec![Requested, Activated, Stopped, Completed],
            ),
        ],
        ModelKind::Ongoing => vec![
            (
                "Completed/AnyOther",
                Completed,
                vec![Requested, Activated, Denied, Stopped],
            ),
            ("Activated/Requested", Activated, vec![Requested]),
            (
                "Stopped/AnyOther",
                Stopped,
                vec![Requested, Activated, Denied, Completed],
            ),
        ],
    };
    let mut hit = BTreeSet::new();
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([initial_world()]);
    seen.insert(canonical_encode(&initial_world(), c).unwrap());
    while let Some(w) = queue.pop_front() {
        for s in successors(&w, c).into_iter().flatten() {
            for u in &w.uses {
                let Some(after) = s.post.get(&u.key) else {
                    continue;
                };
                for (name, former, bad) in &forbidden {
                    if u.st == *former && bad.contains(&after.st) {
                        hit.insert(name.to_string());
                    }
                }
            }
            if seen.insert(canonical_encode(&s.post, c).unwrap()) {
                queue.push_back(s.post);
            }
        }
    }
    hit
}

#[test]
fn monitors_agree_with_a_direct_path_checker() {
    let mut systems = Vec::new();
    for n in 1..=2 {
        for model in MODELS {
            for policy in ["true", "false", "id-parity"] {
                systems.push(config(model, n, policy));
            }
            systems.push(mutated(model, n, UpdateProc::ComUpdate, "st=requested"));
        }
        systems.push(mutated(
            ModelKind::Ongoing,
            n,
            UpdateProc::StopUpdate,
            "st=requested",
        ));
        systems.push(mutated(
            ModelKind::Pre,
            n,
            UpdateProc::ComUpdate,
            "st=denied",
        ));
    }
    for c in &systems {
        let checks = Checks {
            monitors: safety_monitors_for(c.model()),
            ..Checks::none()
        };
        let e = run(c, &checks, 2);
        let found: BTreeSet<String> = e.result.violated_properties().into_iter().collect();
        assert_eq!(found, path_checker(c), "{}", c.model());
        // Post-hoc checking over recorded edges reports the same properties.
        let full = explore(
            c,
            &Checks::none(),
            &ExploreOptions {
                record_edges: true,
                ..Default::default()
            },
        )
        .unwrap();
        let post: BTreeSet<String> = check_edge_monitors(&full.graph, &checks.monitors)
            .into_iter()
            .map(|v| v.property)
            .collect();
        assert_eq!(post, found);
        for v in &e.result.violations {
            v.trace.replay(c).unwrap();
        }
    }
}

#[test]
fn completion_wired_back_to_requested_is_caught() {
    // The use never reaches completed, so the activated monitor fires.
    let c = mutated(ModelKind::Pre, 2, UpdateProc::ComUpdate, "st=requested");
    let r = run(&c, &pack(&c, Fairness::Weak), 1).result;
    let safety: Vec<_> = r
        .violations
        .iter()
        .filter(|v| v.kind == ViolationKind::Safety)
        .collect();
    assert_eq!(safety.len(), 1);
    assert_eq!(safety[0].property, "Activated/RequestedOrDenied");
    let worlds = safety[0].trace.replay(&c).unwrap();
    assert!(worlds.iter().all(|w| w.count_status(Completed) == 0));
}

#[test]
fn unfair_ongoing_model_has_a_self_loop_lasso() {
    let c = config(ModelKind::Ongoing, 2, "true");
    let goal = liveness_goals_for(ModelKind::Ongoing)
        .into_iter()
        .find(|g| g.name == "Activated~>CompletedOrStopped")
        .unwrap();
    let checks = |f| Checks {
        liveness: vec![goal.clone().with_fairness(f)],
        ..Checks::none()
    };
    let r = run(&c, &checks(Fairness::None), 1).result;
    assert_eq!(r.violations.len(), 1);
    let v = &r.violations[0];
    assert_eq!(v.kind, ViolationKind::Liveness);
    let start = v.trace.cycle_start.expect("lasso");
    assert_eq!(v.trace.last_key(), Some(&v.trace.steps[start].key));
    let cycle = &v.trace.steps[start + 1..];
    assert!(cycle
        .iter()
        .all(|s| s.label.unwrap().kind == ActionKind::OnEvaluate));
    v.trace.replay(&c).unwrap();

    assert!(run(&c, &checks(Fairness::Weak), 1)
        .result
        .violations
        .is_empty());
}

#[test]
fn out_of_domain_update_breaks_type_correctness() {
    let c = SystemBuilder::generated(ModelKind::Pre, UseCounts::uses(2))
        .use_attr("att", vec![0.into(), 1.into()], Some(0.into()))
        .update(
            UpdateProc::PreUpdate,
            "st=activated, att=(+ (attr use att) 2)",
        )
        .build()
        .unwrap();
    let r = run(&c, &Checks::default(), 1).result;
    let v = r
        .violations
        .iter()
        .find(|v| v.property == "TypeCorrectness")
        .expect("type violation");
    let worlds = v.trace.replay(&c).unwrap();
    assert!(!usecon::model::type_correctness(worlds.last().unwrap(), &c));
}
