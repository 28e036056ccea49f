//! State-space statistics of generated systems against their closed forms.

mod common;

use common::{config, run};
use usecon::explorer::{naive_enumerate, Checks};
use usecon::model::ModelKind;

/// (distinct, found, diameter) for `n` uses.
fn closed_form(model: ModelKind, permit: bool, n: u32) -> Option<(u64, u64, u64)> {
    let n64 = n as u64;
    Some(match (model, permit) {
        (ModelKind::Pre, true) => (4u64.pow(n), 1 + 3 * n64 * 4u64.pow(n - 1), 3 * n64 + 1),
        (ModelKind::Ongoing, true) => (4u64.pow(n), 1 + n64 * 4u64.pow(n), 3 * n64 + 1),
        (ModelKind::Pre, false) => (3u64.pow(n), 1 + 2 * n64 * 3u64.pow(n - 1), 2 * n64 + 1),
        (ModelKind::Ongoing, false) => return None,
    })
}

#[test]
fn naive_counts_confirm_the_distinct_formulas() {
    // Each use independently sits in one of its reachable statuses or is absent.
    for n in 1..=3 {
        for (model, policy, per_use) in [
            (ModelKind::Pre, "true", 4),
            (ModelKind::Ongoing, "true", 4),
            (ModelKind::Pre, "false", 3),
            // Activation is unconditional; the use is stopped afterwards.
            (ModelKind::Ongoing, "false", 5),
        ] {
            let got = naive_enumerate(&config(model, n, policy), 64).len();
            assert_eq!(got, usize::pow(per_use, n as u32), "{model} {policy} n={n}");
        }
    }
}

#[test]
fn statistics_match_closed_forms() {
    for n in 1..=4u32 {
        for model in common::MODELS {
            for permit in [true, false] {
                let Some(want) = closed_form(model, permit, n) else {
                    continue;
                };
                let c = config(model, n as usize, if permit { "true" } else { "false" });
                let r = run(&c, &Checks::none(), 2).result;
                let got = (r.distinct_states, r.states_found, r.diameter);
                assert_eq!(got, want, "{model} permit={permit} n={n}");
            }
        }
    }
}

#[test]
fn found_equals_one_plus_sum_of_out_degrees() {
    for model in common::MODELS {
        let c = config(model, 3, "true");
        let e = usecon::explorer::explore(
            &c,
            &Checks::none(),
            &usecon::explorer::ExploreOptions {
                record_edges: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(e.result.states_found, 1 + e.graph.edge_count() as u64);
    }
}
