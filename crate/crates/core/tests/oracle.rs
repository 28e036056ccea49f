//! The parallel explorer against the naive recursive enumeration.

mod common;

use common::{config, keys, run, MODELS};
use proptest::prelude::*;
use usecon::catalog::sweep_candidates;
use usecon::explorer::{naive_enumerate, Checks, ExplorationResult};
use usecon::model::{canonical_encode, decode};

#[test]
fn explored_keys_equal_naive_keys_for_every_builtin_policy() {
    for n in 1..=3 {
        for model in MODELS {
            for p in sweep_candidates(n) {
                let c = config(model, n, &p.name);
                let explored = keys(&run(&c, &Checks::none(), 2).graph);
                assert_eq!(
                    explored,
                    naive_enumerate(&c, 64),
                    "{model} {} n={n}",
                    p.name
                );
            }
        }
    }
}

#[test]
fn every_explored_key_decodes_and_re_encodes() {
    for model in MODELS {
        let c = config(model, 3, "id-parity");
        let g = run(&c, &Checks::none(), 1).graph;
        for k in keys(&g) {
            let w = decode(k.as_bytes(), &c).unwrap();
            assert_eq!(canonical_encode(&w, &c).unwrap(), k);
        }
    }
}

fn strip_time(mut r: ExplorationResult) -> ExplorationResult {
    r.elapsed = Default::default();
    r
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Worker count changes neither statistics, ids nor violations.
    #[test]
    fn worker_count_is_invisible(n in 1usize..=3, pre in any::<bool>(), pick in 0usize..9, workers in 2usize..6) {
        let model = if pre { MODELS[0] } else { MODELS[1] };
        let name = sweep_candidates(3)[pick].name.clone();
        let c = config(model, n, &name);
        let checks = usecon::properties::PropertyPack::for_config(&c)
            .into_checks(usecon::explorer::Fairness::Weak);
        let a = run(&c, &checks, 1);
        let b = run(&c, &checks, workers);
        prop_assert_eq!(strip_time(a.result), strip_time(b.result));
        for id in 0..a.graph.len() as u32 {
            prop_assert_eq!(a.graph.key(id), b.graph.key(id));
        }
    }
}
