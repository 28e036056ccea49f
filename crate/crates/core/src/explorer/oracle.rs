use std::collections::{BTreeSet, HashMap};

use crate::model::{
    canonical_encode, initial_world, type_correctness, StateKey, SystemConfig, World,
};
use crate::transition::successors;

/// Keys reachable from the initial state within `depth_bound` steps, by a
/// plain recursive search that shares nothing with [`explore`](super::explore).
///
/// States that are type-incorrect, or whose clock reached the tick bound
/// while the clock is part of state identity, are kept but not expanded.
pub fn naive_enumerate(config: &SystemConfig, depth_bound: usize) -> BTreeSet<StateKey> {
    // Largest remaining budget with which each key has been visited.
    let mut best: HashMap<StateKey, usize> = HashMap::new();
    visit(config, &initial_world(), depth_bound, &mut best);
    best.into_keys().collect()
}

fn visit(config: &SystemConfig, world: &World, budget: usize, best: &mut HashMap<StateKey, usize>) {
    let Ok(key) = canonical_encode(world, config) else {
        return;
    };
    if best.get(&key).is_some_and(|&b| b >= budget) {
        return;
    }
    best.insert(key, budget);
    if budget == 0
        || !type_correctness(world, config)
        || (config.tick_dependent() && world.tick >= config.tick_bound())
    {
        return;
    }
    for step in successors(world, config).into_iter().flatten() {
        visit(config, &step.post, budget - 1, best);
    }
}
