#![allow(dead_code)]

use std::collections::BTreeSet;

use usecon::catalog::builtin_policy;
use usecon::explorer::{explore, Checks, Exploration, ExploreOptions, StateGraph};
use usecon::model::{ModelKind, StateKey, SystemBuilder, SystemConfig, UseCounts};

pub const MODELS: [ModelKind; 2] = [ModelKind::Pre, ModelKind::Ongoing];

pub fn config(model: ModelKind, n: usize, policy: &str) -> SystemConfig {
    SystemBuilder::generated(model, UseCounts::uses(n))
        .policy_text(builtin_policy(policy).unwrap_or_else(|| policy.to_string()))
        .build()
        .unwrap()
}

pub fn run(config: &SystemConfig, checks: &Checks, workers: usize) -> Exploration {
    explore(config, checks, &ExploreOptions::default().workers(workers)).unwrap()
}

pub fn keys(graph: &StateGraph) -> BTreeSet<StateKey> {
    (0..graph.len() as u32)
        .map(|id| graph.key(id).unwrap())
        .collect()
}
