//! Breadth-first explicit-state exploration with invariant, edge-monitor,
//! deadlock and leads-to checking.
//!
//! Levels are expanded in parallel and merged in frontier order, so state
//! ids, statistics and reported violations do not depend on the number of
//! workers.

mod checks;
mod graph;
mod liveness;
mod oracle;
mod store;
mod trace;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use hashbrown::HashTable;
use rayon::prelude::*;
use smallvec::SmallVec;
use thiserror::Error;

pub use checks::{
    check_deadlocks, check_edge_monitors, check_invariant_states, classify_deadlocks,
    classify_terminal, Deadlock, DeadlockClass, EdgeMonitor, StateInvariant,
};
pub use graph::{GraphBuilder, StateGraph};
pub use liveness::{check_leads_to, Fairness, LeadsToGoal, LivenessError};
pub use oracle::naive_enumerate;
pub use trace::{reconstruct_trace, ReplayError, Trace, TraceStep, UnknownState};

use crate::model::{
    canonical_encode, decode, encode_into, initial_world, status_in_key, type_correctness,
    EncodeError, StateKey, SystemConfig,
};
use crate::transition::{enabled_actions, step, ActionLabel};
use checks::{deadlock_violation, monitor_violation};
use graph::{
    pack_label, Csr, CONSTRAINED, EVAL_ERROR, EXPANDED, NO_LABEL, NO_PARENT, TERMINAL,
    TYPE_INCORRECT,
};
use store::{hash_key, FingerprintSet, KeyArena, KeyIndex, Lookup, Seen};
use trace::path_to;

/// Default cap on distinct states.
pub const DEFAULT_MAX_STATES: u64 = 50_000_000;

/// Name of the always-checked type invariant.
pub const TYPE_CORRECTNESS: &str = "TypeCorrectness";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StoreMode {
    /// Full keys; counts are exact.
    #[default]
    Exact,
    /// 64-bit hashes only; counts may be low if hashes collide.
    Fingerprint,
}

#[derive(Debug, Clone)]
pub struct ExploreOptions {
    pub workers: usize,
    pub max_states: u64,
    pub store: StoreMode,
    /// Keep every edge (needed for graph emission; implied by liveness goals).
    pub record_edges: bool,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            max_states: DEFAULT_MAX_STATES,
            store: StoreMode::Exact,
            record_edges: false,
        }
    }
}

impl ExploreOptions {
    pub fn workers(mut self, n: usize) -> Self {
        self.workers = n.max(1);
        self
    }
}

/// What to verify during exploration. Type correctness is always checked.
#[derive(Debug, Clone)]
pub struct Checks {
    pub deadlock: bool,
    pub invariants: Vec<StateInvariant>,
    pub monitors: Vec<EdgeMonitor>,
    pub liveness: Vec<LeadsToGoal>,
}

impl Default for Checks {
    fn default() -> Self {
        Checks {
            deadlock: true,
            invariants: Vec::new(),
            monitors: Vec::new(),
            liveness: Vec::new(),
        }
    }
}

impl Checks {
    pub fn none() -> Self {
        Checks {
            deadlock: false,
            ..Checks::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViolationKind {
    Invariant,
    Safety,
    Liveness,
    EvaluationError,
    Deadlock,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::Invariant => "invariant",
            ViolationKind::Safety => "safety",
            ViolationKind::Liveness => "liveness",
            ViolationKind::EvaluationError => "evaluation-error",
            ViolationKind::Deadlock => "deadlock",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub property: String,
    pub message: Option<String>,
    pub trace: Trace,
}

/// A fail-safe denial or out-of-domain update, counted over all steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub message: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationResult {
    /// Number of BFS levels, counting the initial state's.
    pub diameter: u64,
    /// The initial state plus every generated successor.
    pub states_found: u64,
    pub distinct_states: u64,
    pub deadlocks: Vec<Deadlock>,
    pub violations: Vec<Violation>,
    pub diagnostics: Vec<Diagnostic>,
    /// States left unexpanded because the clock reached the tick bound.
    pub constrained_states: u64,
    pub elapsed: Duration,
    pub partial: bool,
    pub approximate: bool,
}

impl ExplorationResult {
    pub fn unexpected_deadlocks(&self) -> usize {
        self.deadlocks
            .iter()
            .filter(|d| d.class == DeadlockClass::Unexpected)
            .count()
    }

    pub fn violated_properties(&self) -> Vec<String> {
        self.violations.iter().map(|v| v.property.clone()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Exploration {
    pub result: ExplorationResult,
    pub graph: StateGraph,
}

#[derive(Debug, Clone, Error)]
pub enum ExploreError {
    #[error("state budget of {limit} distinct states exceeded")]
    MemoryBudgetExceeded {
        limit: u64,
        partial: Box<ExplorationResult>,
    },
    #[error("state encoding failed: {0}")]
    Encode(#[from] EncodeError),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

struct Cand {
    key: SmallVec<[u8; 16]>,
    hash: u64,
    parent: u32,
    label: u32,
}

#[derive(Clone, Copy)]
enum Target {
    Known(u32),
    Cand(u32),
}

enum Pending {
    TypeIncorrect(u32),
    Invariant(usize, u32),
    Monitor {
        monitor: usize,
        id: u32,
        label: ActionLabel,
        post: StateKey,
        statuses: (crate::model::UseStatus, crate::model::UseStatus),
    },
    Eval {
        id: u32,
        message: String,
    },
    Deadlock(u32),
}

#[derive(Default)]
struct ChunkOut {
    flags: Vec<u8>,
    cands: Vec<Cand>,
    edges: Vec<(u32, Target)>,
    edge_ends: Vec<u32>,
    found: u64,
    pending: Vec<Pending>,
    deadlocks: Vec<Deadlock>,
    diagnostics: BTreeMap<String, u64>,
    constrained: u64,
}

struct Ctx<'a> {
    config: &'a SystemConfig,
    checks: &'a Checks,
    arena: &'a KeyArena,
    seen: &'a Seen,
    edges: bool,
}

fn expand_chunk(ctx: &Ctx<'_>, ids: std::ops::Range<u32>) -> Result<ChunkOut, EncodeError> {
    let config = ctx.config;
    let mut out = ChunkOut::default();
    let mut local: HashTable<u32> = HashTable::new();
    let mut buf: SmallVec<[u8; 16]> = SmallVec::new();
    for id in ids {
        let bytes = ctx.arena.get(id).expect("frontier keys are retained");
        let world = decode(bytes, config).expect("stored keys decode");
        let mut flags = 0u8;
        let expand = if !type_correctness(&world, config) {
            flags |= TYPE_INCORRECT;
            out.pending.push(Pending::TypeIncorrect(id));
            false
        } else {
            for (i, inv) in ctx.checks.invariants.iter().enumerate() {
                if !inv.holds(&world, config) {
                    out.pending.push(Pending::Invariant(i, id));
                }
            }
            if config.tick_dependent() && world.tick >= config.tick_bound() {
                flags |= CONSTRAINED;
                out.constrained += 1;
                false
            } else {
                true
            }
        };
        if expand {
            flags |= EXPANDED;
            let actions = enabled_actions(&world, config);
            if actions.is_empty() {
                flags |= TERMINAL;
                let class = classify_terminal(bytes, config);
                if class == DeadlockClass::Unexpected && ctx.checks.deadlock {
                    out.pending.push(Pending::Deadlock(id));
                }
                out.deadlocks.push(Deadlock {
                    key: StateKey::from_bytes(bytes),
                    class,
                });
            }
            for (kind, key) in actions {
                let s = match step(&world, kind, key, config) {
                    Ok(s) => s,
                    Err(e) => {
                        flags |= EVAL_ERROR;
                        out.pending.push(Pending::Eval {
                            id,
                            message: e.to_string(),
                        });
                        continue;
                    }
                };
                out.found += 1;
                if let Some(d) = &s.diagnostic {
                    *out.diagnostics.entry(d.to_string()).or_default() += 1;
                }
                encode_into(&s.post, config, &mut buf)?;
                let hash = hash_key(&buf);
                if !ctx.checks.monitors.is_empty() {
                    let slot = config.slot_of(&key).expect("candidate key");
                    if let (Some(pre), Some(post)) =
                        (status_in_key(bytes, slot), status_in_key(&buf, slot))
                    {
                        for (mi, m) in ctx.checks.monitors.iter().enumerate() {
                            if m.forbids(pre, post) {
                                out.pending.push(Pending::Monitor {
                                    monitor: mi,
                                    id,
                                    label: s.label,
                                    post: StateKey::from_bytes(&buf),
                                    statuses: (pre, post),
                                });
                            }
                        }
                    }
                }
                let packed = pack_label(&s.label, config);
                let target = match ctx.seen.lookup(hash, &buf, ctx.arena) {
                    Lookup::Seen(Some(t)) => Some(Target::Known(t)),
                    Lookup::Seen(None) => None,
                    Lookup::New => {
                        let cands = &out.cands;
                        let ci = match local.find(hash, |&ci| cands[ci as usize].key == buf) {
                            Some(&ci) => ci,
                            None => {
                                let ci = out.cands.len() as u32;
                                out.cands.push(Cand {
                                    key: buf.clone(),
                                    hash,
                                    parent: id,
                                    label: packed,
                                });
                                let cands = &out.cands;
                                local.insert_unique(hash, ci, |&c| cands[c as usize].hash);
                                ci
                            }
                        };
                        Some(Target::Cand(ci))
                    }
                };
                if ctx.edges {
                    if let Some(t) = target {
                        out.edges.push((packed, t));
                    }
                }
            }
        }
        out.flags.push(flags);
        out.edge_ends.push(out.edges.len() as u32);
    }
    Ok(out)
}

/// First violation of each property, in discovery order.
struct Recorder {
    by_name: BTreeMap<(ViolationKind, String), Violation>,
}

impl Recorder {
    fn wants(&self, kind: ViolationKind, name: &str) -> bool {
        !self.by_name.contains_key(&(kind, name.to_string()))
    }

    fn record(&mut self, v: Violation) {
        self.by_name
            .entry((v.kind, v.property.clone()))
            .or_insert(v);
    }

    fn accept(&mut self, p: Pending, graph: &StateGraph, checks: &Checks) {
        match p {
            Pending::TypeIncorrect(id) => {
                if self.wants(ViolationKind::Invariant, TYPE_CORRECTNESS) {
                    self.record(Violation {
                        kind: ViolationKind::Invariant,
                        property: TYPE_CORRECTNESS.into(),
                        message: Some("a use attribute lies outside its declared domain".into()),
                        trace: path_to(graph, id),
                    });
                }
            }
            Pending::Invariant(i, id) => {
                let name = &checks.invariants[i].name;
                if self.wants(ViolationKind::Invariant, name) {
                    self.record(Violation {
                        kind: ViolationKind::Invariant,
                        property: name.clone(),
                        message: None,
                        trace: path_to(graph, id),
                    });
                }
            }
            Pending::Monitor {
                monitor,
                id,
                label,
                post,
                statuses,
            } => {
                let m = &checks.monitors[monitor];
                if self.wants(ViolationKind::Safety, &m.name) {
                    let mut trace = path_to(graph, id);
                    trace.steps.push(TraceStep {
                        label: Some(label),
                        key: post,
                    });
                    self.record(monitor_violation(m, statuses.0, statuses.1, trace));
                }
            }
            Pending::Eval { id, message } => {
                if self.wants(ViolationKind::EvaluationError, "PolicyEvaluation") {
                    self.record(Violation {
                        kind: ViolationKind::EvaluationError,
                        property: "PolicyEvaluation".into(),
                        message: Some(message),
                        trace: path_to(graph, id),
                    });
                }
            }
            Pending::Deadlock(id) => {
                if self.wants(ViolationKind::Deadlock, "Deadlock") {
                    self.record(deadlock_violation(graph, id));
                }
            }
        }
    }
}

/// Explores the reachable state graph of `config` from the initial state.
pub fn explore(
    config: &SystemConfig,
    checks: &Checks,
    options: &ExploreOptions,
) -> Result<Exploration, ExploreError> {
    let started = Instant::now();
    let record_edges = options.record_edges || !checks.liveness.is_empty();
    let mode = if record_edges {
        StoreMode::Exact
    } else {
        options.store
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| ExploreError::Pool(e.to_string()))?;

    let mut graph = StateGraph {
        config: config.clone(),
        arena: KeyArena::new(),
        index: None,
        parent: vec![NO_PARENT],
        via: vec![NO_LABEL],
        level_start: vec![0],
        flags: vec![0],
        edges: record_edges.then(Csr::new),
    };
    let mut seen = match mode {
        StoreMode::Exact => Seen::Exact(KeyIndex::default()),
        StoreMode::Fingerprint => Seen::Fingerprint(FingerprintSet::default()),
    };
    let init = canonical_encode(&initial_world(), config)?;
    let id0 = graph.arena.push(init.as_bytes());
    seen.insert(hash_key(init.as_bytes()), id0, &graph.arena);

    let mut found = 1u64;
    let mut constrained = 0u64;
    let mut deadlocks = Vec::new();
    let mut diagnostics: BTreeMap<String, u64> = BTreeMap::new();
    let mut recorder = Recorder {
        by_name: BTreeMap::new(),
    };
    let workers = options.workers.max(1);
    let mut budget_hit = false;

    loop {
        let lo = *graph.level_start.last().expect("at least one level");
        let hi = graph.parent.len() as u32;
        if lo == hi {
            graph.level_start.pop();
            break;
        }
        let len = (hi - lo) as usize;
        let chunk = len.div_ceil(workers * 8).max(256);
        let ranges: Vec<std::ops::Range<u32>> = (lo..hi)
            .step_by(chunk)
            .map(|s| s..(s + chunk as u32).min(hi))
            .collect();
        let ctx = Ctx {
            config,
            checks,
            arena: &graph.arena,
            seen: &seen,
            edges: record_edges,
        };
        let outs: Vec<ChunkOut> = pool.install(|| {
            ranges
                .par_iter()
                .map(|r| expand_chunk(&ctx, r.clone()))
                .collect::<Result<Vec<_>, _>>()
        })?;

        // Merge in frontier order: first occurrence is the least
        // (parent, successor ordinal), as in sequential BFS.
        let mut table: HashTable<u32> = HashTable::new();
        let mut fresh: Vec<Cand> = Vec::new();
        let mut remaps: Vec<Vec<u32>> = Vec::with_capacity(outs.len());
        let mut outs = outs;
        for out in &mut outs {
            let mut remap = Vec::with_capacity(out.cands.len());
            for c in out.cands.drain(..) {
                let existing = table
                    .find(c.hash, |&g| fresh[g as usize].key == c.key)
                    .copied();
                match existing {
                    Some(g) => remap.push(g),
                    None => {
                        let g = fresh.len() as u32;
                        let hash = c.hash;
                        fresh.push(c);
                        table.insert_unique(hash, g, |&x| fresh[x as usize].hash);
                        remap.push(g);
                    }
                }
            }
            remaps.push(remap);
        }
        drop(table);

        // Apply per-state results.
        let mut id = lo;
        for (out, remap) in outs.iter_mut().zip(&remaps) {
            let mut prev_end = 0usize;
            for (i, &f) in out.flags.iter().enumerate() {
                graph.flags[id as usize] = f;
                if let Some(csr) = &mut graph.edges {
                    let end = out.edge_ends[i] as usize;
                    for &(label, target) in &out.edges[prev_end..end] {
                        csr.label.push(label);
                        csr.target.push(match target {
                            Target::Known(t) => t,
                            Target::Cand(c) => hi + remap[c as usize],
                        });
                    }
                    prev_end = end;
                    csr.close_state();
                }
                id += 1;
            }
            found += out.found;
            constrained += out.constrained;
            deadlocks.append(&mut out.deadlocks);
            for (k, v) in std::mem::take(&mut out.diagnostics) {
                *diagnostics.entry(k).or_default() += v;
            }
            for p in out.pending.drain(..) {
                recorder.accept(p, &graph, checks);
            }
        }

        if fresh.is_empty() {
            break;
        }
        if graph.parent.len() as u64 + fresh.len() as u64 > options.max_states {
            budget_hit = true;
            break;
        }
        seen.reserve(fresh.len(), &graph.arena);
        graph.level_start.push(hi);
        for c in &fresh {
            let nid = graph.arena.push(&c.key);
            seen.insert(c.hash, nid, &graph.arena);
            graph.parent.push(c.parent);
            graph.via.push(c.label);
            graph.flags.push(0);
        }
        if mode == StoreMode::Fingerprint {
            graph.arena.drop_before(hi);
        }
    }

    if let Seen::Exact(index) = seen {
        graph.index = Some(index);
    }
    let mut violations: Vec<Violation> = recorder.by_name.into_values().collect();
    if !budget_hit {
        for goal in &checks.liveness {
            violations.extend(check_leads_to(&graph, goal).expect("edges recorded for liveness"));
        }
    }
    violations.sort_by(|a, b| (a.kind, &a.property).cmp(&(b.kind, &b.property)));
    let result = ExplorationResult {
        diameter: graph.level_start.len() as u64,
        states_found: found,
        distinct_states: graph.len() as u64,
        deadlocks,
        violations,
        diagnostics: diagnostics
            .into_iter()
            .map(|(message, count)| Diagnostic { message, count })
            .collect(),
        constrained_states: constrained,
        elapsed: started.elapsed(),
        partial: budget_hit,
        approximate: mode == StoreMode::Fingerprint,
    };
    if budget_hit {
        return Err(ExploreError::MemoryBudgetExceeded {
            limit: options.max_states,
            partial: Box::new(result),
        });
    }
    Ok(Exploration { result, graph })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelKind, SystemBuilder, UseCounts};

    fn run(model: ModelKind, n: usize, policy: &str) -> ExplorationResult {
        let c = SystemBuilder::generated(model, UseCounts::uses(n))
            .policy_text(policy)
            .build()
            .unwrap();
        explore(
            &c,
            &Checks::default(),
            &ExploreOptions::default().workers(1),
        )
        .unwrap()
        .result
    }

    #[test]
    fn ongoing_two_uses() {
        let r = run(ModelKind::Ongoing, 2, "true");
        assert_eq!((r.diameter, r.states_found, r.distinct_states), (7, 33, 16));
    }

    #[test]
    fn pre_two_uses() {
        let r = run(ModelKind::Pre, 2, "true");
        assert_eq!((r.diameter, r.states_found, r.distinct_states), (7, 25, 16));
        assert_eq!(r.deadlocks.len(), 1);
        assert_eq!(r.deadlocks[0].class, DeadlockClass::ExpectedTerminal);
    }

    #[test]
    fn empty_system_is_one_expected_deadlock() {
        let r = run(ModelKind::Pre, 0, "true");
        assert_eq!((r.diameter, r.states_found, r.distinct_states), (1, 1, 1));
        assert_eq!(r.deadlocks.len(), 1);
        assert_eq!(r.deadlocks[0].class, DeadlockClass::ExpectedTerminal);
    }

    #[test]
    fn budget_abort_reports_partial_statistics() {
        let c = SystemBuilder::generated(ModelKind::Pre, UseCounts::uses(3))
            .build()
            .unwrap();
        let opts = ExploreOptions {
            max_states: 10,
            ..ExploreOptions::default()
        };
        match explore(&c, &Checks::default(), &opts) {
            Err(ExploreError::MemoryBudgetExceeded { limit, partial }) => {
                assert_eq!(limit, 10);
                assert!(partial.partial);
                assert!(partial.distinct_states <= 10);
            }
            other => panic!("expected budget abort, got {other:?}"),
        }
    }

    #[test]
    fn fingerprint_mode_matches_exact_counts_and_traces() {
        let c = SystemBuilder::generated(ModelKind::Pre, UseCounts::uses(3))
            .policy_text("false")
            .build()
            .unwrap();
        let checks = Checks {
            invariants: vec![StateInvariant::new("NoDenied", |w, _| {
                w.count_status(crate::model::UseStatus::Denied) == 0
            })],
            ..Checks::default()
        };
        let exact = explore(&c, &checks, &ExploreOptions::default())
            .unwrap()
            .result;
        let fp = explore(
            &c,
            &checks,
            &ExploreOptions {
                store: StoreMode::Fingerprint,
                ..ExploreOptions::default()
            },
        )
        .unwrap()
        .result;
        assert!(fp.approximate && !exact.approximate);
        assert_eq!(
            (exact.diameter, exact.states_found, exact.distinct_states),
            (fp.diameter, fp.states_found, fp.distinct_states)
        );
        assert_eq!(exact.violations, fp.violations);
        assert_eq!(exact.violations[0].trace.len(), 3);
        exact.violations[0].trace.replay(&c).unwrap();
    }
}
