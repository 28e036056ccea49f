//! Leads-to checking per use slot, with optional weak fairness over action
//! kinds.

use std::collections::VecDeque;

use thiserror::Error;

use super::graph::{packed_kind, unpack_label, StateGraph};
use super::trace::{path_to, Trace, TraceStep};
use super::{Violation, ViolationKind};
use crate::model::{status_in_key, UseStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Fairness {
    /// Every infinite path counts.
    None,
    /// Paths that forever neglect an action kind enabled throughout are
    /// discarded.
    #[default]
    Weak,
}

impl Fairness {
    pub fn as_str(self) -> &'static str {
        match self {
            Fairness::None => "none",
            Fairness::Weak => "weak",
        }
    }
}

/// `P ⤳ Q` over the status of each use: once a use satisfies `P` it
/// eventually satisfies `Q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeadsToGoal {
    pub name: String,
    from: u8,
    to: u8,
    pub fairness: Fairness,
}

impl LeadsToGoal {
    pub fn new(name: impl Into<String>, from: &[UseStatus], to: &[UseStatus]) -> Self {
        LeadsToGoal {
            name: name.into(),
            from: from.iter().fold(0, |m, s| m | s.bit()),
            to: to.iter().fold(0, |m, s| m | s.bit()),
            fairness: Fairness::default(),
        }
    }

    pub fn with_fairness(mut self, fairness: Fairness) -> Self {
        self.fairness = fairness;
        self
    }

    pub fn source(&self) -> Vec<UseStatus> {
        UseStatus::ALL
            .into_iter()
            .filter(|s| self.from & s.bit() != 0)
            .collect()
    }

    pub fn target(&self) -> Vec<UseStatus> {
        UseStatus::ALL
            .into_iter()
            .filter(|s| self.to & s.bit() != 0)
            .collect()
    }

    fn p(&self, st: Option<UseStatus>) -> bool {
        st.is_some_and(|s| self.from & s.bit() != 0)
    }

    fn q(&self, st: Option<UseStatus>) -> bool {
        st.is_some_and(|s| self.to & s.bit() != 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LivenessError {
    #[error("leads-to checking needs a graph with recorded edges and keys")]
    MissingEdges,
}

const NONE: u32 = u32::MAX;

/// Checks `goal` for every use slot and reports the first failing slot
/// with a finite trace to a stuck state or a lasso.
pub fn check_leads_to(
    graph: &StateGraph,
    goal: &LeadsToGoal,
) -> Result<Vec<Violation>, LivenessError> {
    if !graph.has_edges() || !graph.has_keys() {
        return Err(LivenessError::MissingEdges);
    }
    let mut local = vec![NONE; graph.len()];
    for slot in 0..graph.config().candidates().len() {
        if let Some(v) = check_slot(graph, goal, slot, &mut local) {
            return Ok(vec![v]);
        }
    }
    Ok(Vec::new())
}

fn status(graph: &StateGraph, id: u32, slot: usize) -> Option<UseStatus> {
    status_in_key(graph.arena.get(id).expect("exact graph"), slot)
}

struct Region {
    /// Members in discovery order.
    nodes: Vec<u32>,
    /// Discovery predecessor within the region as `(local parent, label)`.
    pred: Vec<(u32, u32)>,
}

fn check_slot(
    graph: &StateGraph,
    goal: &LeadsToGoal,
    slot: usize,
    local: &mut [u32],
) -> Option<Violation> {
    let n = graph.len() as u32;
    let mut region = Region {
        nodes: Vec::new(),
        pred: Vec::new(),
    };
    let mut queue = VecDeque::new();
    for id in 0..n {
        let st = status(graph, id, slot);
        if goal.p(st) && !goal.q(st) {
            local[id as usize] = region.nodes.len() as u32;
            region.nodes.push(id);
            region.pred.push((NONE, 0));
            queue.push_back(id);
        }
    }
    while let Some(id) = queue.pop_front() {
        let (labels, targets) = graph.out_packed(id);
        for (&l, &t) in labels.iter().zip(targets) {
            if local[t as usize] == NONE && !goal.q(status(graph, t, slot)) {
                local[t as usize] = region.nodes.len() as u32;
                region.nodes.push(t);
                region.pred.push((local[id as usize], l));
                queue.push_back(t);
            }
        }
    }
    let result = find_counterexample(graph, goal, slot, &region, local);
    for &id in &region.nodes {
        local[id as usize] = NONE;
    }
    result
}

fn find_counterexample(
    graph: &StateGraph,
    goal: &LeadsToGoal,
    slot: usize,
    region: &Region,
    local: &[u32],
) -> Option<Violation> {
    let key_text = graph
        .config()
        .display_key(&graph.config().candidates()[slot]);
    if let Some(stuck) = region.nodes.iter().position(|&id| graph.is_terminal(id)) {
        return Some(Violation {
            kind: ViolationKind::Liveness,
            property: goal.name.clone(),
            message: Some(format!(
                "use {key_text} gets stuck without reaching the goal"
            )),
            trace: prefix_to(graph, region, stuck as u32),
        });
    }
    let sccs = tarjan(graph, region, local);
    for comp in sccs {
        let in_comp = |id: u32| {
            let l = local[id as usize];
            l != NONE && comp.binary_search(&l).is_ok()
        };
        let mut internal = false;
        let mut taken = 0u8;
        let mut enabled_all = 0x1fu8;
        for &l in &comp {
            let id = region.nodes[l as usize];
            let (labels, targets) = graph.out_packed(id);
            let mut enabled = 0u8;
            for (&lab, &t) in labels.iter().zip(targets) {
                enabled |= 1 << packed_kind(lab);
                if in_comp(t) {
                    internal = true;
                    taken |= 1 << packed_kind(lab);
                }
            }
            enabled_all &= enabled;
        }
        if !internal {
            continue;
        }
        let required = match goal.fairness {
            Fairness::None => 0,
            Fairness::Weak => {
                if enabled_all & !taken != 0 {
                    continue;
                }
                enabled_all
            }
        };
        let entry = *comp.iter().min().expect("non-empty component");
        let mut trace = prefix_to(graph, region, entry);
        let cycle_start = trace.steps.len() - 1;
        let cycle = lasso_cycle(graph, region.nodes[entry as usize], required, &in_comp);
        trace.steps.extend(cycle);
        trace.cycle_start = Some(cycle_start);
        return Some(Violation {
            kind: ViolationKind::Liveness,
            property: goal.name.clone(),
            message: Some(format!(
                "use {key_text} can cycle forever without reaching the goal (fairness {})",
                goal.fairness.as_str()
            )),
            trace,
        });
    }
    None
}

/// Tree path to the region's seed, then the discovery path to `target`.
fn prefix_to(graph: &StateGraph, region: &Region, target: u32) -> Trace {
    let mut tail = Vec::new();
    let mut cur = target;
    while region.pred[cur as usize].0 != NONE {
        let (p, l) = region.pred[cur as usize];
        tail.push((l, region.nodes[cur as usize]));
        cur = p;
    }
    let mut trace = path_to(graph, region.nodes[cur as usize]);
    for (l, id) in tail.into_iter().rev() {
        trace.steps.push(TraceStep {
            label: Some(unpack_label(l, graph.config())),
            key: graph.key(id).expect("exact graph"),
        });
    }
    trace
}

/// Shortest path inside the component from `from` to the source of some
/// edge accepted by `want`, followed by that edge.
fn walk_to_edge(
    graph: &StateGraph,
    from: u32,
    in_comp: &dyn Fn(u32) -> bool,
    want: &dyn Fn(u32, u32, u32) -> bool,
) -> Vec<(u32, u32)> {
    let mut pred: std::collections::HashMap<u32, (u32, u32)> = Default::default();
    let mut queue = VecDeque::from([from]);
    let mut seen = std::collections::HashSet::from([from]);
    while let Some(id) = queue.pop_front() {
        let (labels, targets) = graph.out_packed(id);
        for (&l, &t) in labels.iter().zip(targets) {
            if !in_comp(t) {
                continue;
            }
            if want(id, l, t) {
                let mut path = vec![(l, t)];
                let mut cur = id;
                while cur != from {
                    let (p, pl) = pred[&cur];
                    path.push((pl, cur));
                    cur = p;
                }
                path.reverse();
                return path;
            }
            if seen.insert(t) {
                pred.insert(t, (id, l));
                queue.push_back(t);
            }
        }
    }
    Vec::new()
}

/// A cycle from `entry` back to itself inside the component, taking an edge
/// of every action kind in `required` and at least one edge.
fn lasso_cycle(
    graph: &StateGraph,
    entry: u32,
    required: u8,
    in_comp: &dyn Fn(u32) -> bool,
) -> Vec<TraceStep> {
    let mut path: Vec<(u32, u32)> = Vec::new();
    let mut cur = entry;
    let mut pending = required;
    if pending == 0 {
        path.extend(walk_to_edge(graph, cur, in_comp, &|_, _, _| true));
        cur = path.last().map_or(cur, |&(_, t)| t);
    }
    while pending != 0 {
        let kind = pending.trailing_zeros() as u8;
        pending &= !(1 << kind);
        let leg = walk_to_edge(graph, cur, in_comp, &|_, l, _| packed_kind(l) == kind);
        for &(l, _) in &leg {
            pending &= !(1 << packed_kind(l));
        }
        cur = leg.last().map_or(cur, |&(_, t)| t);
        path.extend(leg);
    }
    if cur != entry {
        path.extend(walk_to_edge(graph, cur, in_comp, &|_, _, t| t == entry));
    }
    path.into_iter()
        .map(|(l, t)| TraceStep {
            label: Some(unpack_label(l, graph.config())),
            key: graph.key(t).expect("exact graph"),
        })
        .collect()
}

/// Strongly connected components of the region's induced subgraph, as
/// sorted lists of local indices.
fn tarjan(graph: &StateGraph, region: &Region, local: &[u32]) -> Vec<Vec<u32>> {
    let m = region.nodes.len();
    let mut index = vec![NONE; m];
    let mut low = vec![0u32; m];
    let mut on_stack = vec![false; m];
    let mut stack: Vec<u32> = Vec::new();
    let mut out = Vec::new();
    let mut counter = 0u32;
    let succ = |v: u32| -> Vec<u32> {
        let (_, targets) = graph.out_packed(region.nodes[v as usize]);
        targets
            .iter()
            .map(|&t| local[t as usize])
            .filter(|&l| l != NONE)
            .collect()
    };
    for root in 0..m as u32 {
        if index[root as usize] != NONE {
            continue;
        }
        let mut call: Vec<(u32, Vec<u32>, usize)> = Vec::new();
        index[root as usize] = counter;
        low[root as usize] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root as usize] = true;
        call.push((root, succ(root), 0));
        while let Some((v, succs, pos)) = call.last_mut() {
            let v = *v;
            if *pos < succs.len() {
                let w = succs[*pos];
                *pos += 1;
                if index[w as usize] == NONE {
                    index[w as usize] = counter;
                    low[w as usize] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w as usize] = true;
                    let s = succ(w);
                    call.push((w, s, 0));
                } else if on_stack[w as usize] {
                    low[v as usize] = low[v as usize].min(index[w as usize]);
                }
                continue;
            }
            call.pop();
            if let Some((u, _, _)) = call.last() {
                low[*u as usize] = low[*u as usize].min(low[v as usize]);
            }
            if low[v as usize] == index[v as usize] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w as usize] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                out.push(comp);
            }
        }
    }
    out
}
