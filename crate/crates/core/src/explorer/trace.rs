use thiserror::Error;

use super::graph::StateGraph;
use crate::model::{canonical_encode, initial_world, EncodeError, StateKey, SystemConfig, World};
use crate::transition::{step, ActionLabel, TransitionError};

/// One state of a trace and the label of the step that reached it (none for
/// the initial state).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub label: Option<ActionLabel>,
    pub key: StateKey,
}

/// A path from the initial state. For a lasso, `cycle_start` indexes the
/// state the final step returns to; the last key then equals that state's.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
    pub cycle_start: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("trace is empty")]
    Empty,
    #[error("trace does not start at the initial state")]
    BadInitial,
    #[error("step {index} has no label")]
    MissingLabel { index: usize },
    #[error("step {index} is not enabled: {source}")]
    StepFailed {
        index: usize,
        source: TransitionError,
    },
    #[error("step {index} has outcome {found:?}, trace says {expected:?}")]
    OutcomeMismatch {
        index: usize,
        expected: Option<crate::transition::Outcome>,
        found: Option<crate::transition::Outcome>,
    },
    #[error("step {index} reaches a different state than recorded")]
    KeyMismatch { index: usize },
    #[error("lasso does not close on state {0}")]
    OpenCycle(usize),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("state {0} is not in the graph")]
pub struct UnknownState(pub StateKey);

impl Trace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn last_key(&self) -> Option<&StateKey> {
        self.steps.last().map(|s| &s.key)
    }

    /// Re-executes every label from the initial state, checking outcomes,
    /// reached keys and lasso closure. Returns the replayed worlds.
    pub fn replay(&self, config: &SystemConfig) -> Result<Vec<World>, ReplayError> {
        let first = self.steps.first().ok_or(ReplayError::Empty)?;
        let mut world = initial_world();
        if canonical_encode(&world, config)? != first.key {
            return Err(ReplayError::BadInitial);
        }
        let mut worlds = vec![world.clone()];
        for (index, s) in self.steps.iter().enumerate().skip(1) {
            let label = s.label.ok_or(ReplayError::MissingLabel { index })?;
            let st = step(&world, label.kind, label.key, config)
                .map_err(|source| ReplayError::StepFailed { index, source })?;
            if st.label.outcome != label.outcome {
                return Err(ReplayError::OutcomeMismatch {
                    index,
                    expected: label.outcome,
                    found: st.label.outcome,
                });
            }
            if canonical_encode(&st.post, config)? != s.key {
                return Err(ReplayError::KeyMismatch { index });
            }
            world = st.post;
            worlds.push(world.clone());
        }
        if let Some(c) = self.cycle_start {
            let closes =
                c + 1 < self.steps.len() && self.steps[c].key == self.steps.last().unwrap().key;
            if !closes {
                return Err(ReplayError::OpenCycle(c));
            }
        }
        Ok(worlds)
    }

    /// One line per state, marking the lasso's return point.
    pub fn render(&self, config: &SystemConfig) -> String {
        let mut out = String::new();
        for (i, s) in self.steps.iter().enumerate() {
            let marker = if self.cycle_start == Some(i) {
                " <- cycle"
            } else {
                ""
            };
            let label = s
                .label
                .map_or_else(|| "Init".to_string(), |l| l.display(config));
            let world = crate::model::decode(s.key.as_bytes(), config)
                .map(|w| config.display_world(&w))
                .unwrap_or_else(|_| s.key.to_hex());
            out.push_str(&format!("  {i:>3}. {label:<32} {world}{marker}\n"));
        }
        out
    }
}

/// Shortest path from the initial state to `key`.
pub fn reconstruct_trace(graph: &StateGraph, key: &StateKey) -> Result<Trace, UnknownState> {
    let id = graph.id_of(key).ok_or_else(|| UnknownState(key.clone()))?;
    Ok(path_to(graph, id))
}

/// Tree path from the initial state to `id`. Keys missing from the graph
/// (fingerprint mode) are recomputed by replaying the labels.
pub(crate) fn path_to(graph: &StateGraph, id: u32) -> Trace {
    let mut ids = vec![id];
    let mut cur = id;
    while let Some(p) = graph.parent(cur) {
        ids.push(p);
        cur = p;
    }
    ids.reverse();
    let labels: Vec<Option<ActionLabel>> = ids.iter().map(|&i| graph.label(i)).collect();
    let keys: Option<Vec<StateKey>> = ids.iter().map(|&i| graph.key(i)).collect();
    let keys = keys.unwrap_or_else(|| replay_keys(&labels, graph.config()));
    Trace {
        steps: labels
            .into_iter()
            .zip(keys)
            .map(|(label, key)| TraceStep { label, key })
            .collect(),
        cycle_start: None,
    }
}

fn replay_keys(labels: &[Option<ActionLabel>], config: &SystemConfig) -> Vec<StateKey> {
    let mut world = initial_world();
    let mut keys = vec![canonical_encode(&world, config).expect("initial state encodes")];
    for l in labels.iter().skip(1).flatten() {
        world = step(&world, l.kind, l.key, config)
            .expect("tree labels replay")
            .post;
        keys.push(canonical_encode(&world, config).expect("reachable states encode"));
    }
    keys
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explorer::{explore, Checks, ExploreOptions};
    use crate::model::{ModelKind, SystemBuilder, UseCounts, UseStatus};
    use crate::transition::Outcome;

    #[test]
    fn shortest_trace_to_the_final_state_replays() {
        let c = SystemBuilder::generated(ModelKind::Pre, UseCounts::uses(2))
            .build()
            .unwrap();
        let g = explore(&c, &Checks::none(), &ExploreOptions::default())
            .unwrap()
            .graph;
        let last = g.key(g.len() as u32 - 1).unwrap();
        let t = reconstruct_trace(&g, &last).unwrap();
        assert_eq!(t.len(), 7);
        let worlds = t.replay(&c).unwrap();
        assert_eq!(worlds.last().unwrap().count_status(UseStatus::Completed), 2);
        assert!(t.render(&c).lines().count() == 7);

        let mut bad = t.clone();
        let step = bad
            .steps
            .iter_mut()
            .find(|s| s.label.is_some_and(|l| l.outcome.is_some()))
            .unwrap();
        step.label.as_mut().unwrap().outcome = Some(Outcome::Denied);
        assert!(matches!(
            bad.replay(&c),
            Err(ReplayError::OutcomeMismatch { .. })
        ));

        let mut open = t.clone();
        open.cycle_start = Some(0);
        assert_eq!(open.replay(&c), Err(ReplayError::OpenCycle(0)));
        assert_eq!(Trace::default().replay(&c), Err(ReplayError::Empty));
    }

    #[test]
    fn unknown_key_is_rejected() {
        let c = SystemBuilder::generated(ModelKind::Pre, UseCounts::uses(1))
            .build()
            .unwrap();
        let g = explore(&c, &Checks::none(), &ExploreOptions::default())
            .unwrap()
            .graph;
        let two = SystemBuilder::generated(ModelKind::Pre, UseCounts::uses(2))
            .build()
            .unwrap();
        let mut u = two.create_use(two.candidates()[1]);
        u.st = UseStatus::Denied;
        let foreign = crate::model::canonical_encode(&World::from_uses([u], 0), &two).unwrap();
        assert!(reconstruct_trace(&g, &foreign).is_err());
    }
}
