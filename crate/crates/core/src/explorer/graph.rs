//! The explored state graph.

use std::collections::{HashMap, VecDeque};
use std::io::{self, Write};

use super::store::{hash_key, KeyArena, KeyIndex};
use crate::model::{canonical_encode, EncodeError, StateKey, SystemConfig, World};
use crate::transition::{ActionKind, ActionLabel, Outcome};

pub(crate) const EXPANDED: u8 = 1;
pub(crate) const TERMINAL: u8 = 2;
pub(crate) const TYPE_INCORRECT: u8 = 4;
pub(crate) const EVAL_ERROR: u8 = 8;
pub(crate) const CONSTRAINED: u8 = 16;

pub(crate) const NO_PARENT: u32 = u32::MAX;
pub(crate) const NO_LABEL: u32 = u32::MAX;

/// `slot << 8 | kind << 4 | outcome`.
pub(crate) fn pack_label(label: &ActionLabel, config: &SystemConfig) -> u32 {
    let slot = config
        .slot_of(&label.key)
        .expect("labels name candidate uses") as u32;
    slot << 8 | (label.kind.code() as u32) << 4 | label.outcome.map_or(0, |o| o.code() as u32)
}

pub(crate) fn unpack_label(packed: u32, config: &SystemConfig) -> ActionLabel {
    ActionLabel {
        kind: ActionKind::from_code(((packed >> 4) & 0xf) as u8).expect("packed kind"),
        key: config.candidates()[(packed >> 8) as usize],
        outcome: Outcome::from_code((packed & 0xf) as u8).expect("packed outcome"),
    }
}

pub(crate) fn packed_kind(packed: u32) -> u8 {
    ((packed >> 4) & 0xf) as u8
}

pub(crate) fn packed_slot(packed: u32) -> usize {
    (packed >> 8) as usize
}

/// Out-edges in compressed sparse row form, in successor order.
#[derive(Debug, Clone, Default)]
pub(crate) struct Csr {
    pub(crate) start: Vec<u64>,
    pub(crate) label: Vec<u32>,
    pub(crate) target: Vec<u32>,
}

impl Csr {
    pub(crate) fn new() -> Self {
        Csr {
            start: vec![0],
            label: Vec::new(),
            target: Vec::new(),
        }
    }

    /// Closes the edge list of the next state.
    pub(crate) fn close_state(&mut self) {
        self.start.push(self.label.len() as u64);
    }

    pub(crate) fn range(&self, id: u32) -> std::ops::Range<usize> {
        let i = id as usize;
        if i + 1 >= self.start.len() {
            return 0..0;
        }
        self.start[i] as usize..self.start[i + 1] as usize
    }
}

/// Reachable states with ids in breadth-first order, one shortest-path
/// predecessor per state and, when recorded, every edge.
#[derive(Debug, Clone)]
pub struct StateGraph {
    pub(crate) config: SystemConfig,
    pub(crate) arena: KeyArena,
    /// Absent in fingerprint mode.
    pub(crate) index: Option<KeyIndex>,
    pub(crate) parent: Vec<u32>,
    pub(crate) via: Vec<u32>,
    /// First id of each BFS level.
    pub(crate) level_start: Vec<u32>,
    pub(crate) flags: Vec<u8>,
    pub(crate) edges: Option<Csr>,
}

impl StateGraph {
    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Number of BFS levels, counting the initial state's.
    pub fn depth(&self) -> usize {
        self.level_start.len()
    }

    /// Whether every state's key is retained (false in fingerprint mode).
    pub fn has_keys(&self) -> bool {
        self.index.is_some()
    }

    pub fn has_edges(&self) -> bool {
        self.edges.is_some()
    }

    pub fn key(&self, id: u32) -> Option<StateKey> {
        self.arena.get(id).map(StateKey::from_bytes)
    }

    pub fn id_of(&self, key: &StateKey) -> Option<u32> {
        let bytes = key.as_bytes();
        self.index
            .as_ref()?
            .find(hash_key(bytes), bytes, &self.arena)
    }

    pub fn level(&self, id: u32) -> usize {
        self.level_start.partition_point(|&s| s <= id) - 1
    }

    pub fn parent(&self, id: u32) -> Option<u32> {
        match self.parent.get(id as usize) {
            Some(&p) if p != NO_PARENT => Some(p),
            _ => None,
        }
    }

    /// Label of the edge from the parent.
    pub fn label(&self, id: u32) -> Option<ActionLabel> {
        match self.via.get(id as usize) {
            Some(&l) if l != NO_LABEL => Some(unpack_label(l, &self.config)),
            _ => None,
        }
    }

    /// A state with no enabled action.
    pub fn is_terminal(&self, id: u32) -> bool {
        self.flags[id as usize] & TERMINAL != 0
    }

    pub fn is_expanded(&self, id: u32) -> bool {
        self.flags[id as usize] & EXPANDED != 0
    }

    pub(crate) fn out_packed(&self, id: u32) -> (&[u32], &[u32]) {
        match &self.edges {
            Some(csr) => {
                let r = csr.range(id);
                (&csr.label[r.clone()], &csr.target[r])
            }
            None => (&[], &[]),
        }
    }

    /// Out-edges in successor order; empty when edges were not recorded.
    pub fn out_edges(&self, id: u32) -> impl Iterator<Item = (ActionLabel, u32)> + '_ {
        let (labels, targets) = self.out_packed(id);
        labels
            .iter()
            .zip(targets)
            .map(|(&l, &t)| (unpack_label(l, &self.config), t))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.as_ref().map_or(0, |c| c.label.len())
    }

    /// One line per edge: `<preKeyHex> <kind>:<sid,aid,oid>[:<outcome>] <postKeyHex>`.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> io::Result<()> {
        let Some(csr) = &self.edges else {
            return Err(io::Error::new(
                io::ErrorKind::Unsupported,
                "edges were not recorded",
            ));
        };
        if !self.has_keys() {
            return Err(io::Error::new(
                io::ErrorKind::Unsupported,
                "keys are not retained in fingerprint mode",
            ));
        }
        for id in 0..self.len() as u32 {
            let src = StateKey::from_bytes(self.arena.get(id).expect("exact graph"));
            for i in csr.range(id) {
                let dst = StateKey::from_bytes(self.arena.get(csr.target[i]).expect("exact graph"));
                let label = unpack_label(csr.label[i], &self.config);
                writeln!(w, "{} {} {}", src, label.display(&self.config), dst)?;
            }
        }
        Ok(())
    }
}

/// Builds a [`StateGraph`] by hand, for checking properties of graphs that
/// did not come from exploration. State `0` is the initial state; states
/// are renumbered in BFS order and unreachable ones are dropped.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    config: SystemConfig,
    keys: Vec<StateKey>,
    ids: HashMap<StateKey, usize>,
    edges: Vec<(usize, ActionLabel, usize)>,
}

impl GraphBuilder {
    pub fn new(config: &SystemConfig) -> Self {
        GraphBuilder {
            config: config.clone(),
            keys: Vec::new(),
            ids: HashMap::new(),
            edges: Vec::new(),
        }
    }

    pub fn state(&mut self, key: StateKey) -> usize {
        if let Some(&i) = self.ids.get(&key) {
            return i;
        }
        self.keys.push(key.clone());
        self.ids.insert(key, self.keys.len() - 1);
        self.keys.len() - 1
    }

    pub fn world(&mut self, world: &World) -> Result<usize, EncodeError> {
        Ok(self.state(canonical_encode(world, &self.config)?))
    }

    pub fn edge(&mut self, from: usize, label: ActionLabel, to: usize) -> &mut Self {
        self.edges.push((from, label, to));
        self
    }

    pub fn build(&self) -> StateGraph {
        let n = self.keys.len();
        let mut adj: Vec<Vec<(ActionLabel, usize)>> = vec![Vec::new(); n];
        for &(f, l, t) in &self.edges {
            adj[f].push((l, t));
        }
        let mut order = Vec::new();
        let mut new_id = vec![u32::MAX; n];
        let mut parent = Vec::new();
        let mut via = Vec::new();
        let mut level_start = Vec::new();
        let mut levels = Vec::new();
        if n > 0 {
            let mut queue = VecDeque::from([(0usize, 0usize)]);
            new_id[0] = 0;
            order.push(0);
            parent.push(NO_PARENT);
            via.push(NO_LABEL);
            levels.push(0);
            while let Some((s, lvl)) = queue.pop_front() {
                for &(l, t) in &adj[s] {
                    if new_id[t] == u32::MAX {
                        new_id[t] = order.len() as u32;
                        order.push(t);
                        parent.push(new_id[s]);
                        via.push(pack_label(&l, &self.config));
                        levels.push(lvl + 1);
                        queue.push_back((t, lvl + 1));
                    }
                }
            }
            for (i, &l) in levels.iter().enumerate() {
                if l == level_start.len() {
                    level_start.push(i as u32);
                }
            }
        }
        let mut arena = KeyArena::new();
        let mut index = KeyIndex::default();
        let mut csr = Csr::new();
        let mut flags = Vec::with_capacity(order.len());
        for &old in &order {
            let bytes = self.keys[old].as_bytes();
            let id = arena.push(bytes);
            index.insert(hash_key(bytes), id, &arena);
            for &(l, t) in &adj[old] {
                csr.label.push(pack_label(&l, &self.config));
                csr.target.push(new_id[t]);
            }
            csr.close_state();
            flags.push(EXPANDED | if adj[old].is_empty() { TERMINAL } else { 0 });
        }
        StateGraph {
            config: self.config.clone(),
            arena,
            index: Some(index),
            parent,
            via,
            level_start,
            flags,
            edges: Some(csr),
        }
    }
}
