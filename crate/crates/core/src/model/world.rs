//! Entities, use records and the world state.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::value::{EntityId, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityKind {
    Subject,
    Object,
    Action,
}

impl EntityKind {
    pub const ALL: [EntityKind; 3] = [EntityKind::Subject, EntityKind::Object, EntityKind::Action];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Subject => "subject",
            EntityKind::Object => "object",
            EntityKind::Action => "action",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "subject" => Ok(EntityKind::Subject),
            "object" => Ok(EntityKind::Object),
            "action" => Ok(EntityKind::Action),
            other => Err(format!("unknown entity kind '{other}'")),
        }
    }
}

/// A constant attributed record. The `id` attribute is always present and
/// holds the entity's own handle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub kind: EntityKind,
    pub id: EntityId,
    pub name: String,
    pub attrs: BTreeMap<String, Value>,
}

impl Entity {
    pub fn attr(&self, name: &str) -> Option<&Value> {
        self.attrs.get(name)
    }
}

/// Status of a use. No other status is representable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UseStatus {
    Requested,
    Activated,
    Denied,
    Stopped,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("'{0}' is not a use status")]
pub struct UnknownStatus(pub String);

impl UseStatus {
    pub const ALL: [UseStatus; 5] = [
        UseStatus::Requested,
        UseStatus::Activated,
        UseStatus::Denied,
        UseStatus::Stopped,
        UseStatus::Completed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            UseStatus::Requested => "requested",
            UseStatus::Activated => "activated",
            UseStatus::Denied => "denied",
            UseStatus::Stopped => "stopped",
            UseStatus::Completed => "completed",
        }
    }

    /// Nibble code used by the state encoding; 0 is reserved for "absent".
    pub(crate) fn code(self) -> u8 {
        self as u8 + 1
    }

    pub(crate) fn from_code(code: u8) -> Option<UseStatus> {
        match code {
            1..=5 => Some(UseStatus::ALL[code as usize - 1]),
            _ => None,
        }
    }

    pub(crate) fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl fmt::Display for UseStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UseStatus {
    type Err = UnknownStatus;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        UseStatus::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| UnknownStatus(s.to_string()))
    }
}

/// The `(sid, aid, oid)` identity of a use. Ordering is lexicographic on
/// the three ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UseKey {
    pub sid: EntityId,
    pub aid: EntityId,
    pub oid: EntityId,
}

/// A use record. `attrs` is aligned with the configuration's declared use
/// attributes (sorted by name).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Use {
    pub key: UseKey,
    pub st: UseStatus,
    pub attrs: Vec<Value>,
}

/// A system state: the set of uses, kept sorted by key, plus a logical clock.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct World {
    pub uses: Vec<Use>,
    pub tick: u64,
}

/// `Init`: no uses, clock at zero.
pub fn initial_world() -> World {
    World::default()
}

impl World {
    pub fn get(&self, key: &UseKey) -> Option<&Use> {
        self.uses
            .binary_search_by(|u| u.key.cmp(key))
            .ok()
            .map(|i| &self.uses[i])
    }

    pub fn contains(&self, key: &UseKey) -> bool {
        self.get(key).is_some()
    }

    /// Inserts a use whose key is not yet present. Returns `false` and leaves
    /// the world unchanged if the key already exists.
    pub fn insert(&mut self, u: Use) -> bool {
        match self.uses.binary_search_by(|x| x.key.cmp(&u.key)) {
            Ok(_) => false,
            Err(pos) => {
                self.uses.insert(pos, u);
                true
            }
        }
    }

    /// `(U \ {u}) ∪ {u'}` for a use with the same key.
    pub fn replace(&mut self, u: Use) -> bool {
        match self.uses.binary_search_by(|x| x.key.cmp(&u.key)) {
            Ok(pos) => {
                self.uses[pos] = u;
                true
            }
            Err(_) => false,
        }
    }

    /// Builds a world from arbitrary uses, sorting them by key. Duplicate
    /// keys are kept so that invariant checks can observe them.
    pub fn from_uses(uses: impl IntoIterator<Item = Use>, tick: u64) -> World {
        let mut uses: Vec<Use> = uses.into_iter().collect();
        uses.sort_by_key(|u| u.key);
        World { uses, tick }
    }

    pub fn count_status(&self, st: UseStatus) -> usize {
        self.uses.iter().filter(|u| u.st == st).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(s: u32, a: u32, o: u32) -> UseKey {
        UseKey {
            sid: EntityId(s),
            aid: EntityId(a),
            oid: EntityId(o),
        }
    }

    #[test]
    fn exactly_five_statuses() {
        assert_eq!(UseStatus::ALL.len(), 5);
        for st in UseStatus::ALL {
            assert_eq!(st.as_str().parse::<UseStatus>(), Ok(st));
            assert_eq!(UseStatus::from_code(st.code()), Some(st));
        }
        assert!("paused".parse::<UseStatus>().is_err());
        assert_eq!(UseStatus::from_code(0), None);
        assert_eq!(UseStatus::from_code(6), None);
    }

    #[test]
    fn insert_keeps_key_order_and_rejects_duplicates() {
        let mut w = initial_world();
        let mk = |k| Use {
            key: k,
            st: UseStatus::Requested,
            attrs: vec![],
        };
        assert!(w.insert(mk(key(0, 1, 3))));
        assert!(w.insert(mk(key(0, 1, 2))));
        assert!(!w.insert(mk(key(0, 1, 2))));
        assert_eq!(w.uses[0].key, key(0, 1, 2));
        assert_eq!(w.uses.len(), 2);
    }

    #[test]
    fn initial_world_is_empty() {
        let w = initial_world();
        assert!(w.uses.is_empty());
        assert_eq!(w.tick, 0);
    }
}
