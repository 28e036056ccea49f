//! Key storage and the deduplication index of the explorer.

use std::hash::BuildHasher;

use foldhash::quality::FixedState;
use hashbrown::HashTable;

const SEED: u64 = 0x5eed_0f57_a7e5;

pub(crate) fn hash_key(bytes: &[u8]) -> u64 {
    FixedState::with_seed(SEED).hash_one(bytes)
}

/// Concatenated keys of consecutive state ids starting at `base`.
#[derive(Debug, Clone, Default)]
pub(crate) struct KeyArena {
    bytes: Vec<u8>,
    /// `offsets[i]..offsets[i + 1]` holds state `base + i`.
    offsets: Vec<u64>,
    base: u32,
}

impl KeyArena {
    pub(crate) fn new() -> Self {
        KeyArena {
            bytes: Vec::new(),
            offsets: vec![0],
            base: 0,
        }
    }

    /// Id one past the last stored key.
    pub(crate) fn end(&self) -> u32 {
        self.base + (self.offsets.len() - 1) as u32
    }

    pub(crate) fn push(&mut self, key: &[u8]) -> u32 {
        let id = self.end();
        self.bytes.extend_from_slice(key);
        self.offsets.push(self.bytes.len() as u64);
        id
    }

    pub(crate) fn get(&self, id: u32) -> Option<&[u8]> {
        let i = id.checked_sub(self.base)? as usize;
        if i + 1 >= self.offsets.len() {
            return None;
        }
        Some(&self.bytes[self.offsets[i] as usize..self.offsets[i + 1] as usize])
    }

    /// Forgets every key below `id`.
    pub(crate) fn drop_before(&mut self, id: u32) {
        let Some(cut) = id.checked_sub(self.base).map(|c| c as usize) else {
            return;
        };
        let cut = cut.min(self.offsets.len() - 1);
        let start = self.offsets[cut];
        self.bytes.drain(..start as usize);
        self.offsets.drain(..cut);
        for o in &mut self.offsets {
            *o -= start;
        }
        self.base += cut as u32;
    }
}

/// Exact index from key to id, hashing keys out of the arena.
#[derive(Debug, Clone, Default)]
pub(crate) struct KeyIndex {
    table: HashTable<u32>,
}

impl KeyIndex {
    pub(crate) fn find(&self, hash: u64, key: &[u8], arena: &KeyArena) -> Option<u32> {
        self.table
            .find(hash, |&id| arena.get(id) == Some(key))
            .copied()
    }

    /// Inserts `id`, whose key is already in `arena` and absent from the index.
    pub(crate) fn insert(&mut self, hash: u64, id: u32, arena: &KeyArena) {
        self.table.insert_unique(hash, id, |&other| {
            hash_key(arena.get(other).expect("indexed key is stored"))
        });
    }

    pub(crate) fn reserve(&mut self, extra: usize, arena: &KeyArena) {
        self.table.reserve(extra, |&other| {
            hash_key(arena.get(other).expect("indexed key is stored"))
        });
    }
}

/// Set of 64-bit key hashes. Two distinct keys with equal hashes collapse
/// into one state.
#[derive(Debug, Clone, Default)]
pub(crate) struct FingerprintSet {
    table: HashTable<u64>,
}

impl FingerprintSet {
    pub(crate) fn contains(&self, fp: u64) -> bool {
        self.table.find(fp, |&x| x == fp).is_some()
    }

    pub(crate) fn insert(&mut self, fp: u64) {
        self.table.insert_unique(fp, fp, |&x| x);
    }

    pub(crate) fn reserve(&mut self, extra: usize) {
        self.table.reserve(extra, |&x| x);
    }
}

/// Seen-set of the explorer in either storage mode.
#[derive(Debug, Clone)]
pub(crate) enum Seen {
    Exact(KeyIndex),
    Fingerprint(FingerprintSet),
}

pub(crate) enum Lookup {
    /// Seen before; the id is known only in exact mode.
    Seen(Option<u32>),
    New,
}

impl Seen {
    pub(crate) fn lookup(&self, hash: u64, key: &[u8], arena: &KeyArena) -> Lookup {
        match self {
            Seen::Exact(idx) => match idx.find(hash, key, arena) {
                Some(id) => Lookup::Seen(Some(id)),
                None => Lookup::New,
            },
            Seen::Fingerprint(set) => {
                if set.contains(hash) {
                    Lookup::Seen(None)
                } else {
                    Lookup::New
                }
            }
        }
    }

    pub(crate) fn reserve(&mut self, extra: usize, arena: &KeyArena) {
        match self {
            Seen::Exact(idx) => idx.reserve(extra, arena),
            Seen::Fingerprint(set) => set.reserve(extra),
        }
    }

    pub(crate) fn insert(&mut self, hash: u64, id: u32, arena: &KeyArena) {
        match self {
            Seen::Exact(idx) => idx.insert(hash, id, arena),
            Seen::Fingerprint(set) => set.insert(hash),
        }
    }
}
