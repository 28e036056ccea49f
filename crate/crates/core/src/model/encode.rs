//! Canonical byte encoding of worlds.
//!
//! Layout, relative to a configuration:
//!
//! * one nibble per candidate slot: `0` when the use is absent, otherwise the
//!   status code `1..=5`;
//! * for each present use in slot order, each declared attribute: the varint
//!   `index + 1` of the value in its domain, or `0` followed by the full
//!   tagged value when the value lies outside the domain;
//! * the varint tick, only when the configuration is tick-dependent.

use std::fmt;
use std::sync::Arc;

use smallvec::SmallVec;
use thiserror::Error;

use super::config::SystemConfig;
use super::value::{EntityId, Value};
use super::world::{Use, UseStatus, World};

/// Canonical identity of a state.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey(pub(crate) SmallVec<[u8; 16]>);

impl StateKey {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Self {
        StateKey(SmallVec::from_slice(bytes))
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(s: &str) -> Option<StateKey> {
        if !s.len().is_multiple_of(2) {
            return None;
        }
        (0..s.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(s.get(i..i + 2)?, 16).ok())
            .collect::<Option<SmallVec<_>>>()
            .map(StateKey)
    }
}

impl fmt::Debug for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StateKey({})", self.to_hex())
    }
}

impl fmt::Display for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("use is not a candidate of this system")]
    NotCandidate,
    #[error("two uses share a key")]
    DuplicateKey,
    #[error("use carries {found} attributes, expected {expected}")]
    AttributeCount { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("state key is truncated")]
    Truncated,
    #[error("invalid status nibble {0}")]
    BadStatus(u8),
    #[error("invalid value tag {0}")]
    BadTag(u8),
    #[error("{0} trailing bytes in state key")]
    Trailing(usize),
}

/// Encodes `world` relative to `config`.
pub fn canonical_encode(world: &World, config: &SystemConfig) -> Result<StateKey, EncodeError> {
    let mut buf = SmallVec::new();
    encode_into(world, config, &mut buf)?;
    Ok(StateKey(buf))
}

pub(crate) fn encode_into(
    world: &World,
    config: &SystemConfig,
    buf: &mut SmallVec<[u8; 16]>,
) -> Result<(), EncodeError> {
    buf.clear();
    let n = config.candidates().len();
    buf.resize(n.div_ceil(2), 0);
    let decls = config.use_attrs();
    let mut slots: SmallVec<[(usize, &Use); 16]> = SmallVec::with_capacity(world.uses.len());
    for u in &world.uses {
        let slot = config.slot_of(&u.key).ok_or(EncodeError::NotCandidate)?;
        if u.attrs.len() != decls.len() {
            return Err(EncodeError::AttributeCount {
                expected: decls.len(),
                found: u.attrs.len(),
            });
        }
        let shift = (slot % 2) * 4;
        if (buf[slot / 2] >> shift) & 0xf != 0 {
            return Err(EncodeError::DuplicateKey);
        }
        buf[slot / 2] |= u.st.code() << shift;
        slots.push((slot, u));
    }
    if !decls.is_empty() {
        // Uses are key-sorted, and slot order is key order; sort anyway so
        // hand-built worlds encode canonically.
        slots.sort_by_key(|(s, _)| *s);
        for (_, u) in &slots {
            for (d, v) in decls.iter().zip(&u.attrs) {
                match d.domain.index_of(v) {
                    Some(i) => put_varint(buf, i as u64 + 1),
                    None => {
                        buf.push(0);
                        put_value(buf, v);
                    }
                }
            }
        }
    }
    if config.tick_dependent() {
        put_varint(buf, world.tick);
    }
    Ok(())
}

/// Inverse of [`canonical_encode`]. The tick decodes as zero when it is not
/// part of state identity.
pub fn decode(bytes: &[u8], config: &SystemConfig) -> Result<World, DecodeError> {
    let candidates = config.candidates();
    let nib = candidates.len().div_ceil(2);
    if bytes.len() < nib {
        return Err(DecodeError::Truncated);
    }
    let mut world = World::default();
    for (slot, key) in candidates.iter().enumerate() {
        let code = (bytes[slot / 2] >> ((slot % 2) * 4)) & 0xf;
        if code == 0 {
            continue;
        }
        let st = UseStatus::from_code(code).ok_or(DecodeError::BadStatus(code))?;
        world.uses.push(Use {
            key: *key,
            st,
            attrs: Vec::new(),
        });
    }
    if candidates.len() % 2 == 1 && bytes[nib - 1] >> 4 != 0 {
        return Err(DecodeError::BadStatus(bytes[nib - 1] >> 4));
    }
    let mut r = Reader { bytes, pos: nib };
    let decls = config.use_attrs();
    if !decls.is_empty() {
        for u in &mut world.uses {
            u.attrs.reserve_exact(decls.len());
            for d in decls {
                let idx = r.varint()?;
                let v = if idx == 0 {
                    r.value()?
                } else {
                    d.domain
                        .values()
                        .get(idx as usize - 1)
                        .cloned()
                        .ok_or(DecodeError::Truncated)?
                };
                u.attrs.push(v);
            }
        }
    }
    if config.tick_dependent() {
        world.tick = r.varint()?;
    }
    if r.pos != bytes.len() {
        return Err(DecodeError::Trailing(bytes.len() - r.pos));
    }
    Ok(world)
}

/// Status of candidate `slot` read straight from an encoded key.
pub fn status_in_key(bytes: &[u8], slot: usize) -> Option<UseStatus> {
    UseStatus::from_code((bytes[slot / 2] >> ((slot % 2) * 4)) & 0xf)
}

fn put_varint(buf: &mut SmallVec<[u8; 16]>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            buf.push(byte);
            return;
        }
        buf.push(byte | 0x80);
    }
}

fn put_value(buf: &mut SmallVec<[u8; 16]>, v: &Value) {
    match v {
        Value::Int(i) => {
            buf.push(0);
            put_varint(buf, ((i << 1) ^ (i >> 63)) as u64);
        }
        Value::Token(t) => {
            buf.push(1);
            put_varint(buf, t.len() as u64);
            buf.extend_from_slice(t.as_bytes());
        }
        Value::Id(id) => {
            buf.push(2);
            put_varint(buf, id.0 as u64);
        }
        Value::IdTuple(ids) => {
            buf.push(3);
            put_varint(buf, ids.len() as u64);
            for id in ids.iter() {
                put_varint(buf, id.0 as u64);
            }
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn byte(&mut self) -> Result<u8, DecodeError> {
        let b = *self.bytes.get(self.pos).ok_or(DecodeError::Truncated)?;
        self.pos += 1;
        Ok(b)
    }

    fn varint(&mut self) -> Result<u64, DecodeError> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.byte()?;
            v |= ((b & 0x7f) as u64) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(DecodeError::Truncated)
    }

    fn value(&mut self) -> Result<Value, DecodeError> {
        Ok(match self.byte()? {
            0 => {
                let z = self.varint()?;
                Value::Int(((z >> 1) as i64) ^ -((z & 1) as i64))
            }
            1 => {
                let len = self.varint()? as usize;
                let end = self.pos.checked_add(len).ok_or(DecodeError::Truncated)?;
                let s = self
                    .bytes
                    .get(self.pos..end)
                    .ok_or(DecodeError::Truncated)?;
                self.pos = end;
                Value::Token(Arc::from(String::from_utf8_lossy(s).as_ref()))
            }
            2 => Value::Id(EntityId(self.varint()? as u32)),
            3 => {
                let len = self.varint()? as usize;
                let ids = (0..len)
                    .map(|_| self.varint().map(|v| EntityId(v as u32)))
                    .collect::<Result<Vec<_>, _>>()?;
                Value::IdTuple(ids.into())
            }
            tag => return Err(DecodeError::BadTag(tag)),
        })
    }
}
