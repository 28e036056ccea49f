//! Attribute values and their type tags.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Handle to an entity of a [`SystemConfig`](crate::SystemConfig).
///
/// Entities are stored sorted by their textual id, so the derived ordering
/// of handles is the lexicographic ordering of ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub(crate) u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ValueType {
    Int,
    Token,
    Id,
    IdTuple,
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueType::Int => "integer",
            ValueType::Token => "token",
            ValueType::Id => "identity",
            ValueType::IdTuple => "identity-tuple",
        })
    }
}

/// A tagged attribute value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Int(i64),
    Token(Arc<str>),
    Id(EntityId),
    IdTuple(Arc<[EntityId]>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("cannot compare {left} with {right}")]
pub struct TypeMismatch {
    pub left: ValueType,
    pub right: ValueType,
}

impl Value {
    pub fn token(s: &str) -> Self {
        Value::Token(Arc::from(s))
    }

    pub fn value_type(&self) -> ValueType {
        match self {
            Value::Int(_) => ValueType::Int,
            Value::Token(_) => ValueType::Token,
            Value::Id(_) => ValueType::Id,
            Value::IdTuple(_) => ValueType::IdTuple,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    /// Orders two values of the same tag. Values of different tags never
    /// compare, not even for equality.
    pub fn try_cmp(&self, other: &Value) -> Result<Ordering, TypeMismatch> {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => Ok(a.cmp(b)),
            (Value::Token(a), Value::Token(b)) => Ok(a.cmp(b)),
            (Value::Id(a), Value::Id(b)) => Ok(a.cmp(b)),
            (Value::IdTuple(a), Value::IdTuple(b)) => Ok(a.cmp(b)),
            _ => Err(TypeMismatch {
                left: self.value_type(),
                right: other.value_type(),
            }),
        }
    }

    /// Total order used for sorting domains: by tag first, then by value.
    pub(crate) fn canonical_cmp(&self, other: &Value) -> Ordering {
        self.value_type()
            .cmp(&other.value_type())
            .then_with(|| self.try_cmp(other).unwrap_or(Ordering::Equal))
    }
}

/// A value as written in a system description, before identity references
/// are resolved against the entity table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawValue {
    Int(i64),
    Token(String),
    IdRef(String),
    IdTuple(Vec<String>),
}

impl From<i64> for RawValue {
    fn from(v: i64) -> Self {
        RawValue::Int(v)
    }
}

impl From<&str> for RawValue {
    fn from(v: &str) -> Self {
        RawValue::Token(v.to_string())
    }
}
