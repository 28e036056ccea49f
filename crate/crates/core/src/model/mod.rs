//! Domain objects of the usage-control model.

mod config;
mod encode;
mod value;
mod world;

pub use config::{
    key_uniqueness, type_correctness, ChooseMode, ConfigError, Domain, EntitySpec, ModelKind,
    SystemBuilder, SystemConfig, UseAttrDecl, UseCounts, DEFAULT_TICK_BOUND, MAX_CANDIDATES,
};
pub(crate) use encode::encode_into;
pub use encode::{canonical_encode, decode, status_in_key, DecodeError, EncodeError, StateKey};
pub use value::{EntityId, RawValue, TypeMismatch, Value, ValueType};
pub use world::{initial_world, Entity, EntityKind, UnknownStatus, Use, UseKey, UseStatus, World};
