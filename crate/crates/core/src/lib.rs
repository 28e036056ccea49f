//! Explicit-state model checking of usage-control systems.

pub mod catalog;
pub mod explorer;
pub mod model;
pub mod policy;
pub mod properties;
pub mod transition;
