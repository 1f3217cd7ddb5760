//! Provable repair of dense feedforward networks.
//!
//! A network is split into a feature extractor `f_e` and a frozen head
//! `f_c`. Point properties are repaired by steering `f_e(x)` into small
//! feature-space boxes that bound propagation certifies against the head.
//! Region properties are repaired by generating counterexamples from linear
//! lower bounds, repairing them point-wise, and bisecting the input box
//! until every piece verifies.

pub mod autodiff;
pub mod bounds;
mod error;
pub mod exec;
pub mod fixtures;
pub mod linalg;
pub mod network;
pub mod preimage;
pub mod repair;
pub mod specio;

pub use error::{Error, Result};
pub use exec::Exec;
pub use linalg::{Hyperbox, Matrix, Vector};
pub use network::{ActivationKind, Layer, Network};
pub use repair::{LinearConstraint, Property, RepairConfig, RepairOutcome, RepairStatus};
