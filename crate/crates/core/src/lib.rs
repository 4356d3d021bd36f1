//! Physics-informed networks with geometric input mappings.
//!
//! Fields are evaluated on truncated derivative channels: every spatial
//! derivative needed by a residual is propagated forward through the mapping
//! and the network in one pass, and parameter gradients flow back through the
//! same channels.

pub mod checks;
pub mod domain;
pub mod error;
pub mod evaluation;
pub mod jet;
pub mod mapping;
pub mod method;
pub mod model;
pub mod network;
pub mod optim;
pub mod pde;
pub mod plan;
pub mod scalar;
pub mod taylor;
pub mod training;

pub use error::{Error, Result};
