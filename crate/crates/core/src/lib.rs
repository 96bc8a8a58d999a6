//! Session intent modeling for e-commerce clickstreams.
//!
//! Pages are embedded from their co-occurrence in sessions, a Gaussian mixture
//! over page vectors defines intents, and a session's intent distribution is the
//! mixture posterior of its mean page vector. The [`analysis`] module checks the
//! resulting labels for in-session and cross-session consistency.

pub mod analysis;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod intent;
pub mod mixture;
pub mod pipeline;
pub mod rng;

pub use error::{Error, ErrorKind, Result};
