//! Factoid question answering under simulated speech-recognition noise.

pub mod channel;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod dan;
pub mod error;
pub mod eval;
pub mod index;
pub mod metrics;
pub mod util;

pub use error::{Error, Result};
