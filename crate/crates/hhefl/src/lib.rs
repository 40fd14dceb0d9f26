//! Federated averaging with hybrid homomorphic encryption: the protocol
//! roles, a small learner, message formats and transports, the experiment
//! runner and the benchmarks behind the `hhefl` command.

pub mod bench;
pub mod config;
pub mod error;
pub mod learner;
pub mod metrics;
pub mod protocol;
pub mod runner;
pub mod transport;
pub mod wire;

pub use error::{Error, Result};
