//! Simulation and exact analysis of a mobile wireless network whose nodes
//! walk on randomly oriented great circles and forward traffic through a
//! single random relay.
//!
//! * [`geometry`]: random configurations, meeting points and typicality.
//! * [`mobility`]: natural random walks and neighbor queries.
//! * [`protocol`]: the two-sub-slot relay policy, interference and relay queues.
//! * [`queueing`]: torus hitting-time oracles, Kingman and sampled-chain bounds.
//! * [`sim`]: trials, sweeps and scaling estimates.
//! * [`config`]: run configuration parsing and validation.
//! * [`report`]: CSV and JSON emission.

pub mod config;
pub mod error;
pub mod geometry;
pub mod mobility;
pub mod protocol;
pub mod queueing;
pub mod report;
pub mod rng;
pub mod sim;
pub mod stats;

pub use error::{ConfigError, OracleError, QueueError, ScalingError};
