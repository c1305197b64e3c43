//! Synchronous multi-channel wireless network simulator under the SINR
//! (signal-to-interference-and-noise-ratio) physical interference model.
//!
//! The crate has three layers:
//!
//! * the physical layer: node placement ([`topology`]) and per-slot
//!   reception resolution ([`sinr`]),
//! * the protocol layer: a lockstep round/slot scheduler ([`sim`]) driving
//!   distributed protocol state machines that build an aggregation structure
//!   ([`structure`]) and run data aggregation ([`aggregation`]) and node
//!   coloring ([`coloring`]) on top of it,
//! * the experiment layer ([`harness`]): configuration, seed sweeps,
//!   brute-force verification oracles and CSV/JSONL outputs.
//!
//! Everything is deterministic for a fixed configuration and seed.

pub mod aggregation;
pub mod coloring;
pub mod constants;
pub mod error;
pub mod harness;
pub mod sim;
pub mod sinr;
pub mod structure;
pub mod topology;

pub use error::{Error, Result};

/// Crate version reported in output file provenance headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
