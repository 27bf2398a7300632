//! Config-driven pipeline around the noise-learning and PEC library:
//! learning runs, mitigated estimation, the Ising time-evolution experiment
//! and analytic sampling-overhead tables, all emitting deterministic,
//! provenance-stamped CSV/JSON files.

pub mod commands;
pub mod config;
pub mod output;
pub mod trotter;
