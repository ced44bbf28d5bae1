//! Execution-time-server scheduling for periodic I/O workloads.
//!
//! The crate covers the full path from a task-set description to hardware
//! configuration and behavioral validation:
//!
//! - [`domain`] — task model, timing-accuracy value curves, hyperperiod
//!   expansion into job instances;
//! - [`sched`] — conflict-graph decomposition and offline job placement into
//!   exact and quality servers, plus offset optimization;
//! - [`server_config`] — capacity, slack, and robustness analysis producing
//!   the final server windows and priorities;
//! - [`isa`] — the 32-bit configuration instruction set: codec, assembly
//!   text format, byte streams, and program assembly;
//! - [`sim`] — a tick-level behavioral model of the two-level hardware
//!   scheduler with timing-defect injection;
//! - [`bench`] — workload generation, baseline schedulers, an exhaustive
//!   small-instance oracle, and deterministic experiment sweeps.

pub mod bench;
pub mod cli;
pub mod domain;
pub mod isa;
pub mod sched;
pub mod server_config;
pub mod sim;
