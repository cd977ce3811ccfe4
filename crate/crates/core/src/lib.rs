//! Deterministic time-slotted simulator of a software-defined QoS
//! provisioning framework for shared HPC storage.
//!
//! Applications issue (possibly unbalanced) I/O against a pool of storage
//! servers. A logically centralized control plane turns each application's
//! bandwidth specification into a token rate, shapes tokens evenly across
//! servers into virtual token buckets, enforces operator policies, and runs a
//! token-borrowing algorithm that moves unused tokens toward servers where an
//! application is backlogged. Each server's local data plane classifies I/O
//! into per-application queues and serves them by an extended M-LWDF
//! priority. Three scenarios are supported:
//!
//! * [`Scenario::Borrowing`] — token buckets plus the borrowing algorithm,
//!   scheduling by `gamma * L * C + T`;
//! * [`Scenario::NoBorrowing`] — token buckets only (`T = 0`);
//! * [`Scenario::Traditional`] — per-server FIFO in arrival order, bounded
//!   only by physical bandwidth, ignoring tokens entirely.
//!
//! Everything is deterministic: a configuration plus a seed reproduces
//! bit-identical reports, in serial or parallel execution.
//!
//! The crate is `no_std`-compatible (requires `alloc`); the `std` feature
//! (on by default) additionally enables the multi-threaded slot runner in
//! [`parallel`].

#![cfg_attr(not(feature = "std"), no_std)]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod control_plane;
pub mod data_plane;
pub mod domain;
pub mod engine;
#[cfg(feature = "std")]
pub mod parallel;
pub mod workload;

mod rng;

pub use domain::{
    validate_config, ApplicationSpec, ConfigError, IoKind, IoRequest, Policy, Scenario,
    SimConfig, ThresholdMode, TokenLedger,
};
pub use engine::{run_simulation, run_sweep, Engine, SimError, SimReport, SlotTrace};
pub use workload::{SizeModel, WorkloadSpec};
