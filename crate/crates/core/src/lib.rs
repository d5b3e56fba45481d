//! Slotted single-server scheduling over parallel queues with time-varying
//! link rates and stochastic switchover delays.
//!
//! The crate bundles a two-hop FSO channel model, UAV formation geometry,
//! switchover delay models, the Max-Weight and ACI family of schedulers, a
//! deterministic slot-level engine, and the experiment plumbing used by the
//! `aci` binary.

pub mod channel;
pub mod config;
pub mod engine;
pub mod experiments;
pub mod geometry;
pub mod io;
pub mod policy;
pub mod queueing;
pub mod rng;
pub mod switchover;
