//! Workload-aware AP-STA association.
//!
//! A bank of per-transition linear models predicts next-slot system throughput
//! for every candidate allocation; the controller enforces the best-scoring
//! one. The crate also carries the capacity simulator used as ground truth,
//! workload trace tooling, and a replay harness comparing the learned policy
//! with fixed, round-robin, best-static and per-slot optimal baselines.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alloc_space;
pub mod calibration;
pub mod cli;
pub mod harness;
pub mod learner;
pub mod manifest;
pub mod netsim;
pub mod scenario;
pub mod synth;
pub mod trace;
