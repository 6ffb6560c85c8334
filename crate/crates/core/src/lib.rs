//! Optimal inference of binary labels from noisy crowdsourced answers.
//!
//! Workers answer binary tasks correctly with a private reliability drawn
//! i.i.d. from a prior. This crate provides the assignment-graph model and a
//! seeded instance simulator, reliability priors with their local worker
//! factor, sum-product belief propagation on the task/worker factor graph,
//! the usual baselines (majority vote, KOS, one-coin EM, EBP), and exact or
//! oracle estimators that serve as lower bounds and test references.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the experiment
//! runner and the command-line interface live in `crowdbp-harness`.
#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bp;
pub mod error;
pub mod estimators;
pub mod graph;
mod math;
pub mod oracle;
pub mod prior;
pub mod rng;

pub use bp::{BeliefState, BpOptions, EstimateReport, Kernel, Pair};
pub use error::{Error, Result};
pub use estimators::{EstimatorKind, EstimatorSpec, KosInit, SideInfo};
pub use graph::{AnswerMatrix, AssignmentGraph, GroundTruth, Label};
pub use prior::{FactorTable, ReliabilityPrior, WorkerFactor};
