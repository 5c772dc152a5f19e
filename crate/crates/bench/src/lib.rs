//! Experiment harness for `unlearn-core`: synthetic data, experiment
//! configs, unlearning benchmarks, statistical certificates and risk curves.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod experiment;
pub mod problems;
pub mod risk;
pub mod script;
pub mod stats;
pub mod verify;

pub use config::{ExperimentConfig, Problem};
pub use experiment::{run_unlearn_experiment, summarize, RunRecord, Summary};
pub use verify::{verify_coupling, CouplingReport, VerifyConfig};
