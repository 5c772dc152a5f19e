//! Exact machine unlearning for iterative learners expressed as adaptive
//! prefix-sum or linear query release.
//!
//! Learning answers every query through a TV-stable Gaussian mechanism (a
//! binary-tree mechanism for prefix sums, independent per-step noise for
//! linear queries). Unlearning maximally couples the noisy responses under
//! the old and the updated dataset, so that most deletions only touch the
//! `O(log n)` nodes that explicitly used the deleted point and retraining is
//! needed with probability roughly the stability parameter.
//!
//! Modules:
//! - [`coupling`]: Gaussian sampling, density ratios and the
//!   rejection-plus-reflection maximal coupling.
//! - [`tree`]: the binary tree storing exact partial sums, noisy responses,
//!   model snapshots and data indices.
//! - [`engine`]: tree-based learning and single-deletion unlearning.
//! - [`linear`]: linear query release, FedAvg and Lloyd instantiations.
//! - [`sco`]: variance-reduced Frank-Wolfe, dual averaging, JL method,
//!   loss models and convex geometry.
//! - [`stream`]: insert/delete streams over an anytime tree.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupling;
pub mod engine;
mod error;
pub mod linalg;
pub mod linear;
pub mod sco;
pub mod stream;
pub mod tree;

pub use coupling::{CouplingMode, CouplingOutcome, NoiseScale};
pub use engine::{LearnState, PrefixQuery, PrefixSumLearner, UnlearnReport, UpdateRule};
pub use error::{Error, Result};
pub use linalg::VecD;
pub use tree::{NodeId, NoiseSchedule, PrefixTree, TreeNode};
