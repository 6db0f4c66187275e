//! Block-wise perturbed push-sum consensus and block-wise gradient-tracking
//! optimization (B-SONATA) over directed graphs.
//!
//! The crate is organized bottom-up:
//!
//! - [`graphs`]: digraph generation, connectivity checks and column-stochastic weights.
//! - [`schedule`]: essentially cyclic block-selection rules.
//! - [`pushsum`]: the block-wise push-sum protocol and its perturbed/tracking variants.
//! - [`problems`]: the DC-regularized sparse regression instance and its prox primitives.
//! - [`sonata`]: the optimizer rounds (ATC, CTA, block-wise gradient) and diagnostics.
//! - [`harness`]: configuration, experiment loop, baseline comparator and CSV output.

// Range checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod graphs;
pub mod harness;
pub mod partition;
pub mod problems;
pub mod pushsum;
pub mod schedule;
pub mod sonata;

pub use error::{Error, Result};
pub use graphs::{Digraph, WeightMatrix};
pub use partition::BlockPartition;
pub use problems::ProblemInstance;
pub use schedule::{BlockSchedule, ScheduleRule};
