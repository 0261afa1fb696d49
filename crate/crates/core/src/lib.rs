//! Long-run average cost machinery for countable-state Markov decision
//! processes.
//!
//! The crate evaluates stationary policies on two model families:
//!
//! - [`queue::GroupServerModel`], a single-buffer queue with groups of
//!   on/off servers whose steady state has product form, and
//! - [`generic::GenericCtmdpModel`], an arbitrary CTMDP with bounded rates
//!   and a bounded backward band, solved through truncated balance systems.
//!
//! Policies are finite action prefixes followed by a tail rule
//! ([`policy::Policy`]). Distances between policies use the weighted
//! disagreement metric of [`policy::MetricParams`], and [`continuity`]
//! turns the normalizer perturbation argument into certified bounds on
//! `|eta(u) - eta(u')|` for nearby policies.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod banded;
pub mod certified;
pub mod config;
pub mod continuity;
pub mod error;
pub mod generic;
pub mod line_chain;
pub mod optimizer;
pub mod policy;
pub mod queue;
pub mod simulate;

pub use certified::Certified;
pub use error::{Error, Result};
pub use policy::{Action, ActionSpace, MetricParams, Policy, TailRule};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
