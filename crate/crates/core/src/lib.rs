//! Simulation and analysis of semi-infinite one-dimensional exclusion
//! processes with particle-wise jump rates, through their Jackson-network
//! dual.
//!
//! The gap process (inter-particle separations) is a network of M/M/1
//! queues: queue `k` holds the holes between particles `k` and `k+1`,
//! exogenous customers enter at queue 1 when the leftmost particle steps
//! left, and departures through queue 1 step it right. On top of that
//! correspondence the crate provides:
//!
//! * [`rates`] — rate environments with decidable tail behaviour;
//! * [`traffic`] — the stable traffic equation: `alpha`/`beta` tables, the
//!   minimal speed `v0`, the admissible speed set, occupancy profiles and
//!   their summability, finite-system speeds;
//! * [`walk`] — the dual customer random walk: recurrence classification
//!   and escape probability;
//! * [`engine`] — exact event-driven simulation of the gap process;
//! * [`coupling`] — shared-randomness constructions on a marked-Poisson
//!   arrow field: truncation sandwiches and two-class monotone couplings;
//! * [`oracle`] — brute-force transient/stationary solvers on truncated
//!   chains, used to validate the samplers;
//! * [`stats`] — estimators connecting runs to the limit laws.

pub mod coupling;
pub mod engine;
pub mod error;
pub mod fenwick;
pub mod observe;
pub mod oracle;
pub mod rates;
pub mod rng;
pub mod stats;
pub mod traffic;
pub mod walk;

pub use error::{Error, Result};
pub use rates::{HypothesisReport, RateEnvironment, Tail, Verdict};
pub use rng::{replicate_seed, SimRng};
