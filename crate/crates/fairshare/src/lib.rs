//! Multi-path alpha-fair bandwidth allocation over partitioned network
//! domains, solved by a distributed consensus ADMM with anytime-feasible
//! iterates.
//!
//! The crate is organized around the lifecycle of an experiment:
//!
//! * [`model`] — instances (links, paths, requests), validation, incidence,
//!   JSON (de)serialization.
//! * [`topology`] — synthetic topology and request generators
//!   (Barabasi-Albert, fat-tree, k-shortest paths).
//! * [`partition`] — splitting links into connected, balanced domains.
//! * [`kernel`] — the numerical primitives: alpha-fair utilities, the
//!   per-request proximal update, its l1 switching-cost variant, and
//!   Euclidean projection onto a capped simplex.
//! * [`solver`] — the distributed ADMM engine itself: per-domain state,
//!   consensus exchange, dual updates, residuals, penalty initialization.
//! * [`lp`] — a small dense simplex LP used by the penalty bound and the
//!   fairness certificate.
//! * [`oracle`] — independent certification of candidate allocations and
//!   reference optima for small instances.
//! * [`harness`] — experiment orchestration (domain sweeps, switching-cost
//!   sweeps) with CSV output.

pub mod error;
pub mod harness;
pub mod kernel;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod partition;
pub mod solver;
pub mod topology;

pub use error::Error;
