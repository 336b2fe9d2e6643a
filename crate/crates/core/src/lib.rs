//! Energy-aware user association and downlink power allocation for
//! UAV-assisted cellular networks.
//!
//! Every UAV base station carries a surplus-power ledger (launch energy plus
//! harvested premium minus transmit claims). Its finite-time probability of
//! ruin steers user association away from UAVs that are close to running dry,
//! while URLLC users get closed-form chance-constrained power and eMBB users
//! are served by capped water-filling.
//!
//! The crate is organised bottom-up:
//!
//! * [`scenario`] builds and validates topologies and parameters,
//! * [`channel`] evaluates pathloss, SINR, bandwidth shares and rates,
//! * [`ruin`] holds the surplus process, analytic ruin probability and its
//!   Monte-Carlo oracle,
//! * [`association`] implements the ruin-weighted and SINR-only association
//!   heuristics,
//! * [`allocation`] provides URLLC power, capped water-filling and a KKT
//!   certificate checker,
//! * [`engine`] runs the iterative per-TTI optimisation and whole flights,
//! * [`oracle`] solves small instances exactly by enumeration,
//! * [`experiments`] bundles the batch recipes used by the command line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN.

pub mod allocation;
pub mod association;
pub mod channel;
pub mod engine;
mod error;
pub mod experiments;
mod matrix;
pub mod oracle;
pub mod ruin;
pub mod scenario;

pub use error::{Error, Result};
pub use matrix::Matrix;
