//! Stall-duration analysis and policy optimization for video streaming from
//! an erasure-coded storage cluster.
//!
//! The library models a cluster of FIFO storage nodes with shifted-exponential
//! chunk service times serving segmented, erasure-coded videos under Poisson
//! request arrivals and probabilistic server selection. It provides:
//!
//! - closed-form upper bounds on the mean stall duration and on the stall
//!   tail probability of every file ([`analysis`]),
//! - alternating optimization of content placement, access probabilities and
//!   bound parameters ([`optimizer`]), with the comparison policies of
//!   [`baselines`],
//! - a discrete-event simulator that replays the exact playback recursion for
//!   ground truth ([`simulator`]), and
//! - catalog/scenario generation ([`workload`]) plus a strict text config
//!   format ([`schema`]).

pub mod analysis;
pub mod baselines;
pub mod error;
pub mod model;
pub mod optimizer;
pub mod schema;
pub mod simulator;
pub mod workload;

pub use error::{Error, Result};
