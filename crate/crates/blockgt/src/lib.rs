//! Randomized block-coordinate stochastic gradient tracking over simulated
//! agent networks.
//!
//! A swarm of `m` agents, each holding a private smooth strongly convex
//! objective, cooperates over an undirected graph to minimize the sum. Each
//! agent evaluates one randomly chosen coordinate block of a stochastic
//! gradient per step and maintains a tracker `y` whose network average stays
//! locked to the average block-scaled gradient. The crate bundles:
//!
//! - [`network`]: topologies, doubly stochastic mixing matrices, measured
//!   contraction factors;
//! - [`blocks`]: coordinate partitions, uniform selection, block-error
//!   moment enumeration;
//! - [`objectives`]: quadratic and regularized-logistic oracles with exact
//!   and mini-batch block gradients;
//! - [`algorithms`]: the block-tracking engine, a full-gradient tracking
//!   baseline, a deterministic cyclic-block baseline, and stepsize-schedule
//!   validity reports;
//! - [`metrics`]: error series, identity/inequality monitors, log-log rate
//!   fits, confidence intervals;
//! - [`harness`]: seeded multi-path experiment runs, baseline comparisons,
//!   CSV/summary outputs;
//! - [`cli`]: the `blockgt` command-line front end.
//!
//! Runs are reproducible bit-for-bit from `(config, master_seed)`; every
//! random draw comes from a dedicated per-`(path, agent, purpose)` stream.

pub mod algorithms;
pub mod blocks;
pub mod cli;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod network;
pub mod objectives;
pub mod rng;

pub use error::{Error, Result};
