//! Per-agent objective oracles.
//!
//! An oracle exposes, for each agent, the local objective value, its exact
//! gradient, and mini-batch stochastic gradients — all restricted to an
//! arbitrary coordinate range so block engines evaluate only what they use.
//! Full-vector calls are the `0..n` special case of the block calls, which
//! keeps single-block runs bit-identical to full-gradient runs under shared
//! streams.

mod dataset;
mod logistic;
mod quadratic;

pub use dataset::{
    generate_synthetic_dataset, load_dataset, partition_dataset, CsvOptions, Dataset, LabelRule,
    PartitionRule,
};
pub use logistic::{make_logistic_oracle, LogisticOracle, BATCH_CAP};
pub use quadratic::{make_quadratic_oracle, spectrum_linear, QuadraticConfig, QuadraticOracle};

use std::ops::Range;

use nalgebra::DVector;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng::{derive_stream, StreamPurpose};

pub trait ObjectiveOracle: Send + Sync {
    fn num_agents(&self) -> usize;

    fn dim(&self) -> usize;

    /// Local objective value `f_i(x)`.
    fn value(&self, agent: usize, x: &DVector<f64>) -> f64;

    /// Exact gradient of `f_i` restricted to `coords`.
    fn block_gradient(&self, agent: usize, x: &DVector<f64>, coords: Range<usize>) -> DVector<f64>;

    /// Unbiased stochastic gradient of `f_i` restricted to `coords`. The
    /// returned block is distributed as the restriction of a full stochastic
    /// gradient draw.
    fn stochastic_block_gradient(
        &self,
        agent: usize,
        x: &DVector<f64>,
        coords: Range<usize>,
        rng: &mut ChaCha8Rng,
    ) -> DVector<f64>;

    fn gradient(&self, agent: usize, x: &DVector<f64>) -> DVector<f64> {
        self.block_gradient(agent, x, 0..self.dim())
    }

    fn stochastic_gradient(&self, agent: usize, x: &DVector<f64>, rng: &mut ChaCha8Rng) -> DVector<f64> {
        self.stochastic_block_gradient(agent, x, 0..self.dim(), rng)
    }

    /// Strong-convexity modulus of each `f_i`.
    fn strong_convexity(&self) -> f64;

    /// Smoothness constant of each `f_i`.
    fn smoothness(&self) -> f64;

    /// Smoothness of the sum objective; `m * L` unless a tighter value is
    /// known.
    fn total_smoothness(&self) -> f64 {
        self.num_agents() as f64 * self.smoothness()
    }

    /// Gradient-noise standard-deviation bound, when known by construction.
    fn noise_bound(&self) -> Option<f64>;

    /// Closed-form optimum, when the oracle family admits one.
    fn optimum_hint(&self) -> Option<DVector<f64>>;
}

/// Sum objective `F(x) = sum_i f_i(x)`.
pub fn total_value(oracle: &dyn ObjectiveOracle, x: &DVector<f64>) -> f64 {
    (0..oracle.num_agents()).map(|i| oracle.value(i, x)).sum()
}

/// Gradient of the sum objective.
pub fn total_gradient(oracle: &dyn ObjectiveOracle, x: &DVector<f64>) -> DVector<f64> {
    let mut g = DVector::zeros(oracle.dim());
    for i in 0..oracle.num_agents() {
        g += oracle.gradient(i, x);
    }
    g
}

/// Result of [`solve_optimum`]: the point and the achieved gradient residual.
#[derive(Debug, Clone)]
pub struct Optimum {
    pub point: DVector<f64>,
    pub residual: f64,
}

const QUADRATIC_TOL: f64 = 1e-10;
const SOLVER_TOL: f64 = 1e-8;
const SOLVER_CAP: usize = 2_000_000;

/// Minimize the sum objective. Closed-form oracles verify their own optimum
/// by residual; everything else runs accelerated gradient descent until
/// `|grad F| <= 1e-8 * max(1, |x|)`.
pub fn solve_optimum(oracle: &dyn ObjectiveOracle) -> Result<Optimum> {
    solve_optimum_from(oracle, None)
}

/// As [`solve_optimum`], from an explicit start point.
pub fn solve_optimum_from(oracle: &dyn ObjectiveOracle, start: Option<DVector<f64>>) -> Result<Optimum> {
    if let Some(point) = oracle.optimum_hint() {
        let residual = total_gradient(oracle, &point).norm();
        let tol = QUADRATIC_TOL * point.norm().max(1.0);
        if residual > tol {
            return Err(Error::SolverStalled {
                iters: 0,
                residual,
            });
        }
        return Ok(Optimum { point, residual });
    }

    let lip = oracle.total_smoothness();
    let mu = oracle.num_agents() as f64 * oracle.strong_convexity();
    if mu <= 0.0 || lip <= 0.0 {
        return Err(Error::InvalidArgument(
            "solver requires positive strong convexity and smoothness".into(),
        ));
    }
    let momentum = {
        let kappa = (lip / mu).sqrt();
        (kappa - 1.0) / (kappa + 1.0)
    };
    let mut x = start.unwrap_or_else(|| DVector::zeros(oracle.dim()));
    let mut z = x.clone();
    for iter in 0..SOLVER_CAP {
        let g = total_gradient(oracle, &z);
        let residual = g.norm();
        if residual <= SOLVER_TOL * z.norm().max(1.0) {
            return Ok(Optimum { point: z, residual });
        }
        let x_next = &z - g / lip;
        z = &x_next + (&x_next - &x) * momentum;
        x = x_next;
        if iter == SOLVER_CAP - 1 {
            return Err(Error::SolverStalled {
                iters: SOLVER_CAP,
                residual,
            });
        }
    }
    unreachable!()
}

/// Empirical gradient-noise bound: the largest per-agent variance of the
/// stochastic gradient over the probe points. Returns the variance (the
/// square of the noise level). Reporting and diagnostics only.
pub fn estimate_noise_bound(
    oracle: &dyn ObjectiveOracle,
    probes: &[DVector<f64>],
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::InvalidArgument(
            "noise estimation needs at least one probe point".into(),
        ));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be positive".into()));
    }
    let mut worst: f64 = 0.0;
    for (p, x) in probes.iter().enumerate() {
        for agent in 0..oracle.num_agents() {
            let exact = oracle.gradient(agent, x);
            let mut rng = derive_stream(seed, p as u64, agent as u64, StreamPurpose::Probe);
            let mut acc = 0.0;
            for _ in 0..samples {
                let draw = oracle.stochastic_gradient(agent, x, &mut rng);
                acc += (draw - &exact).norm_squared();
            }
            worst = worst.max(acc / samples as f64);
        }
    }
    Ok(worst)
}
