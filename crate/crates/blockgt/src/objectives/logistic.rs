//! Regularized logistic-regression oracle over sharded data.
//!
//! Agent `i` holds
//! `f_i(x) = (1/s) sum_{j in S_i} ln(1 + exp(-v_j u_j^T x)) + (reg/2m) |x|^2`
//! where `s` is the total training-set size. Exact gradients take a full
//! pass over the shard; stochastic gradients sample a mini-batch uniformly
//! with replacement and rescale so the data term stays unbiased.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{Dataset, ObjectiveOracle};

/// Upper bound on the mini-batch size.
pub const BATCH_CAP: usize = 1_000_000;

/// `ln(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `1 / (1 + exp(-z))`; IEEE saturation handles the tails.
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone)]
pub struct LogisticOracle {
    /// Features stored transposed (`n x s`), one contiguous column per
    /// sample.
    features_t: DMatrix<f64>,
    labels: DVector<f64>,
    shards: Vec<Vec<usize>>,
    strain: usize,
    reg: f64,
    batch: usize,
    dim: usize,
    mu: f64,
    lip: f64,
}

/// Build the oracle from a sharded dataset with regularization `reg` and
/// mini-batch size `batch`. The smoothness constant comes from the largest
/// Gram eigenvalue of the full feature matrix, measured by power iteration.
pub fn make_logistic_oracle(data: &Dataset, reg: f64, batch: usize) -> Result<LogisticOracle> {
    if reg <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "regularization must be positive, got {reg}"
        )));
    }
    if batch == 0 {
        return Err(Error::InvalidArgument("batch size must be >= 1".into()));
    }
    if batch > BATCH_CAP {
        return Err(Error::InvalidArgument(format!(
            "batch size {batch} exceeds cap {BATCH_CAP}"
        )));
    }
    let assignment = data.assignment().ok_or_else(|| {
        Error::Data("dataset must be partitioned across agents before building the oracle".into())
    })?;
    let num_agents = assignment.iter().copied().max().unwrap_or(0) + 1;
    let shards = data.shards(num_agents)?;
    if let Some(agent) = shards.iter().position(Vec::is_empty) {
        return Err(Error::Data(format!("agent {agent} has an empty shard")));
    }

    let features_t = data.features().transpose();
    let strain = data.num_samples();
    let dim = data.dim();
    let gram_top = gram_top_eigenvalue(&features_t)?;
    let lip = gram_top / (4.0 * strain as f64) + reg / num_agents as f64;
    let mu = reg / num_agents as f64;

    Ok(LogisticOracle {
        features_t,
        labels: data.labels().clone(),
        shards,
        strain,
        reg,
        batch,
        dim,
        mu,
        lip,
    })
}

/// Largest eigenvalue of `U^T U`, via power iteration on `v -> U^T (U v)`
/// without forming the Gram matrix.
fn gram_top_eigenvalue(features_t: &DMatrix<f64>) -> Result<f64> {
    let n = features_t.nrows();
    let mut v = DVector::from_element(n, (n as f64).sqrt().recip());
    let mut estimate = 0.0_f64;
    for step in 0..10_000 {
        let uv = features_t.tr_mul(&v); // U v
        let mut z = features_t * uv; // U^T U v
        let norm = z.norm();
        if norm < 1e-300 {
            return Ok(0.0);
        }
        z /= norm;
        let delta = (norm - estimate).abs();
        estimate = norm;
        v = z;
        if step >= 8 && delta <= 1e-10 * estimate.max(1e-15) {
            return Ok(estimate);
        }
    }
    Err(Error::PowerIterationStalled {
        steps: 10_000,
        estimate,
    })
}

impl LogisticOracle {
    pub fn shard_len(&self, agent: usize) -> usize {
        self.shards[agent].len()
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn regularization(&self) -> f64 {
        self.reg
    }

    fn data_term(
        &self,
        out: &mut DVector<f64>,
        x: &DVector<f64>,
        sample: usize,
        weight: f64,
        coords: &Range<usize>,
    ) {
        let u = self.features_t.column(sample);
        let v = self.labels[sample];
        let margin = u.dot(x);
        let coef = weight * (-v) * sigmoid(-v * margin);
        for (off, idx) in coords.clone().enumerate() {
            out[off] += coef * u[idx];
        }
    }
}

impl ObjectiveOracle for LogisticOracle {
    fn num_agents(&self) -> usize {
        self.shards.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, agent: usize, x: &DVector<f64>) -> f64 {
        let mut loss = 0.0;
        for &j in &self.shards[agent] {
            let margin = self.features_t.column(j).dot(x);
            loss += softplus(-self.labels[j] * margin);
        }
        loss / self.strain as f64 + 0.5 * self.reg / self.num_agents() as f64 * x.norm_squared()
    }

    fn block_gradient(&self, agent: usize, x: &DVector<f64>, coords: Range<usize>) -> DVector<f64> {
        let mut g = DVector::zeros(coords.len());
        let weight = 1.0 / self.strain as f64;
        for &j in &self.shards[agent] {
            self.data_term(&mut g, x, j, weight, &coords);
        }
        let reg = self.reg / self.num_agents() as f64;
        for (off, idx) in coords.enumerate() {
            g[off] += reg * x[idx];
        }
        g
    }

    fn stochastic_block_gradient(
        &self,
        agent: usize,
        x: &DVector<f64>,
        coords: Range<usize>,
        rng: &mut ChaCha8Rng,
    ) -> DVector<f64> {
        let shard = &self.shards[agent];
        let mut g = DVector::zeros(coords.len());
        // |S_i| / (s * batch) makes the batch sum unbiased for the data term
        // of the exact gradient.
        let weight = shard.len() as f64 / (self.strain as f64 * self.batch as f64);
        for _ in 0..self.batch {
            let j = shard[rng.gen_range(0..shard.len())];
            self.data_term(&mut g, x, j, weight, &coords);
        }
        let reg = self.reg / self.num_agents() as f64;
        for (off, idx) in coords.enumerate() {
            g[off] += reg * x[idx];
        }
        g
    }

    fn strong_convexity(&self) -> f64 {
        self.mu
    }

    fn smoothness(&self) -> f64 {
        self.lip
    }

    fn total_smoothness(&self) -> f64 {
        // Shards tile the data, so the sum objective's data Hessian is the
        // full-Gram bound once, plus the full regularizer.
        (self.lip - self.mu) + self.reg
    }

    fn noise_bound(&self) -> Option<f64> {
        None
    }

    fn optimum_hint(&self) -> Option<DVector<f64>> {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{
        generate_synthetic_dataset, partition_dataset, solve_optimum_from, total_gradient,
        total_value, PartitionRule,
    };
    use crate::rng::{derive_stream, StreamPurpose};

    fn desk_oracle(batch: usize) -> LogisticOracle {
        let data = generate_synthetic_dataset(120, 12, 5.0, 0.5, 0.05, 7).unwrap();
        let data = partition_dataset(data, 4, PartitionRule::Contiguous).unwrap();
        make_logistic_oracle(&data, 0.1, batch).unwrap()
    }

    #[test]
    fn value_at_zero_is_shard_share_of_ln2() {
        let oracle = desk_oracle(10);
        let x = DVector::zeros(12);
        for agent in 0..4 {
            let expect = oracle.shard_len(agent) as f64 * std::f64::consts::LN_2 / 120.0;
            assert!((oracle.value(agent, &x) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn unpartitioned_data_is_rejected() {
        let data = generate_synthetic_dataset(20, 4, 5.0, 0.5, 0.0, 1).unwrap();
        assert!(matches!(
            make_logistic_oracle(&data, 0.1, 5),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn batch_cap_enforced() {
        let data = generate_synthetic_dataset(20, 4, 5.0, 0.5, 0.0, 1).unwrap();
        let data = partition_dataset(data, 2, PartitionRule::Contiguous).unwrap();
        assert!(make_logistic_oracle(&data, 0.1, BATCH_CAP + 1).is_err());
        assert!(make_logistic_oracle(&data, 0.1, 0).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let oracle = desk_oracle(10);
        let mut rng = derive_stream(3, 0, 0, StreamPurpose::Probe);
        for _ in 0..20 {
            let x = DVector::from_fn(12, |_, _| rng.gen_range(-0.3..0.3));
            let agent = rng.gen_range(0..4);
            let g = oracle.gradient(agent, &x);
            let h = 1e-6;
            for k in [0usize, 5, 11] {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let fd = (oracle.value(agent, &xp) - oracle.value(agent, &xm)) / (2.0 * h);
                assert!(
                    (fd - g[k]).abs() <= 1e-4 * g[k].abs().max(1.0),
                    "fd {fd} vs grad {}",
                    g[k]
                );
            }
        }
    }

    #[test]
    fn batch_gradient_is_unbiased_and_variance_shrinks() {
        let small = desk_oracle(1);
        let large = desk_oracle(100);
        let x = DVector::zeros(12);
        let exact = small.gradient(0, &x);
        let measure = |oracle: &LogisticOracle, tag: u64| {
            let mut rng = derive_stream(11, tag, 0, StreamPurpose::Probe);
            let reps = 10_000;
            let mut mean = DVector::zeros(12);
            let mut second = 0.0;
            for _ in 0..reps {
                let draw = oracle.stochastic_gradient(0, &x, &mut rng);
                second += (&draw - &exact).norm_squared();
                mean += draw;
            }
            ((mean / reps as f64 - &exact).norm(), second / reps as f64)
        };
        let (bias1, var1) = measure(&small, 0);
        let (bias100, var100) = measure(&large, 1);
        assert!(bias1 < 5.0 * (var1 / 10_000.0).sqrt() + 1e-12, "bias {bias1}");
        assert!(bias100 < 5.0 * (var100 / 10_000.0).sqrt() + 1e-12);
        assert!(
            var100 < var1 / 10.0,
            "batch-100 variance {var100} should sit far below batch-1 variance {var1}"
        );
        assert!(var100 > 0.0, "with-replacement sampling keeps some noise");
    }

    #[test]
    fn full_shard_batch_keeps_nonzero_noise() {
        // Sampling with replacement at batch = |S_i| still differs from the
        // exact shard pass.
        let oracle = desk_oracle(30);
        let x = DVector::from_element(12, 0.05);
        let exact = oracle.gradient(0, &x);
        let mut rng = derive_stream(5, 0, 0, StreamPurpose::Probe);
        let mut acc = 0.0;
        for _ in 0..2000 {
            acc += (oracle.stochastic_gradient(0, &x, &mut rng) - &exact).norm_squared();
        }
        assert!(acc / 2000.0 > 0.0);
    }

    #[test]
    fn optimum_solves_to_tolerance_and_is_unique() {
        let oracle = desk_oracle(10);
        let opt = solve_optimum_from(&oracle, None).unwrap();
        assert!(opt.residual <= 1e-8 * opt.point.norm().max(1.0));
        let start = DVector::from_element(12, 0.5);
        let again = solve_optimum_from(&oracle, Some(start)).unwrap();
        assert!(
            (&again.point - &opt.point).norm() < 1e-7,
            "restart moved the optimum by {}",
            (&again.point - &opt.point).norm()
        );
        // The optimum value sits below the origin value.
        let zero = DVector::zeros(12);
        assert!(total_value(&oracle, &opt.point) < total_value(&oracle, &zero));
        assert!(total_gradient(&oracle, &opt.point).norm() <= 1e-7);
    }

    #[test]
    fn smoothness_bounds_gradient_differences() {
        let oracle = desk_oracle(10);
        let lip = oracle.smoothness();
        let mut rng = derive_stream(19, 0, 0, StreamPurpose::Probe);
        for _ in 0..50 {
            let u = DVector::from_fn(12, |_, _| rng.gen_range(-1.0..1.0));
            let v = DVector::from_fn(12, |_, _| rng.gen_range(-1.0..1.0));
            for agent in 0..4 {
                let du = oracle.gradient(agent, &u);
                let dv = oracle.gradient(agent, &v);
                assert!((du - dv).norm() <= lip * (&u - &v).norm() + 1e-9);
            }
        }
    }
}
