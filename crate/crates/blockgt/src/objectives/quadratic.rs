//! Analytic quadratic oracle family.
//!
//! Agent `i` holds `f_i(x) = (x - c_i)^T A_i (x - c_i) / 2` with `A_i`
//! symmetric positive definite sharing a prescribed spectrum, so the
//! strong-convexity and smoothness constants are exact by construction and
//! the optimum has a closed form. Stochastic gradients add isotropic
//! Gaussian noise with total variance `noise^2`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{derive_stream, StreamPurpose};

use super::ObjectiveOracle;

#[derive(Debug, Clone)]
pub struct QuadraticConfig {
    pub agents: usize,
    pub dim: usize,
    /// Eigenvalues of every `A_i`; min and max become the oracle's strong
    /// convexity and smoothness constants.
    pub spectrum: Vec<f64>,
    /// Gradient-noise standard deviation (total across coordinates).
    pub noise: f64,
    /// Scale of the Gaussian centers `c_i`.
    pub center_scale: f64,
    pub seed: u64,
}

/// Evenly spaced eigenvalues on `[mu, lip]`, both endpoints attained.
pub fn spectrum_linear(mu: f64, lip: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lip];
    }
    (0..n)
        .map(|j| mu + (lip - mu) * j as f64 / (n - 1) as f64)
        .collect()
}

#[derive(Debug, Clone)]
pub struct QuadraticOracle {
    matrices: Vec<DMatrix<f64>>,
    centers: Vec<DVector<f64>>,
    x_star: DVector<f64>,
    mu: f64,
    lip: f64,
    noise: f64,
    noise_per_coord: f64,
    dim: usize,
}

pub fn make_quadratic_oracle(cfg: &QuadraticConfig) -> Result<QuadraticOracle> {
    if cfg.agents == 0 || cfg.dim == 0 {
        return Err(Error::InvalidArgument(
            "quadratic oracle needs agents >= 1 and dim >= 1".into(),
        ));
    }
    if cfg.spectrum.len() != cfg.dim {
        return Err(Error::InvalidArgument(format!(
            "spectrum has {} entries, dim is {}",
            cfg.spectrum.len(),
            cfg.dim
        )));
    }
    let mu = cfg.spectrum.iter().cloned().fold(f64::INFINITY, f64::min);
    let lip = cfg.spectrum.iter().cloned().fold(0.0_f64, f64::max);
    if mu <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "spectrum must be strictly positive, min is {mu}"
        )));
    }
    if cfg.noise < 0.0 {
        return Err(Error::InvalidArgument("noise must be nonnegative".into()));
    }

    let n = cfg.dim;
    let diag = DMatrix::from_diagonal(&DVector::from_vec(cfg.spectrum.clone()));
    let mut matrices = Vec::with_capacity(cfg.agents);
    let mut centers = Vec::with_capacity(cfg.agents);
    for agent in 0..cfg.agents {
        let mut rng = derive_stream(cfg.seed, 0, agent as u64, StreamPurpose::Build);
        let gauss = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
        let q = gauss.qr().q();
        let a = &q * &diag * q.transpose();
        // Symmetrize away the last bits of rounding from the triple product.
        let a = (&a + a.transpose()) * 0.5;
        matrices.push(a);
        centers.push(DVector::from_fn(n, |_, _| {
            cfg.center_scale * rng.sample::<f64, _>(StandardNormal)
        }));
    }

    let mut a_sum = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for (a, c) in matrices.iter().zip(&centers) {
        a_sum += a;
        rhs += a * c;
    }
    let x_star = a_sum
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("sum of quadratic forms is singular".into()))?
        .solve(&rhs);

    Ok(QuadraticOracle {
        matrices,
        centers,
        x_star,
        mu,
        lip,
        noise: cfg.noise,
        noise_per_coord: cfg.noise / (n as f64).sqrt(),
        dim: n,
    })
}

impl QuadraticOracle {
    pub fn center(&self, agent: usize) -> &DVector<f64> {
        &self.centers[agent]
    }

    pub fn matrix(&self, agent: usize) -> &DMatrix<f64> {
        &self.matrices[agent]
    }
}

impl ObjectiveOracle for QuadraticOracle {
    fn num_agents(&self) -> usize {
        self.matrices.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, agent: usize, x: &DVector<f64>) -> f64 {
        let d = x - &self.centers[agent];
        0.5 * (&self.matrices[agent] * &d).dot(&d)
    }

    fn block_gradient(&self, agent: usize, x: &DVector<f64>, coords: Range<usize>) -> DVector<f64> {
        let d = x - &self.centers[agent];
        self.matrices[agent].rows(coords.start, coords.len()) * d
    }

    fn stochastic_block_gradient(
        &self,
        agent: usize,
        x: &DVector<f64>,
        coords: Range<usize>,
        rng: &mut ChaCha8Rng,
    ) -> DVector<f64> {
        let mut g = self.block_gradient(agent, x, coords);
        if self.noise > 0.0 {
            for v in g.iter_mut() {
                *v += self.noise_per_coord * rng.sample::<f64, _>(StandardNormal);
            }
        }
        g
    }

    fn strong_convexity(&self) -> f64 {
        self.mu
    }

    fn smoothness(&self) -> f64 {
        self.lip
    }

    fn noise_bound(&self) -> Option<f64> {
        Some(self.noise)
    }

    fn optimum_hint(&self) -> Option<DVector<f64>> {
        Some(self.x_star.clone())
    }
}
