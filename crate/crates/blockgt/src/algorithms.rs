//! Swarm optimization engines and stepsize-schedule validity checks.
//!
//! Three engines share one update skeleton `x_{k+1} = W (x_k - gamma_k y_k)`:
//!
//! - [`drbsgt_step`]: the randomized block tracking engine. `y` mixes through
//!   `W`, then each agent swaps its freshly sampled block gradient in and its
//!   cached one out, so the network average of `y` always equals the average
//!   embedded block gradient (scaled by `1/b`).
//! - [`dsgt_step`]: the full-gradient tracking baseline; the single-block
//!   case of the same update.
//! - [`atc_cyclic_step`]: a deterministic adapt-then-combine baseline. `y` is
//!   rebuilt each step from exact gradients of the cyclically active block;
//!   nothing is tracked.
//!
//! Engines are pure in `(state, streams)`: identical inputs reproduce
//! identical trajectories bit for bit.

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::blocks::{BlockPartition, BlockSelector};
use crate::error::{Error, Result};
use crate::network::MixingMatrix;
use crate::objectives::ObjectiveOracle;
use crate::rng::{derive_stream, StreamPurpose};

/// Abort threshold on the iterate norm.
const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Drbsgt,
    Dsgt,
    Atc,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Drbsgt => "drbsgt",
            Algorithm::Dsgt => "dsgt",
            Algorithm::Atc => "atc",
        }
    }
}

/// Per-iteration stepsize rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    /// `gamma_k = gamma / (k + big_gamma)`.
    Diminishing { gamma: f64, big_gamma: f64 },
    /// Fixed stepsize, for linear-convergence diagnostics.
    Constant { gamma: f64 },
}

impl StepSchedule {
    pub fn diminishing(gamma: f64, big_gamma: f64) -> Result<Self> {
        if gamma <= 0.0 || big_gamma <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "schedule needs gamma > 0 and big_gamma > 0, got {gamma}, {big_gamma}"
            )));
        }
        Ok(StepSchedule::Diminishing { gamma, big_gamma })
    }

    pub fn constant(gamma: f64) -> Result<Self> {
        if gamma <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "schedule needs gamma > 0, got {gamma}"
            )));
        }
        Ok(StepSchedule::Constant { gamma })
    }

    pub fn stepsize(&self, iter: usize) -> f64 {
        match *self {
            StepSchedule::Diminishing { gamma, big_gamma } => gamma / (iter as f64 + big_gamma),
            StepSchedule::Constant { gamma } => gamma,
        }
    }
}

/// Initial iterate rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitRule {
    Zeros,
    Gaussian,
}

/// The random streams one sample path owns: one per `(agent, purpose)`.
#[derive(Debug, Clone)]
pub struct SwarmRng {
    pub init: Vec<ChaCha8Rng>,
    pub noise: Vec<ChaCha8Rng>,
    pub blocks: Vec<ChaCha8Rng>,
}

impl SwarmRng {
    pub fn for_path(master_seed: u64, path: u64, num_agents: usize) -> Self {
        let stream = |purpose| {
            (0..num_agents)
                .map(|i| derive_stream(master_seed, path, i as u64, purpose))
                .collect()
        };
        Self {
            init: stream(StreamPurpose::InitPoint),
            noise: stream(StreamPurpose::GradientNoise),
            blocks: stream(StreamPurpose::BlockSelect),
        }
    }
}

/// Joint state of all agents at one iteration: row `i` of `x`/`y` is agent
/// `i`'s iterate and tracker. Caches hold the block gradient each agent last
/// fed into its tracker, which the next step must subtract back out.
#[derive(Debug, Clone)]
pub struct SwarmState {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub last_block: Vec<usize>,
    pub last_block_grad: Vec<DVector<f64>>,
    pub iter: usize,
    /// Oracle calls in block units (a full-gradient call counts its block
    /// equivalents).
    pub block_evals: u64,
    eval_weight: u64,
}

impl SwarmState {
    pub fn num_agents(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Network average of the iterates, `(1/m) 1^T x`.
    pub fn x_mean(&self) -> RowDVector<f64> {
        self.x.row_sum() / self.num_agents() as f64
    }

    /// Network average of the trackers.
    pub fn y_mean(&self) -> RowDVector<f64> {
        self.y.row_sum() / self.num_agents() as f64
    }

    fn agent_x(&self, agent: usize) -> DVector<f64> {
        self.x.row(agent).transpose()
    }

    fn check_finite(&self) -> Result<()> {
        for agent in 0..self.num_agents() {
            let row_ok = self.x.row(agent).iter().all(|v| v.is_finite())
                && self.y.row(agent).iter().all(|v| v.is_finite());
            if !row_ok {
                return Err(Error::Divergence {
                    iter: self.iter,
                    agent,
                    detail: "non-finite iterate or tracker".into(),
                });
            }
            let norm = self.x.row(agent).norm();
            if norm > DIVERGENCE_NORM {
                return Err(Error::Divergence {
                    iter: self.iter,
                    agent,
                    detail: format!("iterate norm {norm:.3e} exceeds {DIVERGENCE_NORM:.0e}"),
                });
            }
        }
        Ok(())
    }
}

/// What a step applied, for identity monitors: up to rounding,
/// `mean(x_new) = mean(x_old) - gamma * mean_direction`.
#[derive(Debug, Clone)]
pub struct StepInfo {
    pub gamma: f64,
    pub mean_direction: RowDVector<f64>,
}

/// Draw initial iterates and seed the trackers.
///
/// Block engines store one sampled block gradient per agent; the
/// full-gradient baseline stores the whole vector (its cache is the
/// single-block case). The cyclic baseline starts with an empty tracker and
/// pays no oracle calls until its first step.
pub fn init_swarm(
    algorithm: Algorithm,
    oracle: &dyn ObjectiveOracle,
    partition: &BlockPartition,
    rule: InitRule,
    rng: &mut SwarmRng,
) -> Result<SwarmState> {
    let m = oracle.num_agents();
    let n = oracle.dim();
    if partition.dim() != n {
        return Err(Error::InvalidArgument(format!(
            "partition covers {} coordinates, oracle has {n}",
            partition.dim()
        )));
    }

    let x = match rule {
        InitRule::Zeros => DMatrix::zeros(m, n),
        InitRule::Gaussian => DMatrix::from_fn(m, n, |i, _| rng.init[i].sample(StandardNormal)),
    };
    let mut state = SwarmState {
        x,
        y: DMatrix::zeros(m, n),
        last_block: vec![0; m],
        last_block_grad: vec![DVector::zeros(0); m],
        iter: 0,
        block_evals: 0,
        eval_weight: 1,
    };

    match algorithm {
        Algorithm::Drbsgt => {
            let selector = BlockSelector::new(partition.num_blocks())?;
            for i in 0..m {
                let block = selector.draw(&mut rng.blocks[i]);
                let range = partition.range(block);
                let g =
                    oracle.stochastic_block_gradient(i, &state.agent_x(i), range.clone(), &mut rng.noise[i]);
                add_block_into_row(&mut state.y, i, range.start, &g);
                state.last_block[i] = block;
                state.last_block_grad[i] = g;
                state.block_evals += 1;
            }
        }
        Algorithm::Dsgt => {
            state.eval_weight = partition.num_blocks() as u64;
            for i in 0..m {
                let g = oracle.stochastic_block_gradient(i, &state.agent_x(i), 0..n, &mut rng.noise[i]);
                add_block_into_row(&mut state.y, i, 0, &g);
                state.last_block[i] = 0;
                state.last_block_grad[i] = g;
                state.block_evals += state.eval_weight;
            }
        }
        Algorithm::Atc => {}
    }
    state.check_finite()?;
    Ok(state)
}

fn add_block_into_row(target: &mut DMatrix<f64>, row: usize, offset: usize, values: &DVector<f64>) {
    for (off, v) in values.iter().enumerate() {
        target[(row, offset + off)] += v;
    }
}

fn sub_block_from_row(target: &mut DMatrix<f64>, row: usize, offset: usize, values: &DVector<f64>) {
    for (off, v) in values.iter().enumerate() {
        target[(row, offset + off)] -= v;
    }
}

fn mix_and_descend(w: &MixingMatrix, x: &DMatrix<f64>, y: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    w.weights() * (x - y * gamma)
}

/// One iteration of the randomized block tracking engine.
pub fn drbsgt_step(
    state: &mut SwarmState,
    w: &MixingMatrix,
    schedule: &StepSchedule,
    oracle: &dyn ObjectiveOracle,
    partition: &BlockPartition,
    rng: &mut SwarmRng,
) -> Result<StepInfo> {
    let gamma = schedule.stepsize(state.iter);
    let mean_direction = state.y_mean();
    state.x = mix_and_descend(w, &state.x, &state.y, gamma);
    state.y = w.weights() * &state.y;

    let selector = BlockSelector::new(partition.num_blocks())?;
    for i in 0..state.num_agents() {
        let block = selector.draw(&mut rng.blocks[i]);
        let range = partition.range(block);
        let g = oracle.stochastic_block_gradient(i, &state.agent_x(i), range.clone(), &mut rng.noise[i]);
        add_block_into_row(&mut state.y, i, range.start, &g);
        let old_range = partition.range(state.last_block[i]);
        sub_block_from_row(&mut state.y, i, old_range.start, &state.last_block_grad[i].clone());
        state.last_block[i] = block;
        state.last_block_grad[i] = g;
        state.block_evals += state.eval_weight;
    }
    state.iter += 1;
    state.check_finite()?;
    Ok(StepInfo {
        gamma,
        mean_direction,
    })
}

/// One iteration of the full-gradient tracking baseline.
pub fn dsgt_step(
    state: &mut SwarmState,
    w: &MixingMatrix,
    schedule: &StepSchedule,
    oracle: &dyn ObjectiveOracle,
    rng: &mut SwarmRng,
) -> Result<StepInfo> {
    let gamma = schedule.stepsize(state.iter);
    let mean_direction = state.y_mean();
    state.x = mix_and_descend(w, &state.x, &state.y, gamma);
    state.y = w.weights() * &state.y;

    let n = state.dim();
    for i in 0..state.num_agents() {
        let g = oracle.stochastic_block_gradient(i, &state.agent_x(i), 0..n, &mut rng.noise[i]);
        add_block_into_row(&mut state.y, i, 0, &g);
        sub_block_from_row(&mut state.y, i, 0, &state.last_block_grad[i].clone());
        state.last_block[i] = 0;
        state.last_block_grad[i] = g;
        state.block_evals += state.eval_weight;
    }
    state.iter += 1;
    state.check_finite()?;
    Ok(StepInfo {
        gamma,
        mean_direction,
    })
}

/// One iteration of the deterministic cyclic-block baseline: exact gradient
/// of block `k mod b`, descent folded into the mixing, remaining blocks
/// averaged untouched.
pub fn atc_cyclic_step(
    state: &mut SwarmState,
    w: &MixingMatrix,
    schedule: &StepSchedule,
    oracle: &dyn ObjectiveOracle,
    partition: &BlockPartition,
) -> Result<StepInfo> {
    let gamma = schedule.stepsize(state.iter);
    let block = state.iter % partition.num_blocks();
    let range = partition.range(block);

    state.y.fill(0.0);
    for i in 0..state.num_agents() {
        let g = oracle.block_gradient(i, &state.agent_x(i), range.clone());
        add_block_into_row(&mut state.y, i, range.start, &g);
        state.block_evals += state.eval_weight;
    }
    let mean_direction = state.y_mean();
    state.x = mix_and_descend(w, &state.x, &state.y, gamma);
    state.iter += 1;
    state.check_finite()?;
    Ok(StepInfo {
        gamma,
        mean_direction,
    })
}

/// Dispatch one step of the named engine.
pub fn step(
    algorithm: Algorithm,
    state: &mut SwarmState,
    w: &MixingMatrix,
    schedule: &StepSchedule,
    oracle: &dyn ObjectiveOracle,
    partition: &BlockPartition,
    rng: &mut SwarmRng,
) -> Result<StepInfo> {
    match algorithm {
        Algorithm::Drbsgt => drbsgt_step(state, w, schedule, oracle, partition, rng),
        Algorithm::Dsgt => dsgt_step(state, w, schedule, oracle, rng),
        Algorithm::Atc => atc_cyclic_step(state, w, schedule, oracle, partition),
    }
}

/// Tracking-identity residual, normalized by `1 + |y_mean|`. For tracking
/// engines the network average of `y` equals the average embedded cached
/// block gradient, so `b * (y_mean - avg embed)` stays at rounding level.
pub fn tracking_residual(state: &SwarmState, partition: &BlockPartition) -> f64 {
    let m = state.num_agents();
    let b = partition.num_blocks() as f64;
    let mut avg = RowDVector::zeros(state.dim());
    for i in 0..m {
        let offset = partition.range(state.last_block[i]).start;
        for (off, v) in state.last_block_grad[i].iter().enumerate() {
            avg[offset + off] += v;
        }
    }
    avg /= m as f64;
    let y_mean = state.y_mean();
    b * (&y_mean - avg).norm() / (1.0 + y_mean.norm())
}

/// Oracle-call counter in block units and full-gradient equivalents
/// (`block_evals * (n/b) / n`). The x-axis for budget-matched comparisons.
pub fn gradient_eval_counter(state: &SwarmState, partition: &BlockPartition) -> (u64, f64) {
    let evals = state.block_evals;
    (evals, evals as f64 / partition.num_blocks() as f64)
}

/// Validity report for a diminishing schedule against the rate conditions.
/// Everything is recomputed deterministically from
/// `(gamma, big_gamma, b, mu, lip, rho)`; nothing is enforced.
#[derive(Debug, Clone)]
pub struct ScheduleReport {
    pub gamma: f64,
    pub big_gamma: f64,
    pub num_blocks: usize,
    pub mu: f64,
    pub lip: f64,
    pub rho: f64,
    /// `big_gamma > gamma`.
    pub gamma_order_ok: bool,
    /// Cap on the initial stepsize: `min(2b/(mu+L), b*mu/(4(b-1)L^2))`,
    /// infinite at `b = 1`.
    pub gamma0_cap: f64,
    /// `gamma / big_gamma <= gamma0_cap`.
    pub gamma0_ok: bool,
    /// `(b/2) (1 - rho^2) / rho^2`; undefined on a perfectly mixing network.
    pub eta: Option<f64>,
    /// Spectral lower bound on `big_gamma`; zero when `rho = 0`.
    pub spectral_floor: f64,
    pub spectral_ok: bool,
    /// Iteration past which the boxed rate bounds apply (may be negative).
    pub k_threshold: f64,
    pub k_threshold_effective: u64,
    pub all_ok: bool,
}

impl std::fmt::Display for ScheduleReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let flag = |ok: bool| if ok { "ok" } else { "VIOLATED" };
        writeln!(
            f,
            "schedule gamma_k = {} / (k + {})",
            self.gamma, self.big_gamma
        )?;
        writeln!(
            f,
            "  constants: b = {}, mu = {}, L = {}, rho = {:.6}",
            self.num_blocks, self.mu, self.lip, self.rho
        )?;
        writeln!(
            f,
            "  big_gamma > gamma                : {}",
            flag(self.gamma_order_ok)
        )?;
        writeln!(
            f,
            "  gamma_0 = {:.6e} <= cap {:.6e}   : {}",
            self.gamma / self.big_gamma,
            self.gamma0_cap,
            flag(self.gamma0_ok)
        )?;
        match self.eta {
            Some(eta) => writeln!(f, "  eta = {eta:.6e}")?,
            None => writeln!(f, "  eta undefined (rho = 0, spectral conditions vacuous)")?,
        }
        writeln!(
            f,
            "  big_gamma >= spectral floor {:.6e}: {}",
            self.spectral_floor,
            flag(self.spectral_ok)
        )?;
        writeln!(
            f,
            "  rate bounds asserted for k > {:.3} (effective floor {})",
            self.k_threshold, self.k_threshold_effective
        )?;
        write!(f, "  all conditions: {}", flag(self.all_ok))
    }
}

/// Check a diminishing schedule against the stepsize validity conditions.
pub fn validate_schedule(
    schedule: &StepSchedule,
    num_blocks: usize,
    mu: f64,
    lip: f64,
    rho: f64,
) -> Result<ScheduleReport> {
    let (gamma, big_gamma) = match *schedule {
        StepSchedule::Diminishing { gamma, big_gamma } => (gamma, big_gamma),
        StepSchedule::Constant { .. } => {
            return Err(Error::InvalidArgument(
                "schedule validation applies to diminishing schedules".into(),
            ));
        }
    };
    if num_blocks == 0 {
        return Err(Error::InvalidArgument("b must be >= 1".into()));
    }
    if mu <= 0.0 || lip <= 0.0 || mu > lip {
        return Err(Error::InvalidArgument(format!(
            "need 0 < mu <= L, got mu = {mu}, L = {lip}"
        )));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!(
            "rho must lie in [0, 1), got {rho}"
        )));
    }

    let b = num_blocks as f64;
    let gamma_order_ok = big_gamma > gamma;
    let gamma0_cap = if num_blocks == 1 {
        2.0 * b / (mu + lip)
    } else {
        (2.0 * b / (mu + lip)).min(b * mu / (4.0 * (b - 1.0) * lip * lip))
    };
    let gamma0_ok = gamma / big_gamma <= gamma0_cap;

    let (eta, spectral_floor, k_threshold) = if rho == 0.0 {
        (None, 0.0, -big_gamma)
    } else {
        let rho2 = rho * rho;
        let eta = (b / 2.0) * (1.0 - rho2) / rho2;
        let coeff = 1.0 / (b * b) + 1.0 / (b * eta);
        let bracket =
            2.0 * lip * lip * rho2 + 2.0 * (b - 1.0) * lip * lip * (1.0 + rho2) * rho2 / (1.0 - rho2);
        let floor = gamma * (3.0 / (1.0 - rho2) * coeff * bracket).sqrt();
        let threshold = gamma * (coeff * bracket / ((1.0 + rho2) / 2.0)).sqrt() - big_gamma;
        (Some(eta), floor, threshold)
    };
    let spectral_ok = big_gamma >= spectral_floor;

    Ok(ScheduleReport {
        gamma,
        big_gamma,
        num_blocks,
        mu,
        lip,
        rho,
        gamma_order_ok,
        gamma0_cap,
        gamma0_ok,
        eta,
        spectral_floor,
        spectral_ok,
        k_threshold,
        k_threshold_effective: k_threshold.max(0.0).ceil() as u64,
        all_ok: gamma_order_ok && gamma0_ok && spectral_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::make_partition;
    use crate::network::{build_mixing_matrix, NetworkGraph, WeightRule};
    use crate::objectives::{make_quadratic_oracle, spectrum_linear, QuadraticConfig};

    fn quad(m: usize, n: usize, noise: f64, seed: u64) -> crate::objectives::QuadraticOracle {
        make_quadratic_oracle(&QuadraticConfig {
            agents: m,
            dim: n,
            spectrum: spectrum_linear(1.0, 4.0, n),
            noise,
            center_scale: 1.0,
            seed,
        })
        .unwrap()
    }

    fn ring_w(m: usize) -> MixingMatrix {
        build_mixing_matrix(&NetworkGraph::ring(m).unwrap(), WeightRule::Metropolis).unwrap()
    }

    #[test]
    fn single_block_init_seeds_full_gradient() {
        let oracle = quad(3, 8, 0.1, 5);
        let partition = make_partition(8, 1).unwrap();
        let mut rng = SwarmRng::for_path(11, 0, 3);
        let state = init_swarm(Algorithm::Drbsgt, &oracle, &partition, InitRule::Gaussian, &mut rng).unwrap();
        // Replay the same streams to reproduce the draws.
        let mut replay = SwarmRng::for_path(11, 0, 3);
        for i in 0..3 {
            let x: DVector<f64> = DVector::from_fn(8, |_, _| replay.init[i].sample(StandardNormal));
            let _ = replay.blocks[i].gen_range(0..1);
            let g = oracle.stochastic_block_gradient(i, &x, 0..8, &mut replay.noise[i]);
            assert_eq!(state.y.row(i).transpose(), g);
            assert_eq!(state.x.row(i).transpose(), x);
        }
    }

    #[test]
    fn deterministic_single_block_init_tracks_mean_gradient() {
        let oracle = quad(4, 6, 0.0, 9);
        let partition = make_partition(6, 1).unwrap();
        let mut rng = SwarmRng::for_path(2, 0, 4);
        let state = init_swarm(Algorithm::Drbsgt, &oracle, &partition, InitRule::Zeros, &mut rng).unwrap();
        let zero = DVector::zeros(6);
        let mut expect = RowDVector::zeros(6);
        for i in 0..4 {
            expect += oracle.gradient(i, &zero).transpose();
        }
        expect /= 4.0;
        assert!((state.y_mean() - expect).norm() < 1e-15);
    }

    #[test]
    fn tracking_identity_exact_at_init() {
        let oracle = quad(5, 12, 0.3, 21);
        let partition = make_partition(12, 4).unwrap();
        let mut rng = SwarmRng::for_path(7, 3, 5);
        let state = init_swarm(Algorithm::Drbsgt, &oracle, &partition, InitRule::Gaussian, &mut rng).unwrap();
        assert!(tracking_residual(&state, &partition) <= 1e-12);
    }

    #[test]
    fn mean_dynamics_identity_along_a_run() {
        let oracle = quad(5, 12, 0.2, 33);
        let partition = make_partition(12, 3).unwrap();
        let w = ring_w(5);
        let schedule = StepSchedule::diminishing(2.0, 50.0).unwrap();
        let mut rng = SwarmRng::for_path(4, 0, 5);
        let mut state =
            init_swarm(Algorithm::Drbsgt, &oracle, &partition, InitRule::Gaussian, &mut rng).unwrap();
        for _ in 0..200 {
            let before = state.x_mean();
            let info = drbsgt_step(&mut state, &w, &schedule, &oracle, &partition, &mut rng).unwrap();
            let predicted = before - &info.mean_direction * info.gamma;
            let scale = (predicted.norm()).max(1.0);
            assert!(
                (state.x_mean() - predicted).norm() <= 1e-12 * scale,
                "mean step mismatch at k = {}",
                state.iter
            );
        }
    }

    #[test]
    fn tracking_identity_holds_along_a_run() {
        let oracle = quad(5, 12, 0.2, 57);
        let partition = make_partition(12, 4).unwrap();
        let w = ring_w(5);
        let schedule = StepSchedule::diminishing(2.0, 100.0).unwrap();
        let mut rng = SwarmRng::for_path(8, 1, 5);
        let mut state =
            init_swarm(Algorithm::Drbsgt, &oracle, &partition, InitRule::Gaussian, &mut rng).unwrap();
        for _ in 0..500 {
            drbsgt_step(&mut state, &w, &schedule, &oracle, &partition, &mut rng).unwrap();
            assert!(tracking_residual(&state, &partition) <= 1e-9);
        }
    }

    #[test]
    fn single_block_engine_matches_full_gradient_engine_bitwise() {
        let oracle = quad(5, 10, 0.5, 13);
        let partition = make_partition(10, 1).unwrap();
        let w = ring_w(5);
        let schedule = StepSchedule::diminishing(1.0, 30.0).unwrap();

        let mut rng_a = SwarmRng::for_path(99, 0, 5);
        let mut a = init_swarm(Algorithm::Drbsgt, &oracle, &partition, InitRule::Gaussian, &mut rng_a).unwrap();
        let mut rng_b = SwarmRng::for_path(99, 0, 5);
        let mut b = init_swarm(Algorithm::Dsgt, &oracle, &partition, InitRule::Gaussian, &mut rng_b).unwrap();

        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
        for _ in 0..100 {
            drbsgt_step(&mut a, &w, &schedule, &oracle, &partition, &mut rng_a).unwrap();
            dsgt_step(&mut b, &w, &schedule, &oracle, &mut rng_b).unwrap();
            assert_eq!(a.x, b.x, "iterates diverged at k = {}", a.iter);
            assert_eq!(a.y, b.y, "trackers diverged at k = {}", a.iter);
        }
    }

    #[test]
    fn eval_counters_match_the_accounting() {
        let oracle = quad(4, 12, 0.1, 3);
        let partition = make_partition(12, 3).unwrap();
        let w = ring_w(4);
        let schedule = StepSchedule::diminishing(1.0, 100.0).unwrap();
        let k = 25;

        let mut rng = SwarmRng::for_path(1, 0, 4);
        let mut s = init_swarm(Algorithm::Drbsgt, &oracle, &partition, InitRule::Gaussian, &mut rng).unwrap();
        for _ in 0..k {
            let before = s.block_evals;
            drbsgt_step(&mut s, &w, &schedule, &oracle, &partition, &mut rng).unwrap();
            assert_eq!(s.block_evals - before, 4, "one fresh block per agent per step");
        }
        let (evals, full_equiv) = gradient_eval_counter(&s, &partition);
        assert_eq!(evals, 4 * (k + 1));
        assert!((full_equiv - evals as f64 / 3.0).abs() < 1e-12);

        let mut rng = SwarmRng::for_path(1, 0, 4);
        let mut s = init_swarm(Algorithm::Dsgt, &oracle, &partition, InitRule::Gaussian, &mut rng).unwrap();
        for _ in 0..k {
            dsgt_step(&mut s, &w, &schedule, &oracle, &mut rng).unwrap();
        }
        assert_eq!(s.block_evals, 4 * (k + 1) * 3);

        let mut rng = SwarmRng::for_path(1, 0, 4);
        let mut s = init_swarm(Algorithm::Atc, &oracle, &partition, InitRule::Gaussian, &mut rng).unwrap();
        for _ in 0..k {
            atc_cyclic_step(&mut s, &w, &schedule, &oracle, &partition).unwrap();
        }
        assert_eq!(s.block_evals, 4 * k);
    }

    #[test]
    fn cyclic_baseline_single_block_is_mixed_gradient_descent() {
        let oracle = quad(4, 6, 0.0, 8);
        let partition = make_partition(6, 1).unwrap();
        let w = ring_w(4);
        let schedule = StepSchedule::constant(0.05).unwrap();
        let mut rng = SwarmRng::for_path(3, 0, 4);
        let mut state = init_swarm(Algorithm::Atc, &oracle, &partition, InitRule::Gaussian, &mut rng).unwrap();
        let x0 = state.x.clone();
        atc_cyclic_step(&mut state, &w, &schedule, &oracle, &partition).unwrap();
        let mut grads = DMatrix::zeros(4, 6);
        for i in 0..4 {
            grads.set_row(i, &oracle.gradient(i, &x0.row(i).transpose()).transpose());
        }
        let expect = w.weights() * (&x0 - grads * 0.05);
        assert!((state.x - expect).norm() < 1e-13);
    }

    #[test]
    fn cyclic_baseline_single_agent_is_block_coordinate_descent() {
        let oracle = quad(1, 6, 0.0, 4);
        let partition = make_partition(6, 3).unwrap();
        let graph = NetworkGraph::from_edges(1, &[]).unwrap();
        let w = MixingMatrix::from_weights(&graph, DMatrix::from_element(1, 1, 1.0)).unwrap();
        let schedule = StepSchedule::constant(0.1).unwrap();
        let mut rng = SwarmRng::for_path(5, 0, 1);
        let mut state = init_swarm(Algorithm::Atc, &oracle, &partition, InitRule::Gaussian, &mut rng).unwrap();
        let mut reference = state.x.row(0).transpose();
        for k in 0..9 {
            atc_cyclic_step(&mut state, &w, &schedule, &oracle, &partition).unwrap();
            let range = partition.range(k % 3);
            let g = oracle.block_gradient(0, &reference, range.clone());
            for (off, idx) in range.enumerate() {
                reference[idx] -= 0.1 * g[off];
            }
            assert!((state.x.row(0).transpose() - &reference).norm() < 1e-13);
        }
    }

    #[test]
    fn cyclic_baseline_is_deterministic() {
        let oracle = quad(4, 9, 0.7, 2);
        let partition = make_partition(9, 3).unwrap();
        let w = ring_w(4);
        let schedule = StepSchedule::diminishing(1.0, 20.0).unwrap();
        let run = || {
            let mut rng = SwarmRng::for_path(6, 0, 4);
            let mut s = init_swarm(Algorithm::Atc, &oracle, &partition, InitRule::Gaussian, &mut rng).unwrap();
            for _ in 0..50 {
                atc_cyclic_step(&mut s, &w, &schedule, &oracle, &partition).unwrap();
            }
            s.x
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn divergence_is_reported_with_location() {
        let oracle = quad(3, 5, 0.0, 14);
        let partition = make_partition(5, 1).unwrap();
        let w = ring_w(3);
        let schedule = StepSchedule::constant(1e6).unwrap();
        let mut rng = SwarmRng::for_path(0, 0, 3);
        let mut state =
            init_swarm(Algorithm::Dsgt, &oracle, &partition, InitRule::Gaussian, &mut rng).unwrap();
        let mut failed = false;
        for _ in 0..200 {
            if let Err(e) = dsgt_step(&mut state, &w, &schedule, &oracle, &mut rng) {
                assert!(matches!(e, Error::Divergence { .. }), "{e}");
                failed = true;
                break;
            }
        }
        assert!(failed, "stepsize 1e6 on a quadratic must blow up");
    }

    #[test]
    fn schedule_stepsizes_are_positive_and_nonincreasing() {
        let schedule = StepSchedule::diminishing(8.5, 500.0).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..10_000 {
            let g = schedule.stepsize(k);
            assert!(g > 0.0 && g <= prev);
            prev = g;
        }
        assert!(StepSchedule::diminishing(0.0, 1.0).is_err());
        assert!(StepSchedule::diminishing(1.0, -2.0).is_err());
    }

    #[test]
    fn schedule_validation_degenerate_network() {
        let schedule = StepSchedule::diminishing(1.0, 2.0).unwrap();
        let report = validate_schedule(&schedule, 1, 1.0, 1.0, 0.0).unwrap();
        assert!(report.all_ok, "{report}");
        assert!(report.eta.is_none());
        assert_eq!(report.k_threshold_effective, 0);
    }

    #[test]
    fn schedule_validation_desk_constants() {
        let schedule = StepSchedule::diminishing(10.0, 1e4).unwrap();
        let report = validate_schedule(&schedule, 10, 0.02, 1250.0, 0.54).unwrap();
        // Conditions are recorded, not enforced; this set violates the
        // stepsize cap.
        assert!(report.gamma_order_ok);
        assert!(!report.gamma0_ok);
        let text = format!("{report}");
        assert!(text.contains("VIOLATED"));
    }

    #[test]
    fn schedule_validation_flags_gamma_order() {
        let schedule = StepSchedule::diminishing(4.0, 2.0).unwrap();
        let report = validate_schedule(&schedule, 2, 1.0, 2.0, 0.5).unwrap();
        assert!(!report.gamma_order_ok);
        assert!(!report.all_ok);
    }

    #[test]
    fn constant_schedule_cannot_be_validated() {
        let schedule = StepSchedule::constant(0.1).unwrap();
        assert!(validate_schedule(&schedule, 2, 1.0, 2.0, 0.5).is_err());
    }
}
