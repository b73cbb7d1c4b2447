//! Experiment configuration, seeded multi-path execution, and baseline
//! comparisons.
//!
//! A run is fully determined by `(config, master_seed)`: the problem
//! instance is built once, then `paths` independent trajectories execute
//! concurrently on dedicated random streams. Identity and inequality
//! monitors run at full per-step resolution inside the loop; series storage
//! is strided. Outputs are written after all paths finish, in path order, so
//! repeated runs produce byte-identical CSVs regardless of worker count.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{
    init_swarm, step, validate_schedule, Algorithm, InitRule, ScheduleReport,
    StepSchedule, SwarmRng, SwarmState,
};
use crate::blocks::{make_partition, BlockPartition};
use crate::error::{Error, Result};
use crate::metrics::{
    aggregate, prop1b_rhs, stride_keeps, AggregateRow, MetricsSeries, Prop1bViolation, SeriesRow,
};
use crate::network::{
    build_graph, build_mixing_matrix, GraphKind, MixingMatrix, NetworkGraph, WeightRule,
};
use crate::objectives::{
    generate_synthetic_dataset, load_dataset, make_logistic_oracle, make_quadratic_oracle,
    partition_dataset, solve_optimum, spectrum_linear, total_value, CsvOptions, LabelRule,
    ObjectiveOracle, PartitionRule, QuadraticConfig,
};

/// Environment variable capping the number of path workers.
pub const WORKERS_ENV: &str = "BLOCKGT_WORKERS";

/// Confidence level used for all aggregate intervals.
pub const CI_LEVEL: f64 = 0.90;

const TRACKING_TOL: f64 = 1e-9;
const MEAN_DYN_TOL: f64 = 1e-12;
const PROP1B_SLACK: f64 = 1e-10;
const CONSENSUS_ZERO_TOL: f64 = 1e-12;
const MAX_RECORDED_VIOLATIONS: usize = 64;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub master_seed: u64,
    pub paths: usize,
    /// Iteration count per path.
    pub horizon: usize,
    pub graph: GraphConfig,
    #[serde(default)]
    pub weights: WeightConfig,
    pub schedule: ScheduleConfig,
    pub objective: ObjectiveConfig,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub monitors: MonitorConfig,
    /// Optional multi-algorithm comparison section, used by `compare`.
    #[serde(default)]
    pub compare: Option<CompareSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub algorithms: Vec<Algorithm>,
    /// Block-evaluation budget shared by every algorithm.
    pub budget: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub kind: GraphKind,
    pub agents: usize,
    /// Edge-list file for `kind = "edge-list"`.
    #[serde(default)]
    pub edges: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    pub rule: WeightRule,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            rule: WeightRule::Metropolis,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ScheduleConfig {
    #[serde(default)]
    pub kind: ScheduleKind,
    pub gamma: f64,
    #[serde(default)]
    pub big_gamma: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    #[default]
    Diminishing,
    Constant,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObjectiveConfig {
    Quadratic {
        dim: usize,
        blocks: usize,
        mu: f64,
        lip: f64,
        #[serde(default)]
        noise: f64,
        #[serde(default = "default_center_scale")]
        center_scale: f64,
    },
    Logistic {
        blocks: usize,
        regularization: f64,
        batch: usize,
        #[serde(default = "default_partition_rule")]
        partition: PartitionRule,
        data: DataConfig,
    },
}

fn default_center_scale() -> f64 {
    1.0
}

fn default_partition_rule() -> PartitionRule {
    PartitionRule::Contiguous
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataConfig {
    Synthetic {
        samples: usize,
        dim: usize,
        #[serde(default = "default_feature_mean")]
        feature_mean: f64,
        #[serde(default = "default_feature_std")]
        feature_std: f64,
        #[serde(default = "default_flip_rate")]
        flip_rate: f64,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        label_rule: LabelRuleConfig,
        #[serde(default)]
        one_vs_rest_class: Option<i64>,
        #[serde(default)]
        feature_scale: Option<f64>,
    },
}

fn default_feature_mean() -> f64 {
    5.0
}

fn default_feature_std() -> f64 {
    0.5
}

fn default_flip_rate() -> f64 {
    0.05
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelRuleConfig {
    #[default]
    Parity,
    Signed,
    OneVsRest,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    pub rule: InitRule,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            rule: InitRule::Gaussian,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    pub enabled: bool,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self { enabled: true }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(Error::Config("paths must be >= 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if self.graph.kind == GraphKind::EdgeList && self.graph.edges.is_none() {
            return Err(Error::Config(
                "graph.kind = \"edge-list\" requires graph.edges".into(),
            ));
        }
        match self.schedule.kind {
            ScheduleKind::Diminishing => {
                if self.schedule.big_gamma.is_none() {
                    return Err(Error::Config(
                        "schedule.kind = \"diminishing\" requires schedule.big_gamma".into(),
                    ));
                }
            }
            ScheduleKind::Constant => {}
        }
        if let ObjectiveConfig::Logistic { data, .. } = &self.objective {
            if let DataConfig::Csv {
                label_rule: LabelRuleConfig::OneVsRest,
                one_vs_rest_class: None,
                ..
            } = data
            {
                return Err(Error::Config(
                    "label_rule = \"one-vs-rest\" requires one_vs_rest_class".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn blocks(&self) -> usize {
        match self.objective {
            ObjectiveConfig::Quadratic { blocks, .. } => blocks,
            ObjectiveConfig::Logistic { blocks, .. } => blocks,
        }
    }

    fn schedule(&self) -> Result<StepSchedule> {
        match self.schedule.kind {
            ScheduleKind::Diminishing => StepSchedule::diminishing(
                self.schedule.gamma,
                self.schedule.big_gamma.ok_or_else(|| {
                    Error::Config("diminishing schedule requires big_gamma".into())
                })?,
            ),
            ScheduleKind::Constant => StepSchedule::constant(self.schedule.gamma),
        }
    }

    /// Everything except the algorithm and path count, as a comparison
    /// fingerprint.
    fn shared_fingerprint(&self) -> String {
        format!(
            "{:?}|{:?}|{:?}|{:?}|{:?}|{}|{}",
            self.graph, self.weights, self.schedule, self.objective, self.init,
            self.master_seed, self.horizon,
        )
    }
}

// ---------------------------------------------------------------------------
// Problem construction
// ---------------------------------------------------------------------------

/// The immutable problem instance shared by every path of a run.
pub struct BuiltExperiment {
    pub graph: NetworkGraph,
    pub mixing: MixingMatrix,
    pub oracle: Box<dyn ObjectiveOracle>,
    pub partition: BlockPartition,
    pub schedule: StepSchedule,
    pub x_star: DVector<f64>,
    pub x_star_residual: f64,
    pub schedule_report: Option<ScheduleReport>,
}

pub fn build_experiment(config: &ExperimentConfig) -> Result<BuiltExperiment> {
    config.validate()?;
    let graph = match (&config.graph.kind, &config.graph.edges) {
        (GraphKind::EdgeList, Some(path)) => {
            NetworkGraph::from_edge_list_file(path, config.graph.agents)?
        }
        (kind, _) => build_graph(*kind, config.graph.agents, None)?,
    };
    let mixing = build_mixing_matrix(&graph, config.weights.rule)?;
    let m = graph.num_agents();

    let oracle: Box<dyn ObjectiveOracle> = match &config.objective {
        ObjectiveConfig::Quadratic {
            dim,
            mu,
            lip,
            noise,
            center_scale,
            ..
        } => Box::new(make_quadratic_oracle(&QuadraticConfig {
            agents: m,
            dim: *dim,
            spectrum: spectrum_linear(*mu, *lip, *dim),
            noise: *noise,
            center_scale: *center_scale,
            seed: config.master_seed,
        })?),
        ObjectiveConfig::Logistic {
            regularization,
            batch,
            partition,
            data,
            ..
        } => {
            let dataset = match data {
                DataConfig::Synthetic {
                    samples,
                    dim,
                    feature_mean,
                    feature_std,
                    flip_rate,
                } => generate_synthetic_dataset(
                    *samples,
                    *dim,
                    *feature_mean,
                    *feature_std,
                    *flip_rate,
                    config.master_seed,
                )?,
                DataConfig::Csv {
                    path,
                    label_rule,
                    one_vs_rest_class,
                    feature_scale,
                } => {
                    let rule = match label_rule {
                        LabelRuleConfig::Parity => LabelRule::Parity,
                        LabelRuleConfig::Signed => LabelRule::Signed,
                        LabelRuleConfig::OneVsRest => LabelRule::OneVsRest(
                            one_vs_rest_class.ok_or_else(|| {
                                Error::Config("one-vs-rest needs a class".into())
                            })?,
                        ),
                    };
                    load_dataset(
                        path,
                        &CsvOptions {
                            label_rule: rule,
                            feature_scale: *feature_scale,
                        },
                    )?
                }
            };
            let dataset = partition_dataset(dataset, m, *partition)?;
            Box::new(make_logistic_oracle(&dataset, *regularization, *batch)?)
        }
    };

    let partition = make_partition(oracle.dim(), config.blocks())?;
    let schedule = config.schedule()?;
    let optimum = solve_optimum(oracle.as_ref())?;
    let schedule_report = match schedule {
        StepSchedule::Diminishing { .. } => Some(validate_schedule(
            &schedule,
            partition.num_blocks(),
            oracle.strong_convexity(),
            oracle.smoothness(),
            mixing.rho(),
        )?),
        StepSchedule::Constant { .. } => None,
    };

    Ok(BuiltExperiment {
        graph,
        mixing,
        oracle,
        partition,
        schedule,
        x_star: optimum.point,
        x_star_residual: optimum.residual,
        schedule_report,
    })
}

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

/// Identity/inequality monitor outcome of one run (merged across paths).
#[derive(Debug, Clone, Default)]
pub struct MonitorSummary {
    pub enabled: bool,
    pub max_tracking_residual: f64,
    pub tracking_violations: usize,
    /// Largest `|x_mean' - (x_mean - gamma y_mean)|` relative to scale.
    pub max_mean_step_residual: f64,
    pub mean_step_violations: usize,
    /// Total consensus-recursion violations; detail records are capped.
    pub prop1b_violation_count: usize,
    pub prop1b_violations: Vec<Prop1bViolation>,
    pub prop1b_checked_steps: usize,
    /// Steps where a perfectly mixing network left nonzero dispersion.
    pub consensus_zero_violations: usize,
}

impl MonitorSummary {
    fn merge(&mut self, other: &MonitorSummary) {
        self.enabled |= other.enabled;
        self.max_tracking_residual = self.max_tracking_residual.max(other.max_tracking_residual);
        self.tracking_violations += other.tracking_violations;
        self.max_mean_step_residual = self.max_mean_step_residual.max(other.max_mean_step_residual);
        self.mean_step_violations += other.mean_step_violations;
        self.prop1b_violation_count += other.prop1b_violation_count;
        self.prop1b_checked_steps += other.prop1b_checked_steps;
        self.consensus_zero_violations += other.consensus_zero_violations;
        for v in &other.prop1b_violations {
            if self.prop1b_violations.len() < MAX_RECORDED_VIOLATIONS {
                self.prop1b_violations.push(v.clone());
            }
        }
    }

    pub fn clean(&self) -> bool {
        self.tracking_violations == 0
            && self.mean_step_violations == 0
            && self.prop1b_violation_count == 0
            && self.consensus_zero_violations == 0
    }
}

/// A path aborted by the divergence guard. Other paths continue.
#[derive(Debug, Clone)]
pub struct PathFailure {
    pub path: usize,
    pub iter: usize,
    pub agent: usize,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct PathResult {
    pub path: usize,
    pub series: MetricsSeries,
    pub monitors: MonitorSummary,
}

pub struct RunResult {
    pub config: ExperimentConfig,
    pub rho: f64,
    pub x_star_residual: f64,
    pub schedule_report: Option<ScheduleReport>,
    pub paths: Vec<PathResult>,
    pub failures: Vec<PathFailure>,
    pub aggregate: Vec<AggregateRow>,
    pub monitors: MonitorSummary,
    pub wall_clock: Duration,
    /// Final block-eval count and full-gradient equivalents per path.
    pub final_evals: (u64, f64),
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let threads = std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// Execute all sample paths of one experiment and aggregate the results.
/// Divergent paths become failure records; the aggregate covers the
/// surviving paths and reports the exclusion count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunResult> {
    let started = Instant::now();
    let built = build_experiment(config)?;
    let pool = worker_pool()?;

    let outcomes: Vec<std::result::Result<PathResult, PathFailure>> = pool.install(|| {
        (0..config.paths)
            .into_par_iter()
            .map(|path| run_path(config, &built, path))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut paths = Vec::new();
    let mut failures = Vec::new();
    let mut monitors = MonitorSummary {
        enabled: config.monitors.enabled,
        ..MonitorSummary::default()
    };
    for outcome in outcomes {
        match outcome {
            Ok(result) => {
                monitors.merge(&result.monitors);
                paths.push(result);
            }
            Err(failure) => failures.push(failure),
        }
    }

    let series_refs: Vec<&MetricsSeries> = paths.iter().map(|p| &p.series).collect();
    let aggregate_rows = if series_refs.is_empty() {
        Vec::new()
    } else {
        aggregate(&series_refs, CI_LEVEL)?
    };

    let final_evals = paths
        .first()
        .and_then(|p| p.series.last())
        .map(|row| {
            (
                row.block_evals,
                row.block_evals as f64 / built.partition.num_blocks() as f64,
            )
        })
        .unwrap_or((0, 0.0));

    let result = RunResult {
        config: config.clone(),
        rho: built.mixing.rho(),
        x_star_residual: built.x_star_residual,
        schedule_report: built.schedule_report.clone(),
        paths,
        failures,
        aggregate: aggregate_rows,
        monitors,
        wall_clock: started.elapsed(),
        final_evals,
    };

    if let Some(dir) = &config.output.dir {
        result.write_outputs(dir)?;
    }
    Ok(result)
}

/// Run one sample path with in-loop monitors at full step resolution.
fn run_path(
    config: &ExperimentConfig,
    built: &BuiltExperiment,
    path: usize,
) -> Result<std::result::Result<PathResult, PathFailure>> {
    let oracle = built.oracle.as_ref();
    let algorithm = config.algorithm;
    let tracks = matches!(algorithm, Algorithm::Drbsgt | Algorithm::Dsgt);
    // The tracker cache layout: real partition for the block engine, a
    // single block for the full-gradient baseline.
    let cache_partition = match algorithm {
        Algorithm::Drbsgt => built.partition.clone(),
        Algorithm::Dsgt => make_partition(oracle.dim(), 1)?,
        Algorithm::Atc => built.partition.clone(),
    };
    let monitor_partition = tracks.then_some(&cache_partition);

    let mut rng = SwarmRng::for_path(config.master_seed, path as u64, oracle.num_agents());
    let mut state = match init_swarm(
        algorithm,
        oracle,
        &cache_partition,
        config.init.rule,
        &mut rng,
    ) {
        Ok(state) => state,
        Err(Error::Divergence { iter, agent, detail }) => {
            return Ok(Err(PathFailure {
                path,
                iter,
                agent,
                detail,
            }))
        }
        Err(e) => return Err(e),
    };

    let mut series = MetricsSeries::new();
    let mut monitors = MonitorSummary {
        enabled: config.monitors.enabled,
        ..MonitorSummary::default()
    };
    let rho = built.mixing.rho();

    let mut scalars = measure(&state, &built.x_star, monitor_partition);
    push_row(
        &mut series,
        &state,
        oracle,
        &scalars,
        built.schedule.stepsize(0),
    )?;
    if config.monitors.enabled && tracks {
        monitor_tracking(&mut monitors, scalars.tracking);
    }

    for _ in 0..config.horizon {
        let x_mean_before = state.x_mean();
        let info = match step(
            algorithm,
            &mut state,
            &built.mixing,
            &built.schedule,
            oracle,
            &built.partition,
            &mut rng,
        ) {
            Ok(info) => info,
            Err(Error::Divergence { iter, agent, detail }) => {
                return Ok(Err(PathFailure {
                    path,
                    iter,
                    agent,
                    detail,
                }))
            }
            Err(e) => return Err(e),
        };
        let prev = scalars;
        scalars = measure(&state, &built.x_star, monitor_partition);

        if config.monitors.enabled {
            // Mean dynamics: the network average follows plain descent.
            let predicted = &x_mean_before - &info.mean_direction * info.gamma;
            let scale = (x_mean_before.norm() + info.gamma * info.mean_direction.norm()).max(1.0);
            let residual = (state.x_mean() - predicted).norm() / scale;
            monitors.max_mean_step_residual = monitors.max_mean_step_residual.max(residual);
            if residual > MEAN_DYN_TOL {
                monitors.mean_step_violations += 1;
            }

            if tracks {
                monitor_tracking(&mut monitors, scalars.tracking);
                if rho > 0.0 {
                    monitors.prop1b_checked_steps += 1;
                    let rhs = prop1b_rhs(prev.err2, prev.err3, info.gamma, rho) + PROP1B_SLACK;
                    if scalars.err2 > rhs {
                        monitors.prop1b_violation_count += 1;
                        if monitors.prop1b_violations.len() < MAX_RECORDED_VIOLATIONS {
                            monitors.prop1b_violations.push(Prop1bViolation {
                                path,
                                iter: state.iter,
                                lhs: scalars.err2,
                                rhs,
                            });
                        }
                    }
                } else if scalars.err2 > CONSENSUS_ZERO_TOL {
                    monitors.consensus_zero_violations += 1;
                }
            }
        }

        if stride_keeps(state.iter) || state.iter == config.horizon {
            push_row(
                &mut series,
                &state,
                oracle,
                &scalars,
                built.schedule.stepsize(state.iter),
            )?;
        }
    }

    Ok(Ok(PathResult {
        path,
        series,
        monitors,
    }))
}

fn monitor_tracking(monitors: &mut MonitorSummary, residual: f64) {
    monitors.max_tracking_residual = monitors.max_tracking_residual.max(residual);
    if residual > TRACKING_TOL {
        monitors.tracking_violations += 1;
    }
}

#[derive(Clone, Copy)]
struct StepScalars {
    err1: f64,
    err2: f64,
    err3: f64,
    tracking: f64,
}

fn measure(state: &SwarmState, x_star: &DVector<f64>, partition: Option<&BlockPartition>) -> StepScalars {
    let x_mean = state.x_mean();
    let y_mean = state.y_mean();
    let mut err2 = 0.0;
    let mut err3 = 0.0;
    for i in 0..state.num_agents() {
        err2 += (state.x.row(i) - &x_mean).norm_squared();
        err3 += (state.y.row(i) - &y_mean).norm_squared();
    }
    StepScalars {
        err1: (&x_mean.transpose() - x_star).norm_squared(),
        err2,
        err3,
        tracking: partition.map_or(0.0, |p| crate::algorithms::tracking_residual(state, p)),
    }
}

fn push_row(
    series: &mut MetricsSeries,
    state: &SwarmState,
    oracle: &dyn ObjectiveOracle,
    scalars: &StepScalars,
    gamma: f64,
) -> Result<()> {
    series.push(SeriesRow {
        iter: state.iter,
        gamma,
        err1: scalars.err1,
        err2: scalars.err2,
        err3: scalars.err3,
        objective: total_value(oracle, &state.x_mean().transpose()),
        tracking_residual: scalars.tracking,
        block_evals: state.block_evals,
    })
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

impl RunResult {
    /// Write `series.csv`, `aggregate.csv`, `summary.txt`, and
    /// `schedule_report.txt` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("series.csv"), render_series_csv(self))?;
        std::fs::write(dir.join("aggregate.csv"), render_aggregate_csv(self))?;
        std::fs::write(dir.join("summary.txt"), render_summary(self))?;
        let report_text = match &self.schedule_report {
            Some(report) => format!("{report}\n"),
            None => "constant schedule: rate conditions not applicable\n".into(),
        };
        std::fs::write(dir.join("schedule_report.txt"), report_text)?;
        Ok(())
    }
}

fn render_series_csv(result: &RunResult) -> String {
    let mut out = String::from("path,k,gamma_k,err1,err2,err3,objective,tracking_residual,block_evals\n");
    for path in &result.paths {
        for row in path.series.rows() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                path.path,
                row.iter,
                row.gamma,
                row.err1,
                row.err2,
                row.err3,
                row.objective,
                row.tracking_residual,
                row.block_evals
            );
        }
    }
    out
}

fn render_aggregate_csv(result: &RunResult) -> String {
    let mut out = String::from(
        "k,gamma_k,err1_mean,err1_lo,err1_hi,err2_mean,err2_lo,err2_hi,err3_mean,err3_lo,err3_hi,objective_mean,objective_lo,objective_hi,block_evals\n",
    );
    for row in &result.aggregate {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            row.iter,
            row.gamma,
            row.err1.mean,
            row.err1.lo,
            row.err1.hi,
            row.err2.mean,
            row.err2.lo,
            row.err2.hi,
            row.err3.mean,
            row.err3.lo,
            row.err3.hi,
            row.objective.mean,
            row.objective.lo,
            row.objective.hi,
            row.block_evals
        );
    }
    out
}

fn render_summary(result: &RunResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "algorithm        : {}", result.config.algorithm.name());
    let _ = writeln!(out, "master seed      : {}", result.config.master_seed);
    let _ = writeln!(
        out,
        "paths            : {} ({} diverged, excluded from aggregates)",
        result.config.paths,
        result.failures.len()
    );
    let _ = writeln!(out, "horizon          : {}", result.config.horizon);
    let _ = writeln!(out, "measured rho     : {}", result.rho);
    let _ = writeln!(out, "optimum residual : {:.3e}", result.x_star_residual);
    let _ = writeln!(
        out,
        "block evals      : {} per path ({} full-gradient equivalents)",
        result.final_evals.0, result.final_evals.1
    );
    let _ = writeln!(out, "wall clock       : {:.3?}", result.wall_clock);
    if let Some(last) = result.aggregate.last() {
        let _ = writeln!(out, "final iteration  : {}", last.iter);
        let _ = writeln!(
            out,
            "final err1       : {} [{}, {}]",
            last.err1.mean, last.err1.lo, last.err1.hi
        );
        let _ = writeln!(
            out,
            "final err2       : {} [{}, {}]",
            last.err2.mean, last.err2.lo, last.err2.hi
        );
        let _ = writeln!(
            out,
            "final objective  : {} [{}, {}]",
            last.objective.mean, last.objective.lo, last.objective.hi
        );
    }
    let m = &result.monitors;
    if m.enabled {
        let _ = writeln!(out, "monitors:");
        let _ = writeln!(
            out,
            "  tracking residual max {:.3e}, violations {}",
            m.max_tracking_residual, m.tracking_violations
        );
        let _ = writeln!(
            out,
            "  mean-step residual max {:.3e}, violations {}",
            m.max_mean_step_residual, m.mean_step_violations
        );
        let _ = writeln!(
            out,
            "  consensus recursion: {} steps checked, {} violations",
            m.prop1b_checked_steps, m.prop1b_violation_count
        );
        if m.consensus_zero_violations > 0 {
            let _ = writeln!(
                out,
                "  perfect-mixing dispersion violations: {}",
                m.consensus_zero_violations
            );
        }
    } else {
        let _ = writeln!(out, "monitors disabled");
    }
    for failure in &result.failures {
        let _ = writeln!(
            out,
            "path {} diverged at iteration {} (agent {}): {}",
            failure.path, failure.iter, failure.agent, failure.detail
        );
    }
    out
}

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

/// Final budget-aligned numbers for one algorithm in a comparison.
pub struct ComparisonEntry {
    pub algorithm: Algorithm,
    pub block_evals: u64,
    pub objective: crate::metrics::Ci,
    pub consensus: crate::metrics::Ci,
    pub result: RunResult,
}

pub struct Comparison {
    pub budget: u64,
    pub entries: Vec<ComparisonEntry>,
}

/// Iterations an algorithm can afford inside a block-eval budget (total
/// across agents, counting initialization where the engine pays one).
pub fn horizon_for_budget(algorithm: Algorithm, budget: u64, agents: usize, blocks: usize) -> Result<usize> {
    let m = agents as u64;
    let b = blocks as u64;
    let steps = match algorithm {
        Algorithm::Drbsgt => (budget / m).checked_sub(1),
        Algorithm::Dsgt => (budget / (m * b)).checked_sub(1),
        Algorithm::Atc => Some(budget / m),
    };
    match steps {
        Some(k) if k >= 1 => Ok(k as usize),
        _ => Err(Error::InvalidArgument(format!(
            "budget {budget} leaves no steps for {} with {agents} agents and {blocks} blocks",
            algorithm.name()
        ))),
    }
}

/// Run several algorithms against the same problem at an equal block-eval
/// budget. Configs must agree on everything except `algorithm` and `paths`.
pub fn compare_algorithms(configs: &[ExperimentConfig], budget: u64) -> Result<Comparison> {
    let first = configs
        .first()
        .ok_or_else(|| Error::InvalidArgument("comparison needs at least one config".into()))?;
    for cfg in configs {
        if cfg.shared_fingerprint() != first.shared_fingerprint() {
            return Err(Error::InvalidArgument(
                "comparison configs must share the problem, graph, schedule, and seed".into(),
            ));
        }
    }

    let mut entries = Vec::new();
    for cfg in configs {
        let mut run_cfg = cfg.clone();
        run_cfg.horizon =
            horizon_for_budget(cfg.algorithm, budget, cfg.graph.agents, cfg.blocks())?;
        run_cfg.output.dir = None;
        let result = run_experiment(&run_cfg)?;
        let last = result
            .aggregate
            .last()
            .ok_or_else(|| Error::InvalidArgument("all paths diverged".into()))?;
        entries.push(ComparisonEntry {
            algorithm: cfg.algorithm,
            block_evals: last.block_evals,
            objective: last.objective,
            consensus: last.err2,
            result,
        });
    }
    Ok(Comparison { budget, entries })
}

/// Long-format CSV of every stored aggregate row of every algorithm, aligned
/// on the block-evaluation axis.
pub fn render_comparison_csv(comparison: &Comparison) -> String {
    let mut out = String::from(
        "algorithm,k,block_evals,objective_mean,objective_lo,objective_hi,err2_mean,err2_lo,err2_hi\n",
    );
    for entry in &comparison.entries {
        for row in &entry.result.aggregate {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                entry.algorithm.name(),
                row.iter,
                row.block_evals,
                row.objective.mean,
                row.objective.lo,
                row.objective.hi,
                row.err2.mean,
                row.err2.lo,
                row.err2.hi
            );
        }
    }
    out
}

pub fn render_comparison_summary(comparison: &Comparison) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "block-eval budget: {}", comparison.budget);
    for entry in &comparison.entries {
        let _ = writeln!(
            out,
            "{:8} evals {:8}  objective {} [{}, {}]  consensus {} [{}, {}]",
            entry.algorithm.name(),
            entry.block_evals,
            entry.objective.mean,
            entry.objective.lo,
            entry.objective.hi,
            entry.consensus.mean,
            entry.consensus.lo,
            entry.consensus.hi
        );
    }
    out
}
