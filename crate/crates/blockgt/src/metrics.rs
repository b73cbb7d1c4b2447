//! Error series, rate fitting, confidence intervals, and the per-path
//! consensus-recursion check.
//!
//! Three scalar errors summarize a swarm trajectory: `err1` is the squared
//! distance of the mean iterate from the optimum, `err2` the squared
//! Frobenius dispersion of iterates around their mean, and `err3` the same
//! dispersion for the trackers. Rates are read off as log-log slopes against
//! `k + big_gamma`, matching the `gamma / (k + big_gamma)` schedule clock.

use nalgebra::DVector;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::algorithms::{tracking_residual, SwarmState};
use crate::blocks::BlockPartition;
use crate::error::{Error, Result};
use crate::objectives::{total_value, ObjectiveOracle};

/// One stored iteration of one sample path.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRow {
    pub iter: usize,
    pub gamma: f64,
    /// `|x_mean - x_star|^2`
    pub err1: f64,
    /// `|x - 1 x_mean|_F^2`
    pub err2: f64,
    /// `|y - 1 y_mean|_F^2`
    pub err3: f64,
    /// Sum objective at the mean iterate.
    pub objective: f64,
    /// Normalized tracking-identity residual (zero for engines that do not
    /// track).
    pub tracking_residual: f64,
    pub block_evals: u64,
}

/// Stored rows of one path, strictly increasing in `iter`, all finite.
#[derive(Debug, Clone, Default)]
pub struct MetricsSeries {
    rows: Vec<SeriesRow>,
}

impl MetricsSeries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: SeriesRow) -> Result<()> {
        let finite = [
            row.gamma,
            row.err1,
            row.err2,
            row.err3,
            row.objective,
            row.tracking_residual,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument(format!(
                "non-finite metrics at iteration {}",
                row.iter
            )));
        }
        if row.err1 < 0.0 || row.err2 < 0.0 || row.err3 < 0.0 || row.tracking_residual < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "negative error metric at iteration {}",
                row.iter
            )));
        }
        if let Some(last) = self.rows.last() {
            if row.iter <= last.iter {
                return Err(Error::InvalidArgument(format!(
                    "iteration {} recorded after {}",
                    row.iter, last.iter
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[SeriesRow] {
        &self.rows
    }

    pub fn last(&self) -> Option<&SeriesRow> {
        self.rows.last()
    }
}

/// Storage stride: every iteration below 1000, then 900 log-spaced points
/// per decade.
pub fn stride_keeps(iter: usize) -> bool {
    if iter < 1000 {
        return true;
    }
    let decade = (iter as f64).log10().floor() as u32;
    let stride = 10usize.pow(decade.saturating_sub(2));
    iter % stride == 0
}

/// Measure one state against the optimum. `partition` carries the block
/// layout of the engine's caches; engines without a tracker pass `None` and
/// record a zero tracking residual.
pub fn record(
    state: &SwarmState,
    oracle: &dyn ObjectiveOracle,
    x_star: &DVector<f64>,
    gamma: f64,
    partition: Option<&BlockPartition>,
) -> SeriesRow {
    let m = state.num_agents();
    let x_mean = state.x_mean();
    let y_mean = state.y_mean();
    let err1 = (&x_mean.transpose() - x_star).norm_squared();
    let mut err2 = 0.0;
    let mut err3 = 0.0;
    for i in 0..m {
        err2 += (state.x.row(i) - &x_mean).norm_squared();
        err3 += (state.y.row(i) - &y_mean).norm_squared();
    }
    SeriesRow {
        iter: state.iter,
        gamma,
        err1,
        err2,
        err3,
        objective: total_value(oracle, &x_mean.transpose()),
        tracking_residual: partition.map_or(0.0, |p| tracking_residual(state, p)),
        block_evals: state.block_evals,
    }
}

/// Log-log slope fit `log(value) ~ slope * log(k + big_gamma) + intercept`.
#[derive(Debug, Clone)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (usize, usize),
    pub points: usize,
}

/// Least-squares rate fit over the stored points with `window.0 <= k <=
/// window.1`. Values must be strictly positive; series should be averaged
/// across paths before fitting.
pub fn fit_rate(points: &[(usize, f64)], big_gamma: f64, window: (usize, usize)) -> Result<RateFit> {
    let selected: Vec<(f64, f64)> = points
        .iter()
        .filter(|(k, _)| window.0 <= *k && *k <= window.1)
        .map(|&(k, v)| (k as f64, v))
        .collect();
    if selected.len() < 10 {
        return Err(Error::DegenerateFit(format!(
            "window [{}, {}] holds {} stored points, need at least 10",
            window.0,
            window.1,
            selected.len()
        )));
    }
    if let Some(&(k, v)) = selected.iter().find(|&&(_, v)| v <= 0.0) {
        return Err(Error::DegenerateFit(format!(
            "nonpositive value {v} at k = {k}; increase the noise level or shorten the horizon"
        )));
    }
    let xs: Vec<f64> = selected.iter().map(|&(k, _)| (k + big_gamma).ln()).collect();
    let ys: Vec<f64> = selected.iter().map(|&(_, v)| v.ln()).collect();
    let count = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / count;
    let mean_y = ys.iter().sum::<f64>() / count;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("window spans a single abscissa".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(RateFit {
        slope,
        intercept: mean_y - slope * mean_x,
        r_squared,
        window,
        points: selected.len(),
    })
}

/// Two-sided Student-t confidence interval for the mean. One sample gives
/// the degenerate point interval.
pub fn confidence_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument(
            "confidence interval needs at least one sample".into(),
        ));
    }
    if !(0.0..1.0).contains(&level) {
        return Err(Error::InvalidArgument(format!(
            "confidence level {level} outside (0, 1)"
        )));
    }
    let count = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / count;
    if samples.len() == 1 {
        return Ok((mean, mean));
    }
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (count - 1.0);
    let sd = var.sqrt();
    let dist = StudentsT::new(0.0, 1.0, count - 1.0)
        .map_err(|e| Error::InvalidArgument(format!("t distribution: {e}")))?;
    let quantile = dist.inverse_cdf(1.0 - (1.0 - level) / 2.0);
    let half = quantile * sd / count.sqrt();
    Ok((mean - half, mean + half))
}

/// Right-hand side of the per-path consensus recursion at one step.
pub fn prop1b_rhs(err2: f64, err3: f64, gamma: f64, rho: f64) -> f64 {
    let rho2 = rho * rho;
    (1.0 + rho2) / 2.0 * err2 + gamma * gamma * (1.0 + rho2) * rho2 / (1.0 - rho2) * err3
}

/// A step where the consensus recursion failed.
#[derive(Debug, Clone)]
pub struct Prop1bViolation {
    pub path: usize,
    pub iter: usize,
    pub lhs: f64,
    pub rhs: f64,
}

/// Evaluate the consensus recursion on every pair of consecutive stored
/// iterations of one path. Requires `rho` strictly inside `(0, 1)`; a
/// perfectly mixing network collapses the dispersion in one step and is
/// checked by other means.
pub fn check_prop1b(
    series: &MetricsSeries,
    path: usize,
    rho: f64,
    slack: f64,
) -> Result<Vec<Prop1bViolation>> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "consensus recursion needs rho in (0, 1), got {rho}"
        )));
    }
    let mut violations = Vec::new();
    for pair in series.rows().windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if b.iter != a.iter + 1 {
            continue;
        }
        let rhs = prop1b_rhs(a.err2, a.err3, a.gamma, rho) + slack;
        if b.err2 > rhs {
            violations.push(Prop1bViolation {
                path,
                iter: b.iter,
                lhs: b.err2,
                rhs,
            });
        }
    }
    Ok(violations)
}

/// Mean with confidence bounds.
#[derive(Debug, Clone, Copy)]
pub struct Ci {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

fn ci_of(samples: &[f64], level: f64) -> Result<Ci> {
    let (lo, hi) = confidence_interval(samples, level)?;
    Ok(Ci {
        mean: samples.iter().sum::<f64>() / samples.len() as f64,
        lo,
        hi,
    })
}

/// Across-path aggregate at one stored iteration.
#[derive(Debug, Clone)]
pub struct AggregateRow {
    pub iter: usize,
    pub gamma: f64,
    pub err1: Ci,
    pub err2: Ci,
    pub err3: Ci,
    pub objective: Ci,
    pub block_evals: u64,
}

/// Average matched rows across paths. All series must share the same stored
/// iteration grid (they do, by the deterministic stride rule).
pub fn aggregate(paths: &[&MetricsSeries], level: f64) -> Result<Vec<AggregateRow>> {
    let first = paths
        .first()
        .ok_or_else(|| Error::InvalidArgument("aggregation needs at least one path".into()))?;
    for (p, series) in paths.iter().enumerate() {
        if series.rows().len() != first.rows().len() {
            return Err(Error::InvalidArgument(format!(
                "path {p} stored {} rows, path 0 stored {}",
                series.rows().len(),
                first.rows().len()
            )));
        }
    }
    let mut out = Vec::with_capacity(first.rows().len());
    for (idx, lead) in first.rows().iter().enumerate() {
        let column = |f: fn(&SeriesRow) -> f64| -> Result<Vec<f64>> {
            paths
                .iter()
                .map(|s| {
                    let row = &s.rows()[idx];
                    if row.iter != lead.iter {
                        return Err(Error::InvalidArgument(format!(
                            "storage grids diverge at iteration {}",
                            lead.iter
                        )));
                    }
                    Ok(f(row))
                })
                .collect()
        };
        out.push(AggregateRow {
            iter: lead.iter,
            gamma: lead.gamma,
            err1: ci_of(&column(|r| r.err1)?, level)?,
            err2: ci_of(&column(|r| r.err2)?, level)?,
            err3: ci_of(&column(|r| r.err3)?, level)?,
            objective: ci_of(&column(|r| r.objective)?, level)?,
            block_evals: lead.block_evals,
        });
    }
    Ok(out)
}
