//! Dataset generation, CSV ingestion, and agent sharding.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{derive_stream, StreamPurpose};

/// Labeled binary-classification data with an optional agent assignment.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: DVector<f64>,
    agent_assignment: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, labels: DVector<f64>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Data(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        for (j, &v) in labels.iter().enumerate() {
            if v != 1.0 && v != -1.0 {
                return Err(Error::Data(format!("label {v} at row {j} is not in {{-1, +1}}")));
            }
        }
        Ok(Self {
            features,
            labels,
            agent_assignment: None,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn assignment(&self) -> Option<&[usize]> {
        self.agent_assignment.as_deref()
    }

    /// Per-agent sample index lists, from the assignment.
    pub fn shards(&self, num_agents: usize) -> Result<Vec<Vec<usize>>> {
        let assignment = self.agent_assignment.as_ref().ok_or_else(|| {
            Error::Data("dataset has no agent assignment; call partition_dataset first".into())
        })?;
        let mut shards = vec![Vec::new(); num_agents];
        for (sample, &agent) in assignment.iter().enumerate() {
            if agent >= num_agents {
                return Err(Error::Data(format!(
                    "sample {sample} assigned to agent {agent}, only {num_agents} agents"
                )));
            }
            shards[agent].push(sample);
        }
        Ok(shards)
    }
}

/// Draw `samples x dim` Gaussian features and plant labels from a random
/// hyperplane through the feature mean, flipping a configured fraction of
/// signs. Deterministic given the seed.
pub fn generate_synthetic_dataset(
    samples: usize,
    dim: usize,
    feature_mean: f64,
    feature_std: f64,
    flip_rate: f64,
    seed: u64,
) -> Result<Dataset> {
    if samples == 0 || dim == 0 {
        return Err(Error::InvalidArgument(
            "synthetic dataset needs samples >= 1 and dim >= 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&flip_rate) {
        return Err(Error::InvalidArgument(format!(
            "flip rate {flip_rate} outside [0, 1]"
        )));
    }
    let mut rng = derive_stream(seed, 0, 0, StreamPurpose::Build);
    let plane = DVector::<f64>::from_fn(dim, |_, _| rng.sample(StandardNormal));
    let mut features = DMatrix::<f64>::zeros(samples, dim);
    let mut labels = DVector::<f64>::zeros(samples);
    for j in 0..samples {
        let mut margin = 0.0;
        for k in 0..dim {
            let u = feature_mean + feature_std * rng.sample::<f64, _>(StandardNormal);
            features[(j, k)] = u;
            margin += (u - feature_mean) * plane[k];
        }
        labels[j] = if margin >= 0.0 { 1.0 } else { -1.0 };
    }
    for j in 0..samples {
        if rng.gen_bool(flip_rate) {
            labels[j] = -labels[j];
        }
    }
    Dataset::new(features, labels)
}

/// How samples map to agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionRule {
    /// Near-equal contiguous shards; the first `s mod m` shards take the
    /// extra sample.
    Contiguous,
    /// Sample `j` goes to agent `j mod m`.
    RoundRobin,
}

/// Assign every sample to exactly one agent.
pub fn partition_dataset(mut data: Dataset, num_agents: usize, rule: PartitionRule) -> Result<Dataset> {
    let s = data.num_samples();
    if num_agents == 0 || num_agents > s {
        return Err(Error::InvalidArgument(format!(
            "cannot shard {s} samples over {num_agents} agents"
        )));
    }
    let assignment = match rule {
        PartitionRule::Contiguous => {
            let base = s / num_agents;
            let rem = s % num_agents;
            let mut out = Vec::with_capacity(s);
            for agent in 0..num_agents {
                let size = base + usize::from(agent < rem);
                out.extend(std::iter::repeat(agent).take(size));
            }
            out
        }
        PartitionRule::RoundRobin => (0..s).map(|j| j % num_agents).collect(),
    };
    data.agent_assignment = Some(assignment);
    Ok(data)
}

/// How raw CSV labels map to `{-1, +1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelRule {
    /// Even integers to `-1`, odd to `+1` (digit parity).
    Parity,
    /// The named class to `+1`, everything else to `-1`.
    OneVsRest(i64),
    /// Labels are already `-1` or `+1`.
    Signed,
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub label_rule: LabelRule,
    /// Divide every feature by this value (e.g. 255 to scale pixel data to
    /// `[0, 1]`).
    pub feature_scale: Option<f64>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            label_rule: LabelRule::Parity,
            feature_scale: None,
        }
    }
}

fn map_label(raw: f64, rule: LabelRule, path: &str, line: usize) -> Result<f64> {
    let as_int = raw.round() as i64;
    let integral = (raw - as_int as f64).abs() < 1e-9;
    match rule {
        LabelRule::Parity => {
            if !integral {
                return Err(Error::Data(format!(
                    "{path}:{line}: label {raw} is not an integer; parity rule needs digits"
                )));
            }
            Ok(if as_int.rem_euclid(2) == 0 { -1.0 } else { 1.0 })
        }
        LabelRule::OneVsRest(class) => {
            if !integral {
                return Err(Error::Data(format!(
                    "{path}:{line}: label {raw} is not an integer; one-vs-rest needs classes"
                )));
            }
            Ok(if as_int == class { 1.0 } else { -1.0 })
        }
        LabelRule::Signed => {
            if raw == 1.0 || raw == -1.0 {
                Ok(raw)
            } else {
                Err(Error::Data(format!(
                    "{path}:{line}: label {raw} outside {{-1, +1}}"
                )))
            }
        }
    }
}

/// Load header-free CSV rows `label,feat_1,...,feat_n`. Files ending in
/// `.gz` are gunzipped on the fly.
pub fn load_dataset(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(flate2::read::GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    let name = path.display().to_string();

    let mut labels = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let mut fields = trimmed.split(',');
        let label_tok = fields.next().unwrap_or_default();
        let raw_label: f64 = label_tok.trim().parse().map_err(|_| Error::Parse {
            path: name.clone(),
            line: lineno,
            msg: format!("bad label token {label_tok:?}"),
        })?;
        labels.push(map_label(raw_label, opts.label_rule, &name, lineno)?);
        let mut row = Vec::new();
        for tok in fields {
            let v: f64 = tok.trim().parse().map_err(|_| Error::Parse {
                path: name.clone(),
                line: lineno,
                msg: format!("bad feature token {tok:?}"),
            })?;
            row.push(match opts.feature_scale {
                Some(scale) => v / scale,
                None => v,
            });
        }
        if row.is_empty() {
            return Err(Error::Parse {
                path: name,
                line: lineno,
                msg: "row has a label but no features".into(),
            });
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    path: name,
                    line: lineno,
                    msg: format!("row has {} features, expected {w}", row.len()),
                });
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{name}: no data rows")));
    }
    let n = width.unwrap();
    let features = DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c]);
    Dataset::new(features, DVector::from_vec(labels))
}
