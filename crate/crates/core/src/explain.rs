//! Explainability outputs: per-patient importance of every (feature, time)
//! pair from the head layer, top-5% selections aggregated into per-class
//! frequencies, and the one-hot input sensitivity sweep over all graph nodes.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data_model::{vectorize_zeropad, Dataset, DatasetSchema, PatientRecord};
use crate::error::{Error, Result};
use crate::gcnn::{forward, ModelConfig, ModelParams, Phase};
use crate::io::{self, Meta};
use crate::st_graph::OperatorPowers;

/// Size of the top selection: 5% of the FT pairs, rounded up (exact in
/// integer arithmetic, so FT = 1120 gives exactly 56).
pub fn top_selection_size(num_nodes: usize) -> usize {
    num_nodes.div_ceil(20)
}

/// Importance of every (feature, time) pair for one patient.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceRecord {
    pub patient_id: String,
    pub label: u8,
    /// |h^(L)_n * w_o_n| per node n = t*F + f.
    pub scores: Array1<f64>,
    /// Indices of the top ceil(0.05*FT) scores, ties to the lower index,
    /// ordered by decreasing score.
    pub selected: Vec<usize>,
}

/// Indices of the k largest scores; ties break toward the lower index.
fn top_k_indices(scores: &Array1<f64>, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

/// Head-layer importance for one patient: the absolute product of the final
/// graph signal and the head weights, with its top-5% selection.
pub fn importance_for_record(
    params: &ModelParams,
    config: &ModelConfig,
    ops: &OperatorPowers,
    record: &PatientRecord,
) -> Result<ImportanceRecord> {
    let x = vectorize_zeropad(record);
    let trace = forward(params, config, ops, &x, Phase::Eval)?;
    if !trace.y_hat.is_finite() {
        return Err(Error::ModelShape(
            "model produced a non-finite prediction".into(),
        ));
    }
    let scores = Array1::from_shape_fn(trace.head_input.len(), |n| {
        (trace.head_input[n] * params.head_w[n]).abs()
    });
    let selected = top_k_indices(&scores, top_selection_size(scores.len()));
    Ok(ImportanceRecord {
        patient_id: record.id.clone(),
        label: record.label,
        scores,
        selected,
    })
}

/// How often each (feature, time) pair enters the top selection, per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassFrequencyTable {
    pub num_features: usize,
    pub num_steps: usize,
    /// counts[(f, t)] for patients with label 1.
    pub positive: Array2<usize>,
    /// counts[(f, t)] for patients with label 0.
    pub negative: Array2<usize>,
}

impl ClassFrequencyTable {
    /// (f, t, count) rows in node order (t-major), one class at a time.
    pub fn time_major(&self, positive: bool) -> Vec<(usize, usize, usize)> {
        let counts = if positive { &self.positive } else { &self.negative };
        let mut rows = Vec::with_capacity(self.num_features * self.num_steps);
        for t in 0..self.num_steps {
            for f in 0..self.num_features {
                rows.push((f, t, counts[(f, t)]));
            }
        }
        rows
    }

    /// (f, t, count) rows grouped by feature, the presentation ordering.
    pub fn feature_major(&self, positive: bool) -> Vec<(usize, usize, usize)> {
        let counts = if positive { &self.positive } else { &self.negative };
        let mut rows = Vec::with_capacity(self.num_features * self.num_steps);
        for f in 0..self.num_features {
            for t in 0..self.num_steps {
                rows.push((f, t, counts[(f, t)]));
            }
        }
        rows
    }
}

/// Tally how often each (f, t) pair was selected, split by true class.
pub fn aggregate_by_class(
    records: &[ImportanceRecord],
    num_features: usize,
    num_steps: usize,
) -> Result<ClassFrequencyTable> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no importance records".into()));
    }
    let mut positive = Array2::zeros((num_features, num_steps));
    let mut negative = Array2::zeros((num_features, num_steps));
    for record in records {
        if record.scores.len() != num_features * num_steps {
            return Err(Error::Dimension(format!(
                "record '{}' scores {} nodes, table expects {}",
                record.patient_id,
                record.scores.len(),
                num_features * num_steps
            )));
        }
        let counts = if record.label == 1 {
            &mut positive
        } else {
            &mut negative
        };
        for &n in &record.selected {
            if n >= num_features * num_steps {
                return Err(Error::Dimension(format!(
                    "record '{}' selects node {n}, table has {} nodes",
                    record.patient_id,
                    num_features * num_steps
                )));
            }
            let f = n % num_features;
            let t = n / num_features;
            counts[(f, t)] += 1;
        }
    }
    Ok(ClassFrequencyTable {
        num_features,
        num_steps,
        positive,
        negative,
    })
}

/// Sign class of one head projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionPartition {
    LargeNegative,
    Positive,
    NearZero,
}

impl ProjectionPartition {
    pub fn as_str(self) -> &'static str {
        match self {
            ProjectionPartition::LargeNegative => "large-negative",
            ProjectionPartition::Positive => "positive",
            ProjectionPartition::NearZero => "near-zero",
        }
    }
}

/// Response of the trained network to one one-hot input.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaRow {
    pub node: usize,
    /// Full output signal h^(L) for this one-hot input.
    pub response: Array1<f64>,
    /// Head projection w_o . h^(L), bias excluded.
    pub projection: f64,
    pub partition: ProjectionPartition,
}

/// One-hot sensitivity sweep over all FT nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSensitivityTable {
    pub rows: Vec<DeltaRow>,
    /// Response and projection of the all-zero input; with active biases the
    /// network's output is affine, and subtracting this row linearizes it.
    pub bias_response: Array1<f64>,
    pub bias_projection: f64,
    /// Near-zero band half-width actually used.
    pub tau: f64,
    /// The band is tau_factor * max|projection|.
    pub tau_factor: f64,
}

/// Evaluate the network on every one-hot input, record the output signal and
/// its head projection, and partition the projections by sign with a
/// near-zero band of half-width `tau_factor * max|projection|`.
pub fn delta_sensitivity(
    params: &ModelParams,
    config: &ModelConfig,
    ops: &OperatorPowers,
    tau_factor: f64,
) -> Result<DeltaSensitivityTable> {
    if !(0.0..1.0).contains(&tau_factor) {
        return Err(Error::Config(format!(
            "tau_factor must lie in [0, 1), got {tau_factor}"
        )));
    }
    let n = ops.num_nodes();
    let mut responses = Vec::with_capacity(n);
    let mut projections = Vec::with_capacity(n);
    for node in 0..n {
        let mut x = Array1::zeros(n);
        x[node] = 1.0;
        let trace = forward(params, config, ops, &x, Phase::Eval)?;
        projections.push(params.head_w.dot(&trace.head_input));
        responses.push(trace.head_input);
    }
    let zero_trace = forward(params, config, ops, &Array1::zeros(n), Phase::Eval)?;
    let bias_projection = params.head_w.dot(&zero_trace.head_input);

    let max_abs = projections.iter().fold(0.0f64, |m, p| m.max(p.abs()));
    let tau = tau_factor * max_abs;
    let rows = responses
        .into_iter()
        .zip(projections)
        .enumerate()
        .map(|(node, (response, projection))| {
            // band edges count as near-zero so a zero network classifies
            // every node as near-zero even when tau collapses to 0
            let partition = if projection.abs() <= tau {
                ProjectionPartition::NearZero
            } else if projection > 0.0 {
                ProjectionPartition::Positive
            } else {
                ProjectionPartition::LargeNegative
            };
            DeltaRow {
                node,
                response,
                projection,
                partition,
            }
        })
        .collect();
    Ok(DeltaSensitivityTable {
        rows,
        bias_response: zero_trace.head_input,
        bias_projection,
        tau,
        tau_factor,
    })
}

fn feature_name(schema: &DatasetSchema, f: usize) -> &str {
    &schema.feature_names[f]
}

/// Write `importance.csv`: one row per (patient, feature, time step).
pub fn write_importance_csv(
    path: &Path,
    records: &[ImportanceRecord],
    schema: &DatasetSchema,
    meta: &Meta,
) -> Result<()> {
    let f_count = schema.num_features;
    let mut buf = Vec::new();
    buf.extend_from_slice(meta.csv_comment().as_bytes());
    buf.push(b'\n');
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["patient", "feature_name", "t", "score", "selected"])?;
        for record in records {
            let chosen: std::collections::HashSet<usize> =
                record.selected.iter().copied().collect();
            for f in 0..f_count {
                for t in 0..schema.num_steps {
                    let n = t * f_count + f;
                    w.write_record([
                        record.patient_id.as_str(),
                        feature_name(schema, f),
                        &t.to_string(),
                        &record.scores[n].to_string(),
                        if chosen.contains(&n) { "1" } else { "0" },
                    ])?;
                }
            }
        }
        w.flush()?;
    }
    io::atomic_write(path, &buf)
}

/// Write `class_frequency.csv` in feature-major order.
pub fn write_class_frequency_csv(
    path: &Path,
    table: &ClassFrequencyTable,
    schema: &DatasetSchema,
    meta: &Meta,
) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(meta.csv_comment().as_bytes());
    buf.push(b'\n');
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["feature_name", "t", "class", "count"])?;
        for (class, positive) in [("positive", true), ("negative", false)] {
            for (f, t, count) in table.feature_major(positive) {
                w.write_record([
                    feature_name(schema, f),
                    &t.to_string(),
                    class,
                    &count.to_string(),
                ])?;
            }
        }
        w.flush()?;
    }
    io::atomic_write(path, &buf)
}

/// Write `delta_sensitivity.csv` in feature-major order, with the near-zero
/// band recorded in the comment header.
pub fn write_delta_sensitivity_csv(
    path: &Path,
    table: &DeltaSensitivityTable,
    schema: &DatasetSchema,
    meta: &Meta,
) -> Result<()> {
    let f_count = schema.num_features;
    let mut buf = Vec::new();
    buf.extend_from_slice(meta.csv_comment().as_bytes());
    buf.extend_from_slice(
        format!(
            " tau={} tau_factor={} bias_projection={}\n",
            table.tau, table.tau_factor, table.bias_projection
        )
        .as_bytes(),
    );
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["feature_name", "t", "projection", "partition"])?;
        for f in 0..f_count {
            for t in 0..schema.num_steps {
                let row = &table.rows[t * f_count + f];
                w.write_record([
                    feature_name(schema, f),
                    &t.to_string(),
                    &row.projection.to_string(),
                    row.partition.as_str(),
                ])?;
            }
        }
        w.flush()?;
    }
    io::atomic_write(path, &buf)
}

/// Importance records for every patient in `dataset` (in dataset order).
pub fn importance_for_dataset(
    params: &ModelParams,
    config: &ModelConfig,
    ops: &OperatorPowers,
    dataset: &Dataset,
) -> Result<Vec<ImportanceRecord>> {
    dataset
        .patients
        .iter()
        .map(|record| importance_for_record(params, config, ops, record))
        .collect()
}
