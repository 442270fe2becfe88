//! Distance-based graph learning for mixed binary/continuous features:
//! range-normalized mean absolute difference with pairwise rescaling rules,
//! the exponential weight transform, and dynamic time warping that uses that
//! distance as its step cost for static graph estimation.

use ndarray::Array2;
use rayon::prelude::*;

use crate::data_model::{feature_slice_imputed, Dataset, FeatureKind, ImputeStats, MaskedSlice};
use crate::error::{Error, Result};
use crate::graphs::{FeatureGraph, GraphMethod, GraphProvenance, TimeRef};

/// Temperature and edge threshold for distance-based graphs.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct HgdConfig {
    /// Temperature of the exponential weight transform; larger values make
    /// the graph more sensitive to distance.
    pub beta: f64,
    /// Edges with weight <= threshold are dropped.
    pub threshold: f64,
}

impl Default for HgdConfig {
    fn default() -> Self {
        HgdConfig {
            beta: 1.0,
            threshold: 0.975,
        }
    }
}

impl HgdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta.is_nan() || self.beta <= 0.0 {
            return Err(Error::Config(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "threshold must lie in [0, 1], got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

fn rescale_in_place(z1: &mut [f64], z2: &mut [f64], kinds: (FeatureKind, FeatureKind)) {
    use FeatureKind::*;
    let max_of = |z: &[f64]| z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_of = |z: &[f64]| z.iter().cloned().fold(f64::INFINITY, f64::min);
    match kinds {
        (Binary, Binary) => {}
        (Continuous, Continuous) => {
            let (m1, m2) = (max_of(z1), max_of(z2));
            // The max-ratio rule needs strictly positive maxima; shift both
            // vectors up to that regime and shift back afterwards.
            let shift = if m1.min(m2) <= 0.0 {
                1.0 - m1.min(m2)
            } else {
                0.0
            };
            let (m1, m2) = (m1 + shift, m2 + shift);
            let joint = m1.max(m2);
            for v in z1.iter_mut() {
                *v = (*v + shift) * (joint / m1) - shift;
            }
            for v in z2.iter_mut() {
                *v = (*v + shift) * (joint / m2) - shift;
            }
        }
        (Binary, Continuous) => map_binary_onto(z1, z2, min_of(z2), max_of(z2)),
        (Continuous, Binary) => map_binary_onto(z2, z1, min_of(z1), max_of(z1)),
    }
}

fn map_binary_onto(binary: &mut [f64], _cont: &[f64], lo: f64, hi: f64) {
    for v in binary.iter_mut() {
        *v = if *v == 1.0 { hi } else { lo };
    }
}

/// Bring a heterogeneous vector pair onto a common range before distancing.
///
/// Continuous pairs are scaled so both maxima agree; a binary vector paired
/// with a continuous one maps its ones/zeros onto the continuous max/min;
/// binary pairs are left untouched.
pub fn rescale_pair(
    z1: &[f64],
    z2: &[f64],
    kinds: (FeatureKind, FeatureKind),
) -> Result<(Vec<f64>, Vec<f64>)> {
    if z1.len() != z2.len() {
        return Err(Error::Dimension(format!(
            "vector lengths differ: {} vs {}",
            z1.len(),
            z2.len()
        )));
    }
    if z1.is_empty() {
        return Err(Error::InvalidInput("empty vectors".into()));
    }
    let mut a = z1.to_vec();
    let mut b = z2.to_vec();
    rescale_in_place(&mut a, &mut b, kinds);
    Ok((a, b))
}

/// Range-normalized mean absolute difference.
///
/// Coordinates with a nonpositive range contribute 0: a zero dynamic range
/// means the coordinate carries no discriminative information.
pub fn hgd(z1: &[f64], z2: &[f64], ranges: &[f64]) -> Result<f64> {
    if z1.len() != z2.len() || z1.len() != ranges.len() {
        return Err(Error::Dimension(format!(
            "lengths differ: z1={}, z2={}, ranges={}",
            z1.len(),
            z2.len(),
            ranges.len()
        )));
    }
    if z1.is_empty() {
        return Err(Error::InvalidInput("empty vectors".into()));
    }
    let mut total = 0.0;
    for ((&a, &b), &r) in z1.iter().zip(z2).zip(ranges) {
        if r > 0.0 {
            total += (a - b).abs() / r;
        }
    }
    Ok(total / z1.len() as f64)
}

/// Exponential edge weight e^(-beta * delta^2), mapping [0, inf) onto (0, 1].
pub fn exp_weight(delta: f64, beta: f64) -> f64 {
    (-beta * delta * delta).exp()
}

/// Per-coordinate dynamic range over the two vectors of a pair.
pub fn pair_ranges(z1: &[f64], z2: &[f64]) -> Vec<f64> {
    z1.iter().zip(z2).map(|(&a, &b)| (a - b).abs()).collect()
}

fn graph_from_columns(
    x: &Array2<f64>,
    kinds: &[FeatureKind],
    config: &HgdConfig,
    time: TimeRef,
) -> Result<FeatureGraph> {
    config.validate()?;
    let f_count = x.nrows();
    if kinds.len() != f_count {
        return Err(Error::Dimension(format!(
            "matrix has {f_count} rows but {} kinds were given",
            kinds.len()
        )));
    }
    let rows: Vec<Vec<f64>> = (0..f_count).map(|f| x.row(f).to_vec()).collect();
    let mut weights = Array2::zeros((f_count, f_count));
    for i in 0..f_count {
        for j in (i + 1)..f_count {
            let (a, b) = rescale_pair(&rows[i], &rows[j], (kinds[i], kinds[j]))
                .map_err(|e| e.with_pair(i, j))?;
            let ranges = pair_ranges(&a, &b);
            let delta = hgd(&a, &b, &ranges).map_err(|e| e.with_pair(i, j))?;
            let w = exp_weight(delta, config.beta);
            if w > config.threshold {
                weights[(i, j)] = w;
                weights[(j, i)] = w;
            }
        }
    }
    FeatureGraph::new(
        GraphMethod::Hgd,
        time,
        weights,
        GraphProvenance {
            beta: Some(config.beta),
            threshold: Some(config.threshold),
            target_edges: None,
        },
    )
}

/// Distance-based feature graph for one masked time slice.
pub fn hgd_graph_at_t(
    slice: &MaskedSlice,
    kinds: &[FeatureKind],
    config: &HgdConfig,
) -> Result<FeatureGraph> {
    graph_from_columns(
        &slice.values,
        kinds,
        config,
        TimeRef::Step(slice.time_index),
    )
}

/// Static distance-based feature graph over a flattened F×K matrix.
pub fn hgd_graph_static(
    x: &Array2<f64>,
    kinds: &[FeatureKind],
    config: &HgdConfig,
) -> Result<FeatureGraph> {
    graph_from_columns(x, kinds, config, TimeRef::Static)
}

/// Cumulative DTW cost matrix with infinity sentinels in row/column 0.
#[derive(Debug, Clone)]
pub struct CumulativeDtwMatrix {
    pub m: Array2<f64>,
}

impl CumulativeDtwMatrix {
    pub fn distance(&self) -> f64 {
        let (r, c) = self.m.dim();
        self.m[(r - 1, c - 1)]
    }
}

/// Rescale two P×T feature slices as one flat pair; range per patient spans
/// both rescaled slices, fixed across all DTW steps.
fn rescale_slices(
    xi: &Array2<f64>,
    xj: &Array2<f64>,
    kinds: (FeatureKind, FeatureKind),
) -> (Array2<f64>, Array2<f64>, Vec<f64>) {
    let mut a = xi.clone();
    let mut b = xj.clone();
    rescale_in_place(
        a.as_slice_mut().unwrap(),
        b.as_slice_mut().unwrap(),
        kinds,
    );
    let p_count = a.nrows();
    let ranges = (0..p_count)
        .map(|p| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for v in a.row(p).iter().chain(b.row(p).iter()) {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
            hi - lo
        })
        .collect();
    (a, b, ranges)
}

/// Fill the (T+1)x(T+1) cumulative matrix column by column.
pub fn dtw_cumulative(
    xi: &Array2<f64>,
    xj: &Array2<f64>,
    kinds: (FeatureKind, FeatureKind),
) -> Result<CumulativeDtwMatrix> {
    if xi.dim() != xj.dim() {
        return Err(Error::Dimension(format!(
            "series dims differ: {:?} vs {:?}",
            xi.dim(),
            xj.dim()
        )));
    }
    let (p_count, t_count) = xi.dim();
    if p_count == 0 || t_count == 0 {
        return Err(Error::InvalidInput("empty series".into()));
    }
    let (a, b, ranges) = rescale_slices(xi, xj, kinds);
    let mut m = Array2::from_elem((t_count + 1, t_count + 1), f64::INFINITY);
    m[(0, 0)] = 0.0;
    for tj in 1..=t_count {
        for ti in 1..=t_count {
            let col_i: Vec<f64> = a.column(ti - 1).to_vec();
            let col_j: Vec<f64> = b.column(tj - 1).to_vec();
            let cost = hgd(&col_i, &col_j, &ranges)?;
            let prev = m[(ti - 1, tj - 1)].min(m[(ti - 1, tj)]).min(m[(ti, tj - 1)]);
            m[(ti, tj)] = cost + prev;
        }
    }
    Ok(CumulativeDtwMatrix { m })
}

/// DTW distance between two P×T feature slices with the range-normalized
/// step cost; the bottom-right cumulative entry.
pub fn dtw_hgd(
    xi: &Array2<f64>,
    xj: &Array2<f64>,
    kinds: (FeatureKind, FeatureKind),
) -> Result<f64> {
    Ok(dtw_cumulative(xi, xj, kinds)?.distance())
}

/// Static feature graph from pairwise DTW distances over imputed slices.
pub fn dtw_graph_static(dataset: &Dataset, config: &HgdConfig) -> Result<FeatureGraph> {
    config.validate()?;
    let stats = ImputeStats::from_dataset(dataset);
    let f_count = dataset.schema.num_features;
    let slices: Vec<Array2<f64>> = (0..f_count)
        .map(|f| feature_slice_imputed(dataset, f, &stats))
        .collect::<Result<_>>()?;

    let pairs: Vec<(usize, usize)> = (0..f_count)
        .flat_map(|i| ((i + 1)..f_count).map(move |j| (i, j)))
        .collect();
    let kinds = &dataset.schema.feature_kinds;
    let distances: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            dtw_hgd(&slices[i], &slices[j], (kinds[i], kinds[j])).map_err(|e| e.with_pair(i, j))
        })
        .collect();

    let mut weights = Array2::zeros((f_count, f_count));
    for (&(i, j), delta) in pairs.iter().zip(distances) {
        let w = exp_weight(delta?, config.beta);
        if w > config.threshold {
            weights[(i, j)] = w;
            weights[(j, i)] = w;
        }
    }
    FeatureGraph::new(
        GraphMethod::HgdDtw,
        TimeRef::Static,
        weights,
        GraphProvenance {
            beta: Some(config.beta),
            threshold: Some(config.threshold),
            target_edges: None,
        },
    )
}
