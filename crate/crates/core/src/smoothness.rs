//! Smoothness-based graph learning: normalized sample covariance, the total
//! variation objective tr(C_norm L), and greedy single-edge removal from the
//! complete graph down to a target edge count.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graphs::{self, FeatureGraph, GraphMethod, GraphProvenance, TimeRef};

/// Correlation-normalized sample covariance with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedCovariance {
    pub c: Array2<f64>,
}

impl NormalizedCovariance {
    pub fn dim(&self) -> usize {
        self.c.nrows()
    }
}

/// Adjacency together with its degree matrix and Laplacian L = D - A.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianGraph {
    pub adjacency: Array2<f64>,
    pub degrees: Vec<f64>,
    pub laplacian: Array2<f64>,
}

impl LaplacianGraph {
    pub fn from_adjacency(adjacency: Array2<f64>) -> Result<LaplacianGraph> {
        graphs::validate_symmetric_zero_diag(&adjacency)?;
        let n = adjacency.nrows();
        let degrees: Vec<f64> = (0..n).map(|i| adjacency.row(i).sum()).collect();
        let mut laplacian = -&adjacency;
        for i in 0..n {
            laplacian[(i, i)] = degrees[i];
        }
        Ok(LaplacianGraph {
            adjacency,
            degrees,
            laplacian,
        })
    }
}

/// Mean-centered sample covariance, normalized to unit diagonal.
///
/// Zero-variance rows get zero correlations and a forced unit diagonal.
pub fn normalized_covariance(x: &Array2<f64>) -> Result<NormalizedCovariance> {
    let (f_count, k) = x.dim();
    if k < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 observation columns, got {k}"
        )));
    }
    let means: Vec<f64> = (0..f_count).map(|f| x.row(f).mean().unwrap()).collect();
    let mut cov = Array2::zeros((f_count, f_count));
    for i in 0..f_count {
        for j in i..f_count {
            let mut s = 0.0;
            for col in 0..k {
                s += (x[(i, col)] - means[i]) * (x[(j, col)] - means[j]);
            }
            let v = s / k as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let mut c = Array2::zeros((f_count, f_count));
    for i in 0..f_count {
        for j in 0..f_count {
            if i == j {
                c[(i, j)] = 1.0;
            } else {
                let denom = (cov[(i, i)] * cov[(j, j)]).sqrt();
                c[(i, j)] = if denom > 0.0 { cov[(i, j)] / denom } else { 0.0 };
            }
        }
    }
    Ok(NormalizedCovariance { c })
}

/// Total variation tr(C_norm (D - A)) of the graph signals summarized by C_norm.
pub fn smoothness_value(adjacency: &Array2<f64>, c_norm: &NormalizedCovariance) -> Result<f64> {
    if adjacency.nrows() != c_norm.dim() || adjacency.ncols() != c_norm.dim() {
        return Err(Error::Dimension(format!(
            "adjacency is {}x{}, covariance is {n}x{n}",
            adjacency.nrows(),
            adjacency.ncols(),
            n = c_norm.dim()
        )));
    }
    let graph = LaplacianGraph::from_adjacency(adjacency.clone())?;
    Ok((&c_norm.c * &graph.laplacian).sum())
}

/// Greedy pruning of the complete unit-weight graph down to `target_edges`.
///
/// Each step removes the single edge whose deletion decreases tr(C_norm L)
/// the most; for unit weights and unit diagonal that decrease is exactly
/// 2(1 - C_ij). Ties break toward the lexicographically smallest (i, j).
pub fn greedy_graph(
    c_norm: &NormalizedCovariance,
    target_edges: usize,
    time: TimeRef,
) -> Result<FeatureGraph> {
    let n = c_norm.dim();
    let max_edges = n * (n - 1) / 2;
    if target_edges > max_edges {
        return Err(Error::InvalidInput(format!(
            "target_edges {target_edges} exceeds complete-graph count {max_edges}"
        )));
    }
    let mut adjacency = Array2::from_elem((n, n), 1.0);
    for i in 0..n {
        adjacency[(i, i)] = 0.0;
    }
    let mut remaining: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();

    while remaining.len() > target_edges {
        // Decrease from removing (i, j) is 2(1 - C_ij); pick the largest,
        // i.e. the smallest C_ij, scanning in lexicographic order so exact
        // ties keep the smallest index pair.
        let mut best = 0;
        for idx in 1..remaining.len() {
            let (bi, bj) = remaining[best];
            let (i, j) = remaining[idx];
            if c_norm.c[(i, j)] < c_norm.c[(bi, bj)] {
                best = idx;
            }
        }
        let (i, j) = remaining.remove(best);
        adjacency[(i, j)] = 0.0;
        adjacency[(j, i)] = 0.0;
    }

    FeatureGraph::new(
        GraphMethod::Smoothness,
        time,
        adjacency,
        GraphProvenance {
            target_edges: Some(target_edges),
            ..Default::default()
        },
    )
}
