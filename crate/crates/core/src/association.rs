//! Heterogeneous pairwise association: Pearson for continuous pairs, Phi for
//! binary pairs, point-biserial for mixed pairs, kind-based dispatch over an
//! F×K matrix, and magnitude thresholding into an adjacency.
//!
//! Degenerate inputs (constant vectors, empty marginals) yield 0 rather than
//! an error: no evidence of association. Variances are population (1/K).

use ndarray::Array2;

use crate::data_model::FeatureKind;
use crate::error::{Error, Result};
use crate::graphs::{FeatureGraph, GraphMethod, GraphProvenance, TimeRef};

/// Sufficient statistics of one vector pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairStatistics {
    pub mean1: f64,
    pub mean2: f64,
    /// Population standard deviation of the first vector.
    pub std1: f64,
    /// Joint binary-state counts (n11, n10, n01, n00).
    pub contingency: [usize; 4],
    /// Marginal one/zero counts per vector: (n1(z1), n0(z1), n1(z2), n0(z2)).
    pub marginals: [usize; 4],
    pub len: usize,
}

impl PairStatistics {
    pub fn compute(z1: &[f64], z2: &[f64]) -> Result<PairStatistics> {
        if z1.len() != z2.len() {
            return Err(Error::Dimension(format!(
                "vector lengths differ: {} vs {}",
                z1.len(),
                z2.len()
            )));
        }
        let k = z1.len();
        let mean1 = z1.iter().sum::<f64>() / k as f64;
        let mean2 = z2.iter().sum::<f64>() / k as f64;
        let var1 = z1.iter().map(|v| (v - mean1).powi(2)).sum::<f64>() / k as f64;
        let mut contingency = [0usize; 4];
        let mut marginals = [0usize; 4];
        for (&a, &b) in z1.iter().zip(z2) {
            let a1 = a == 1.0;
            let b1 = b == 1.0;
            match (a1, b1) {
                (true, true) => contingency[0] += 1,
                (true, false) => contingency[1] += 1,
                (false, true) => contingency[2] += 1,
                (false, false) => contingency[3] += 1,
            }
            if a1 {
                marginals[0] += 1;
            } else {
                marginals[1] += 1;
            }
            if b1 {
                marginals[2] += 1;
            } else {
                marginals[3] += 1;
            }
        }
        Ok(PairStatistics {
            mean1,
            mean2,
            std1: var1.sqrt(),
            contingency,
            marginals,
            len: k,
        })
    }
}

fn check_binary(z: &[f64], which: &str) -> Result<()> {
    if let Some(v) = z.iter().find(|v| **v != 0.0 && **v != 1.0) {
        return Err(Error::InvalidInput(format!(
            "{which} must be binary, found {v}"
        )));
    }
    Ok(())
}

fn check_lengths(z1: &[f64], z2: &[f64]) -> Result<()> {
    if z1.len() != z2.len() {
        return Err(Error::Dimension(format!(
            "vector lengths differ: {} vs {}",
            z1.len(),
            z2.len()
        )));
    }
    if z1.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 observations, got {}",
            z1.len()
        )));
    }
    Ok(())
}

/// Pearson correlation of two real vectors; 0 when either is constant.
pub fn pearson(z1: &[f64], z2: &[f64]) -> Result<f64> {
    check_lengths(z1, z2)?;
    let k = z1.len() as f64;
    let mean1 = z1.iter().sum::<f64>() / k;
    let mean2 = z2.iter().sum::<f64>() / k;
    let mut cov = 0.0;
    let mut ss1 = 0.0;
    let mut ss2 = 0.0;
    for (&a, &b) in z1.iter().zip(z2) {
        let da = a - mean1;
        let db = b - mean2;
        cov += da * db;
        ss1 += da * da;
        ss2 += db * db;
    }
    if ss1 == 0.0 || ss2 == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (ss1 * ss2).sqrt())
}

/// Phi (Matthews) coefficient of two binary vectors; 0 on empty marginals.
pub fn phi(z1: &[f64], z2: &[f64]) -> Result<f64> {
    check_lengths(z1, z2)?;
    check_binary(z1, "first vector")?;
    check_binary(z2, "second vector")?;
    let stats = PairStatistics::compute(z1, z2)?;
    let [n11, n10, n01, n00] = stats.contingency.map(|c| c as f64);
    let [m1, m0, n1, n0] = stats.marginals.map(|c| c as f64);
    let denom = (m1 * m0 * n1 * n0).sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((n11 * n00 - n10 * n01) / denom)
}

/// Point-biserial coefficient between a real vector and a binary one.
///
/// Uses the standard n1*n0 radicand and the population standard deviation;
/// 0 when the real vector is constant or a binary marginal is empty.
pub fn point_biserial(z1: &[f64], z2: &[f64]) -> Result<f64> {
    check_lengths(z1, z2)?;
    check_binary(z2, "second vector")?;
    let stats = PairStatistics::compute(z1, z2)?;
    let n1 = stats.marginals[2] as f64;
    let n0 = stats.marginals[3] as f64;
    if stats.std1 == 0.0 || n1 == 0.0 || n0 == 0.0 {
        return Ok(0.0);
    }
    let (mut sum1, mut sum0) = (0.0, 0.0);
    for (&a, &b) in z1.iter().zip(z2) {
        if b == 1.0 {
            sum1 += a;
        } else {
            sum0 += a;
        }
    }
    let mean_on = sum1 / n1;
    let mean_off = sum0 / n0;
    let k = stats.len as f64;
    Ok((mean_on - mean_off) / stats.std1 * (n1 * n0 / (k * k)).sqrt())
}

/// Signed F×F association matrix with kind-dispatched coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationMatrix {
    /// Symmetric, zero-diagonal, entries in [-1, 1].
    pub w: Array2<f64>,
    pub time: TimeRef,
}

impl AssociationMatrix {
    pub fn num_features(&self) -> usize {
        self.w.nrows()
    }

    /// Signed export in the shared graph JSON format, method "correlation".
    pub fn to_export(&self) -> FeatureGraph {
        FeatureGraph {
            method: GraphMethod::Correlation,
            time: self.time,
            weights: self.w.clone(),
            provenance: GraphProvenance::default(),
        }
    }
}

/// Coefficient for one row pair, dispatched on the two feature kinds.
pub fn pair_coefficient(
    z1: &[f64],
    k1: FeatureKind,
    z2: &[f64],
    k2: FeatureKind,
) -> Result<f64> {
    use FeatureKind::*;
    match (k1, k2) {
        (Continuous, Continuous) => pearson(z1, z2),
        (Binary, Binary) => phi(z1, z2),
        (Continuous, Binary) => point_biserial(z1, z2),
        (Binary, Continuous) => point_biserial(z2, z1),
    }
}

/// Pairwise association over the rows of an F×K matrix.
pub fn association_matrix(
    x: &Array2<f64>,
    kinds: &[FeatureKind],
    time: TimeRef,
) -> Result<AssociationMatrix> {
    let f_count = x.nrows();
    if kinds.len() != f_count {
        return Err(Error::Dimension(format!(
            "matrix has {f_count} rows but {} kinds were given",
            kinds.len()
        )));
    }
    if x.ncols() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 observation columns, got {}",
            x.ncols()
        )));
    }
    let rows: Vec<Vec<f64>> = (0..f_count).map(|f| x.row(f).to_vec()).collect();
    let mut w = Array2::zeros((f_count, f_count));
    for i in 0..f_count {
        for j in (i + 1)..f_count {
            let r = pair_coefficient(&rows[i], kinds[i], &rows[j], kinds[j])
                .map_err(|e| e.with_pair(i, j))?;
            w[(i, j)] = r;
            w[(j, i)] = r;
        }
    }
    Ok(AssociationMatrix { w, time })
}

/// Zero out entries with |W_ij| <= eta; survivors keep their magnitude.
pub fn threshold_adjacency(w: &AssociationMatrix, eta: f64) -> FeatureGraph {
    let n = w.num_features();
    let mut adj = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j && w.w[(i, j)].abs() > eta {
                adj[(i, j)] = w.w[(i, j)].abs();
            }
        }
    }
    FeatureGraph {
        method: GraphMethod::Correlation,
        time: w.time,
        weights: adj,
        provenance: GraphProvenance {
            threshold: Some(eta),
            ..Default::default()
        },
    }
}
