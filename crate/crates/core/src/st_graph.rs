//! The FT×FT spatio-temporal operators: per-step feature graphs on the block
//! diagonal with identity temporal couplings on the superdiagonal, the
//! Kronecker-sum construction from a single static graph, self-loop degree
//! normalization, operator powers, and the edge density/entropy metrics.
//!
//! Node `n = t*F + f` is feature `f` at time step `t`, matching the
//! time-major vectorization of patient grids.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs;
use crate::io;
use crate::sparse::{kron, SparseMatrix};

/// How the spatio-temporal operator was assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    /// Per-time-step feature graphs.
    Stg,
    /// One static feature graph repeated via the Kronecker sum.
    Cpg,
}

impl Representation {
    pub fn as_str(self) -> &'static str {
        match self {
            Representation::Stg => "stg",
            Representation::Cpg => "cpg",
        }
    }
}

impl std::str::FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stg" => Ok(Representation::Stg),
            "cpg" => Ok(Representation::Cpg),
            other => Err(Error::Config(format!("unknown representation '{other}'"))),
        }
    }
}

/// Directed T-node path graph encoding temporal progression.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGraph {
    pub num_steps: usize,
    pub adjacency: SparseMatrix,
}

impl PathGraph {
    pub fn new(num_steps: usize) -> PathGraph {
        let triplets = (0..num_steps.saturating_sub(1)).map(|t| (t, t + 1, 1.0));
        PathGraph {
            num_steps,
            adjacency: SparseMatrix::from_triplets(num_steps, num_steps, triplets)
                .expect("path indices in range"),
        }
    }
}

/// Directed FT×FT spatio-temporal adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct STAdjacency {
    pub repr: Representation,
    pub num_features: usize,
    pub num_steps: usize,
    pub matrix: SparseMatrix,
}

#[derive(Serialize, Deserialize)]
struct STWire {
    repr: Representation,
    #[serde(rename = "F")]
    f: usize,
    #[serde(rename = "T")]
    t: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl STAdjacency {
    pub fn num_nodes(&self) -> usize {
        self.num_features * self.num_steps
    }

    pub fn node_index(&self, f: usize, t: usize) -> usize {
        t * self.num_features + f
    }

    /// Enforce the block-upper-bidiagonal sparsity pattern: nonzeros live in
    /// symmetric zero-diagonal F×F blocks on the diagonal or in temporal
    /// coupling blocks on the superdiagonal (identity by default, a
    /// transition matrix when a custom coupling was supplied).
    pub fn validate(&self) -> Result<()> {
        let f_count = self.num_features;
        for (i, j, v) in self.matrix.iter_nonzeros() {
            if v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "negative edge weight {v} at ({i},{j})"
                )));
            }
            let (ti, fi) = (i / f_count, i % f_count);
            let (tj, fj) = (j / f_count, j % f_count);
            let in_diag_block = ti == tj && fi != fj;
            let in_super_block = tj == ti + 1;
            if !(in_diag_block || in_super_block) {
                return Err(Error::InvalidInput(format!(
                    "edge ({i},{j}) outside the diagonal/superdiagonal block pattern"
                )));
            }
            if in_diag_block && (self.matrix.get(j, i) - v).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "diagonal block not symmetric at ({i},{j})"
                )));
            }
        }
        Ok(())
    }

    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.matrix.iter_nonzeros().collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, &self.to_wire())
    }

    pub fn load(path: &Path) -> Result<STAdjacency> {
        STAdjacency::from_wire(io::read_json(path)?)
    }

    fn to_wire(&self) -> STWire {
        STWire {
            repr: self.repr,
            f: self.num_features,
            t: self.num_steps,
            edges: self.edges(),
        }
    }

    fn from_wire(wire: STWire) -> Result<STAdjacency> {
        let n = wire.f * wire.t;
        let st = STAdjacency {
            repr: wire.repr,
            num_features: wire.f,
            num_steps: wire.t,
            matrix: SparseMatrix::from_triplets(n, n, wire.edges)?,
        };
        st.validate()?;
        Ok(st)
    }
}

impl Serialize for STAdjacency {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_wire().serialize(s)
    }
}

impl<'de> Deserialize<'de> for STAdjacency {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = STWire::deserialize(d)?;
        STAdjacency::from_wire(wire).map_err(serde::de::Error::custom)
    }
}

impl STAdjacency {

    /// Directed edge density of the operator.
    pub fn edge_density(&self) -> Result<f64> {
        density_of(self.num_nodes(), self.matrix.iter_nonzeros(), true)
    }

    /// Edge entropy of the operator's weighted degree distribution.
    pub fn edge_entropy(&self) -> Result<f64> {
        entropy_of(self.num_nodes(), self.matrix.iter_nonzeros())
    }

    /// Graphviz export with one cluster per time step.
    pub fn to_dot(&self, feature_names: Option<&[String]>) -> String {
        let mut out = String::from("digraph st_graph {\n  rankdir=LR;\n");
        let name = |f: usize| -> String {
            feature_names
                .and_then(|ns| ns.get(f).cloned())
                .unwrap_or_else(|| format!("f{f}"))
        };
        for t in 0..self.num_steps {
            out.push_str(&format!("  subgraph cluster_t{t} {{\n    label=\"t={t}\";\n"));
            for f in 0..self.num_features {
                out.push_str(&format!(
                    "    n{t}_{f} [label=\"{}\"];\n",
                    name(f)
                ));
            }
            out.push_str("  }\n");
        }
        for (i, j, v) in self.matrix.iter_nonzeros() {
            let (ti, fi) = (i / self.num_features, i % self.num_features);
            let (tj, fj) = (j / self.num_features, j % self.num_features);
            // render each undirected within-step edge once
            if ti == tj && fi > fj {
                continue;
            }
            let attrs = if ti == tj {
                format!(" [label=\"{v:.3}\", dir=none]")
            } else {
                String::new()
            };
            out.push_str(&format!("  n{ti}_{fi} -> n{tj}_{fj}{attrs};\n"));
        }
        out.push_str("}\n");
        out
    }
}

fn check_feature_block(a: &Array2<f64>, f_count: usize) -> Result<()> {
    if a.nrows() != f_count || a.ncols() != f_count {
        return Err(Error::Dimension(format!(
            "feature graph block is {}x{}, expected {f_count}x{f_count}",
            a.nrows(),
            a.ncols()
        )));
    }
    graphs::validate_symmetric_zero_diag(a)?;
    if let Some(((i, j), v)) = a.indexed_iter().find(|(_, &v)| v < 0.0) {
        return Err(Error::InvalidInput(format!(
            "negative weight {v} at ({i},{j}); spatio-temporal blocks must be nonnegative"
        )));
    }
    Ok(())
}

fn check_coupling(coupling: &Array2<f64>, f_count: usize) -> Result<()> {
    if coupling.dim() != (f_count, f_count) {
        return Err(Error::Dimension(format!(
            "temporal coupling is {:?}, expected {f_count}x{f_count}",
            coupling.dim()
        )));
    }
    if let Some(((i, j), v)) = coupling
        .indexed_iter()
        .find(|(_, &v)| v < 0.0 || !v.is_finite())
    {
        return Err(Error::InvalidInput(format!(
            "temporal coupling entry ({i},{j}) = {v} must be finite and nonnegative"
        )));
    }
    Ok(())
}

/// Assemble the operator from T per-step feature graphs: the graphs land on
/// the block diagonal and identity blocks couple consecutive steps.
pub fn build_stg(per_step: &[Array2<f64>]) -> Result<STAdjacency> {
    let f_count = per_step.first().map_or(0, |b| b.nrows());
    build_stg_with_coupling(per_step, &Array2::eye(f_count))
}

/// As [`build_stg`] with a custom temporal transition matrix on the
/// superdiagonal (e.g. an autoregressive model of the step-to-step
/// evolution) instead of the identity.
pub fn build_stg_with_coupling(
    per_step: &[Array2<f64>],
    coupling: &Array2<f64>,
) -> Result<STAdjacency> {
    if per_step.is_empty() {
        return Err(Error::InvalidInput("need at least one per-step graph".into()));
    }
    let f_count = per_step[0].nrows();
    for block in per_step {
        check_feature_block(block, f_count)?;
    }
    check_coupling(coupling, f_count)?;
    let t_count = per_step.len();
    let n = f_count * t_count;
    let mut triplets = Vec::new();
    for (t, block) in per_step.iter().enumerate() {
        let base = t * f_count;
        for ((i, j), &v) in block.indexed_iter() {
            if v != 0.0 {
                triplets.push((base + i, base + j, v));
            }
        }
        if t + 1 < t_count {
            for ((i, j), &v) in coupling.indexed_iter() {
                if v != 0.0 {
                    triplets.push((base + i, base + f_count + j, v));
                }
            }
        }
    }
    Ok(STAdjacency {
        repr: Representation::Stg,
        num_features: f_count,
        num_steps: t_count,
        matrix: SparseMatrix::from_triplets(n, n, triplets)?,
    })
}

/// Kronecker sum of the directed path graph and a static feature graph:
/// `A_dp (+) A = A_dp x I_F + I_T x A`.
pub fn build_cpg(a: &Array2<f64>, num_steps: usize) -> Result<STAdjacency> {
    build_cpg_with_coupling(a, num_steps, &Array2::eye(a.nrows()))
}

/// As [`build_cpg`] with a custom temporal transition matrix replacing the
/// identity factor: `A_dp x C + I_T x A`.
pub fn build_cpg_with_coupling(
    a: &Array2<f64>,
    num_steps: usize,
    coupling: &Array2<f64>,
) -> Result<STAdjacency> {
    if num_steps == 0 {
        return Err(Error::InvalidInput("need at least one time step".into()));
    }
    let f_count = a.nrows();
    check_feature_block(a, f_count)?;
    check_coupling(coupling, f_count)?;
    let path = PathGraph::new(num_steps);
    let temporal = kron(&path.adjacency, &SparseMatrix::from_dense(coupling));
    let spatial = kron(
        &SparseMatrix::identity(num_steps),
        &SparseMatrix::from_dense(a),
    );
    Ok(STAdjacency {
        repr: Representation::Cpg,
        num_features: f_count,
        num_steps,
        matrix: temporal.add(&spatial)?,
    })
}

/// Self-loop degree-normalized operator `D^(-1/2) (A + I) D^(-1/2)` with
/// `D = diag((A + I) 1)`; row sums serve as degrees for directed operators.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    pub a_hat: SparseMatrix,
    /// Self-loop degrees; every entry is >= 1.
    pub d_hat: Vec<f64>,
}

pub fn normalize_adjacency(a: &SparseMatrix) -> Result<NormalizedAdjacency> {
    if a.n_rows() != a.n_cols() {
        return Err(Error::Dimension(format!(
            "adjacency must be square, got {}x{}",
            a.n_rows(),
            a.n_cols()
        )));
    }
    if let Some((i, j, v)) = a.iter_nonzeros().find(|&(_, _, v)| v < 0.0) {
        return Err(Error::InvalidInput(format!(
            "negative weight {v} at ({i},{j}); normalization expects nonnegative input"
        )));
    }
    let with_loops = a.add(&SparseMatrix::identity(a.n_rows()))?;
    let d_hat = with_loops.row_sums();
    // dividing by sqrt(d_i * d_j) keeps simple degrees exact (e.g. 1/sqrt(4))
    let triplets: Vec<(usize, usize, f64)> = with_loops
        .iter_nonzeros()
        .map(|(i, j, v)| (i, j, v / (d_hat[i] * d_hat[j]).sqrt()))
        .collect();
    let a_hat = SparseMatrix::from_triplets(a.n_rows(), a.n_cols(), triplets)?;
    Ok(NormalizedAdjacency { a_hat, d_hat })
}

/// k-th matrix power; k = 0 yields the identity.
pub fn adjacency_power(a: &SparseMatrix, k: usize) -> Result<SparseMatrix> {
    if a.n_rows() != a.n_cols() {
        return Err(Error::Dimension("matrix powers need a square matrix".into()));
    }
    let mut out = SparseMatrix::identity(a.n_rows());
    for _ in 0..k {
        out = out.mul_sparse(a)?;
    }
    Ok(out)
}

/// Precomputed powers of the normalized operator and their transposes,
/// shared read-only by forward and backward passes.
#[derive(Debug, Clone)]
pub struct OperatorPowers {
    powers: Vec<SparseMatrix>,
    transposes: Vec<SparseMatrix>,
}

impl OperatorPowers {
    pub fn new(a_hat: &SparseMatrix, max_power: usize) -> Result<OperatorPowers> {
        let mut powers = vec![SparseMatrix::identity(a_hat.n_rows())];
        for _ in 0..max_power {
            powers.push(powers.last().unwrap().mul_sparse(a_hat)?);
        }
        let transposes = powers.iter().map(SparseMatrix::transpose).collect();
        Ok(OperatorPowers { powers, transposes })
    }

    pub fn num_nodes(&self) -> usize {
        self.powers[0].n_rows()
    }

    pub fn max_power(&self) -> usize {
        self.powers.len() - 1
    }

    pub fn power(&self, k: usize) -> &SparseMatrix {
        &self.powers[k]
    }

    pub fn power_transposed(&self, k: usize) -> &SparseMatrix {
        &self.transposes[k]
    }
}

fn density_of(
    n: usize,
    nonzeros: impl Iterator<Item = (usize, usize, f64)>,
    directed: bool,
) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidInput(
            "edge density needs at least 2 nodes".into(),
        ));
    }
    let mut count = 0usize;
    for (i, j, v) in nonzeros {
        if i == j {
            if v != 0.0 {
                return Err(Error::InvalidInput(format!(
                    "edge density expects a zero diagonal, found ({i},{i})={v}"
                )));
            }
            continue;
        }
        if directed || i < j {
            count += 1;
        }
    }
    let max_pairs = n * (n - 1);
    let density = if directed {
        count as f64 / max_pairs as f64
    } else {
        2.0 * count as f64 / max_pairs as f64
    };
    Ok(density)
}

fn entropy_of(n: usize, nonzeros: impl Iterator<Item = (usize, usize, f64)>) -> Result<f64> {
    // weighted degree counts both orientations, so directed and symmetric
    // operators share one definition; normalization cancels the doubling.
    let mut degree = vec![0.0f64; n];
    for (i, j, v) in nonzeros {
        degree[i] += v;
        degree[j] += v;
    }
    let total: f64 = degree.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidInput(
            "edge entropy is undefined for a zero-degree graph".into(),
        ));
    }
    let mut h = 0.0;
    for d in degree {
        let p = d / total;
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    Ok(h)
}

/// Edge density of a dense adjacency with zero diagonal.
pub fn edge_density(a: &Array2<f64>, directed: bool) -> Result<f64> {
    density_of(
        a.nrows(),
        a.indexed_iter()
            .filter(|(_, &v)| v != 0.0)
            .map(|((i, j), &v)| (i, j, v)),
        directed,
    )
}

/// Edge entropy `H = -sum_i d_i ln d_i` of the normalized weighted degrees.
pub fn edge_entropy(a: &Array2<f64>) -> Result<f64> {
    entropy_of(
        a.nrows(),
        a.indexed_iter()
            .filter(|(_, &v)| v != 0.0)
            .map(|((i, j), &v)| (i, j, v)),
    )
}
