//! Feature-to-feature graphs shared by all estimators: the weighted F×F
//! adjacency, its estimation provenance, and the JSON file format
//! `{"method": ..., "t": int|"static", "F": int, "W": [[...]]}`.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

/// Which estimator produced a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphMethod {
    Correlation,
    Smoothness,
    Hgd,
    #[serde(rename = "hgd-dtw")]
    HgdDtw,
}

impl GraphMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            GraphMethod::Correlation => "correlation",
            GraphMethod::Smoothness => "smoothness",
            GraphMethod::Hgd => "hgd",
            GraphMethod::HgdDtw => "hgd-dtw",
        }
    }
}

impl std::str::FromStr for GraphMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "correlation" => Ok(GraphMethod::Correlation),
            "smoothness" => Ok(GraphMethod::Smoothness),
            "hgd" => Ok(GraphMethod::Hgd),
            "hgd-dtw" => Ok(GraphMethod::HgdDtw),
            other => Err(Error::Config(format!("unknown graph method '{other}'"))),
        }
    }
}

/// A graph is estimated either per time step or once for the whole horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeRef {
    Static,
    Step(usize),
}

impl Serialize for TimeRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TimeRef::Static => s.serialize_str("static"),
            TimeRef::Step(t) => s.serialize_u64(*t as u64),
        }
    }
}

impl<'de> Deserialize<'de> for TimeRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Wire {
            Step(usize),
            Tag(String),
        }
        match Wire::deserialize(d)? {
            Wire::Step(t) => Ok(TimeRef::Step(t)),
            Wire::Tag(s) if s == "static" => Ok(TimeRef::Static),
            Wire::Tag(s) => Err(serde::de::Error::custom(format!(
                "time reference must be an integer or \"static\", got '{s}'"
            ))),
        }
    }
}

/// Estimator settings recorded alongside an exported graph.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphProvenance {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_edges: Option<usize>,
}

impl GraphProvenance {
    fn is_empty(&self) -> bool {
        self.beta.is_none() && self.threshold.is_none() && self.target_edges.is_none()
    }
}

/// A weighted F×F feature graph (symmetric, zero diagonal) with provenance.
///
/// Thresholded adjacencies carry nonnegative weights; the correlation export
/// keeps signed entries so downstream consumers can see association signs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGraph {
    pub method: GraphMethod,
    pub time: TimeRef,
    pub weights: Array2<f64>,
    pub provenance: GraphProvenance,
}

#[derive(Serialize, Deserialize)]
struct GraphWire {
    method: GraphMethod,
    t: TimeRef,
    #[serde(rename = "F")]
    f: usize,
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "GraphProvenance::is_empty")]
    config: GraphProvenance,
}

impl FeatureGraph {
    pub fn new(
        method: GraphMethod,
        time: TimeRef,
        weights: Array2<f64>,
        provenance: GraphProvenance,
    ) -> Result<Self> {
        validate_symmetric_zero_diag(&weights)?;
        Ok(FeatureGraph {
            method,
            time,
            weights,
            provenance,
        })
    }

    pub fn num_features(&self) -> usize {
        self.weights.nrows()
    }

    /// Unordered nonzero edges (i < j) with their weights.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.num_features();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let w = self.weights[(i, j)];
                if w != 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn num_edges(&self) -> usize {
        self.edges().len()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, &self.to_wire())
    }

    pub fn load(path: &Path) -> Result<FeatureGraph> {
        let wire: GraphWire = io::read_json(path)?;
        FeatureGraph::from_wire(wire)
    }

    fn to_wire(&self) -> GraphWire {
        GraphWire {
            method: self.method,
            t: self.time,
            f: self.num_features(),
            w: self
                .weights
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
            config: self.provenance.clone(),
        }
    }

    fn from_wire(wire: GraphWire) -> Result<FeatureGraph> {
        if wire.w.len() != wire.f || wire.w.iter().any(|row| row.len() != wire.f) {
            return Err(Error::Dimension(format!(
                "graph file declares F={} but W is not {0}x{0}",
                wire.f
            )));
        }
        let flat: Vec<f64> = wire.w.into_iter().flatten().collect();
        let weights = Array2::from_shape_vec((wire.f, wire.f), flat)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        FeatureGraph::new(wire.method, wire.t, weights, wire.config)
    }
}

impl Serialize for FeatureGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_wire().serialize(s)
    }
}

impl<'de> Deserialize<'de> for FeatureGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = GraphWire::deserialize(d)?;
        FeatureGraph::from_wire(wire).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn validate_symmetric_zero_diag(w: &Array2<f64>) -> Result<()> {
    if w.nrows() != w.ncols() {
        return Err(Error::Dimension(format!(
            "adjacency must be square, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    for i in 0..w.nrows() {
        if w[(i, i)] != 0.0 {
            return Err(Error::InvalidInput(format!(
                "adjacency diagonal must be zero, entry ({i},{i}) = {}",
                w[(i, i)]
            )));
        }
        for j in (i + 1)..w.ncols() {
            if (w[(i, j)] - w[(j, i)]).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "adjacency must be symmetric, mismatch at ({i},{j})"
                )));
            }
        }
    }
    Ok(())
}
