//! Graph-based classification toolkit for irregular, heterogeneous
//! multivariate time series.
//!
//! The pipeline: load (or synthesize) a cohort of per-patient F×T grids with
//! missing cells, estimate feature-to-feature graphs by association
//! coefficients, smoothness pruning, or range-normalized distances (with DTW
//! for the static case), assemble an FT×FT spatio-temporal operator, train a
//! graph convolutional classifier with manual gradients under a
//! cross-validated protocol, and export importance rankings plus one-hot
//! sensitivity tables for every (feature, time) pair.

pub mod association;
pub mod data_model;
mod error;
pub mod explain;
pub mod gcnn;
pub mod graphs;
pub mod hgd_dtw;
pub mod io;
pub mod metrics;
pub mod smoothness;
pub mod sparse;
pub mod st_graph;
pub mod synthgen;

pub use error::{Error, Result};

pub use data_model::{
    Dataset, DatasetSchema, FeatureKind, MaskedSlice, PatientRecord, SplitPlan,
};
pub use gcnn::{Checkpoint, ModelConfig, ModelParams, Variant};
pub use graphs::{FeatureGraph, GraphMethod, TimeRef};
pub use hgd_dtw::HgdConfig;
pub use metrics::EvalReport;
pub use st_graph::{Representation, STAdjacency};
pub use synthgen::SynthSpec;
