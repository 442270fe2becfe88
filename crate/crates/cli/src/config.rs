//! The pipeline configuration file: dataset location, graph estimation
//! settings, split protocol, and the hyperparameter grid.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use stgc_core::gcnn::{ModelConfig, Variant};
use stgc_core::graphs::GraphMethod;
use stgc_core::hgd_dtw::HgdConfig;
use stgc_core::io;
use stgc_core::st_graph::Representation;
use stgc_core::{Error, Result};

fn default_threshold() -> f64 {
    0.975
}
fn default_test_fraction() -> f64 {
    0.3
}
fn default_k_folds() -> usize {
    5
}
fn default_epochs() -> usize {
    40
}
fn default_batch() -> usize {
    32
}
fn default_alpha() -> f64 {
    0.01
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphSection {
    pub method: GraphMethod,
    pub representation: Representation,
    /// Magnitude threshold for correlation graphs.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub hgd: HgdConfig,
    /// Smoothness edge budget; when absent, the edge count of the
    /// correlation graph at the same threshold is used.
    #[serde(default)]
    pub target_edges: Option<usize>,
    /// Optional F×F temporal transition matrix replacing the identity
    /// coupling between consecutive steps (row-major).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal_coupling: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSection {
    pub test_fraction: f64,
    pub k_folds: usize,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            test_fraction: default_test_fraction(),
            k_folds: default_k_folds(),
        }
    }
}

/// Hyperparameter axes of the grid search.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub layers: Vec<usize>,
    pub hidden_width: Vec<usize>,
    pub poly_order: Vec<usize>,
    pub dropout: Vec<f64>,
    pub learning_rate: Vec<f64>,
    pub lr_decay: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::smoke()
    }
}

impl GridSpec {
    /// Small grid for quick runs and smoke tests.
    pub fn smoke() -> GridSpec {
        GridSpec {
            layers: vec![1, 2],
            hidden_width: vec![8],
            poly_order: vec![3],
            dropout: vec![0.0, 0.15],
            learning_rate: vec![0.05],
            lr_decay: vec![1e-3],
        }
    }

    /// The full default search space.
    pub fn broad() -> GridSpec {
        GridSpec {
            layers: (1..=6).collect(),
            hidden_width: vec![4, 8, 16, 32, 64],
            poly_order: vec![2, 3],
            dropout: vec![0.0, 0.15, 0.3],
            learning_rate: vec![1e-3, 1e-2, 5e-2, 0.1],
            lr_decay: vec![0.0, 1e-5, 1e-4, 1e-3, 1e-2],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSection {
    pub variant: Variant,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_alpha")]
    pub leaky_alpha: f64,
    #[serde(default)]
    pub grid: GridSpec,
}

impl ModelSection {
    /// Expand the grid into concrete configurations, all sharing `seed`.
    ///
    /// Loop order (outer to inner): dropout, learning rate, decay, width,
    /// layers, polynomial order; the one-hop variant ignores the
    /// polynomial axis.
    pub fn expand(&self, seed: u64) -> Vec<ModelConfig> {
        let poly_axis: Vec<usize> = match self.variant {
            Variant::Gcnn1 => vec![2],
            Variant::Gcnn2 => self.grid.poly_order.clone(),
        };
        let mut out = Vec::new();
        for &dropout in &self.grid.dropout {
            for &learning_rate in &self.grid.learning_rate {
                for &lr_decay in &self.grid.lr_decay {
                    for &hidden_width in &self.grid.hidden_width {
                        for &layers in &self.grid.layers {
                            for &poly_order in &poly_axis {
                                out.push(ModelConfig {
                                    variant: self.variant,
                                    layers,
                                    hidden_width,
                                    poly_order,
                                    leaky_alpha: self.leaky_alpha,
                                    dropout,
                                    learning_rate,
                                    lr_decay,
                                    epochs: self.epochs,
                                    batch_size: self.batch_size,
                                    seed,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// One JSON file drives the graph and train commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub graph: GraphSection,
    #[serde(default)]
    pub split: SplitSection,
    pub model: ModelSection,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let config: PipelineConfig = io::read_json(path)?;
        config.validate()?;
        Ok(config)
    }

    /// Method/representation compatibility: per-step estimators work for
    /// both representations (the Cartesian one uses their static variant);
    /// the DTW distance is inherently static, so it pairs only with the
    /// Cartesian representation.
    pub fn validate(&self) -> Result<()> {
        if self.graph.method == GraphMethod::HgdDtw
            && self.graph.representation == Representation::Stg
        {
            return Err(Error::Config(
                "hgd-dtw estimates one static graph; use representation \"cpg\"".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.graph.threshold) {
            return Err(Error::Config(format!(
                "threshold must lie in [0, 1), got {}",
                self.graph.threshold
            )));
        }
        self.graph.hgd.validate()?;
        if !(0.0 < self.split.test_fraction && self.split.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.split.test_fraction
            )));
        }
        if self.split.k_folds < 2 {
            return Err(Error::Config("k_folds must be >= 2".into()));
        }
        if self.model.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        let grid = &self.model.grid;
        if grid.layers.is_empty()
            || grid.hidden_width.is_empty()
            || grid.dropout.is_empty()
            || grid.learning_rate.is_empty()
            || grid.lr_decay.is_empty()
            || (self.model.variant == Variant::Gcnn2 && grid.poly_order.is_empty())
        {
            return Err(Error::Config("every grid axis needs at least one value".into()));
        }
        // every expanded config must be individually valid
        for config in self.model.expand(self.seed) {
            config.validate()?;
        }
        Ok(())
    }

    pub fn hash(&self) -> Result<String> {
        io::config_hash(self)
    }
}
