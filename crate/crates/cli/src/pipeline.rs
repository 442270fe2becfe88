//! The five pipeline commands behind the CLI: synth, graph, train, eval,
//! explain. Every artifact is written atomically and stamped with the
//! toolkit version and the driving config's hash, so identical config+seed
//! reruns reproduce every file byte for byte.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use stgc_core::association::{association_matrix, threshold_adjacency};
use stgc_core::data_model::{
    flatten_all, load_dataset, make_split, mask_time_slice, save_dataset, Dataset, SplitPlan,
};
use stgc_core::explain::{
    aggregate_by_class, delta_sensitivity, importance_for_dataset, write_class_frequency_csv,
    write_delta_sensitivity_csv, write_importance_csv,
};
use stgc_core::gcnn::{self, Checkpoint, GridSearchReport, ModelConfig};
use stgc_core::graphs::{FeatureGraph, GraphMethod, TimeRef};
use stgc_core::hgd_dtw::{dtw_graph_static, hgd_graph_at_t, hgd_graph_static};
use stgc_core::io::{self, Meta};
use stgc_core::metrics::{confusion_at_half, summarize_reports, EvalReport};
use stgc_core::smoothness::{greedy_graph, normalized_covariance};
use stgc_core::st_graph::{
    build_cpg, build_cpg_with_coupling, build_stg, build_stg_with_coupling, edge_density,
    edge_entropy, Representation, STAdjacency,
};
use stgc_core::synthgen::{generate, SynthSpec};
use stgc_core::{Error, Result};

use crate::config::PipelineConfig;

/// Meta-stamped wrapper around any serializable file body.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub meta: Meta,
    #[serde(flatten)]
    pub body: T,
}

fn read_json_at<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<T> {
    io::read_json(path).map_err(|e| {
        Error::InvalidInput(format!("cannot read {what} '{}': {e}", path.display()))
    })
}

/// `synth`: generate a synthetic cohort and store the spec beside it.
pub fn run_synth(spec_path: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut spec = match spec_path {
        Some(p) => SynthSpec::load(p).map_err(|e| match e {
            Error::Io(err) => {
                Error::Config(format!("cannot read spec '{}': {err}", p.display()))
            }
            Error::Json(err) => {
                Error::Config(format!("invalid spec '{}': {err}", p.display()))
            }
            other => other,
        })?,
        None => SynthSpec::default(),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let dataset = generate(&spec)?;
    save_dataset(out, &dataset)?;
    let spec_out = sidecar_spec_path(out);
    spec.save(&spec_out)?;
    println!(
        "wrote {} ({} patients, F={}, T={}) and {}",
        out.display(),
        dataset.num_patients(),
        dataset.schema.num_features,
        dataset.schema.num_steps,
        spec_out.display()
    );
    Ok(())
}

fn sidecar_spec_path(dataset_out: &Path) -> PathBuf {
    let stem = dataset_out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    dataset_out.with_file_name(format!("{stem}.spec.json"))
}

/// Per-graph complexity metrics echoed by the graph command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockMetrics {
    pub t: TimeRef,
    pub edges: usize,
    pub density: f64,
    pub entropy: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphMetricsReport {
    pub method: GraphMethod,
    pub representation: Representation,
    pub threshold: f64,
    pub blocks: Vec<BlockMetrics>,
    pub st_density: f64,
    pub st_entropy: Option<f64>,
}

fn block_metrics(graph: &FeatureGraph) -> Result<BlockMetrics> {
    let density = if graph.num_features() >= 2 {
        edge_density(&graph.weights, false)?
    } else {
        0.0
    };
    let entropy = edge_entropy(&graph.weights).ok();
    Ok(BlockMetrics {
        t: graph.time,
        edges: graph.num_edges(),
        density,
        entropy,
    })
}

fn method_context(method: GraphMethod, err: Error) -> Error {
    Error::InvalidInput(format!("{} estimation failed: {err}", method.as_str()))
}

/// Estimate the feature graphs for one dataset (the training subset).
pub fn estimate_graphs(
    dataset: &Dataset,
    config: &PipelineConfig,
) -> Result<(Vec<FeatureGraph>, STAdjacency)> {
    let kinds = &dataset.schema.feature_kinds;
    let method = config.graph.method;
    let t_count = dataset.schema.num_steps;

    let graphs: Vec<FeatureGraph> = match (method, config.graph.representation) {
        (GraphMethod::HgdDtw, Representation::Stg) => {
            return Err(Error::Config(
                "hgd-dtw estimates one static graph; use representation \"cpg\"".into(),
            ));
        }
        (_, Representation::Stg) => {
            let mut per_step = Vec::with_capacity(t_count);
            for t in 0..t_count {
                let slice = mask_time_slice(dataset, t).map_err(|e| method_context(method, e))?;
                let graph = match method {
                    GraphMethod::Correlation => {
                        let assoc = association_matrix(&slice.values, kinds, TimeRef::Step(t))
                            .map_err(|e| method_context(method, e))?;
                        threshold_adjacency(&assoc, config.graph.threshold)
                    }
                    GraphMethod::Smoothness => {
                        let target = smoothness_target(config, &slice.values, kinds, t)?;
                        let c = normalized_covariance(&slice.values)
                            .map_err(|e| method_context(method, e))?;
                        greedy_graph(&c, target, TimeRef::Step(t))
                            .map_err(|e| method_context(method, e))?
                    }
                    GraphMethod::Hgd => hgd_graph_at_t(&slice, kinds, &config.graph.hgd)
                        .map_err(|e| method_context(method, e))?,
                    GraphMethod::HgdDtw => unreachable!("rejected above"),
                };
                per_step.push(graph);
            }
            per_step
        }
        (_, Representation::Cpg) => {
            let graph = match method {
                GraphMethod::Correlation => {
                    let flat = flatten_all(dataset).map_err(|e| method_context(method, e))?;
                    let assoc = association_matrix(&flat.values, kinds, TimeRef::Static)
                        .map_err(|e| method_context(method, e))?;
                    threshold_adjacency(&assoc, config.graph.threshold)
                }
                GraphMethod::Smoothness => {
                    let flat = flatten_all(dataset).map_err(|e| method_context(method, e))?;
                    let target = smoothness_target(config, &flat.values, kinds, 0)?;
                    let c = normalized_covariance(&flat.values)
                        .map_err(|e| method_context(method, e))?;
                    greedy_graph(&c, target, TimeRef::Static)
                        .map_err(|e| method_context(method, e))?
                }
                GraphMethod::Hgd => {
                    let flat = flatten_all(dataset).map_err(|e| method_context(method, e))?;
                    hgd_graph_static(&flat.values, kinds, &config.graph.hgd)
                        .map_err(|e| method_context(method, e))?
                }
                GraphMethod::HgdDtw => dtw_graph_static(dataset, &config.graph.hgd)
                    .map_err(|e| method_context(method, e))?,
            };
            vec![graph]
        }
    };

    let coupling = config
        .graph
        .temporal_coupling
        .as_ref()
        .map(|rows| {
            let f_count = dataset.schema.num_features;
            if rows.len() != f_count || rows.iter().any(|r| r.len() != f_count) {
                return Err(Error::Config(format!(
                    "temporal_coupling must be {f_count}x{f_count}"
                )));
            }
            Ok(Array2::from_shape_fn((f_count, f_count), |(i, j)| rows[i][j]))
        })
        .transpose()?;
    let st = match (config.graph.representation, &coupling) {
        (Representation::Stg, None) => {
            let blocks: Vec<Array2<f64>> = graphs.iter().map(|g| g.weights.clone()).collect();
            build_stg(&blocks)?
        }
        (Representation::Stg, Some(c)) => {
            let blocks: Vec<Array2<f64>> = graphs.iter().map(|g| g.weights.clone()).collect();
            build_stg_with_coupling(&blocks, c)?
        }
        (Representation::Cpg, None) => build_cpg(&graphs[0].weights, t_count)?,
        (Representation::Cpg, Some(c)) => {
            build_cpg_with_coupling(&graphs[0].weights, t_count, c)?
        }
    };
    Ok((graphs, st))
}

/// Edge budget for the greedy smoothness pruner: explicit config value, or
/// the correlation graph's edge count at the same threshold.
fn smoothness_target(
    config: &PipelineConfig,
    x: &Array2<f64>,
    kinds: &[stgc_core::FeatureKind],
    t: usize,
) -> Result<usize> {
    if let Some(target) = config.graph.target_edges {
        return Ok(target);
    }
    let assoc = association_matrix(x, kinds, TimeRef::Step(t))
        .map_err(|e| method_context(GraphMethod::Smoothness, e))?;
    Ok(threshold_adjacency(&assoc, config.graph.threshold).num_edges())
}

pub struct GraphArtifacts {
    pub split: PathBuf,
    pub graphs: PathBuf,
    pub st_graph: PathBuf,
    pub metrics: PathBuf,
    pub dot: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct GraphsFile {
    meta: Meta,
    graphs: Vec<FeatureGraph>,
}

/// `graph`: split the cohort, estimate graphs on the training subset only,
/// assemble the spatio-temporal operator, and report density/entropy.
pub fn run_graph(config: &PipelineConfig) -> Result<GraphArtifacts> {
    let meta = Meta::new(config.hash()?);
    let dataset = load_dataset(&config.dataset)
        .map_err(|e| Error::InvalidInput(format!("cannot load dataset: {e}")))?;
    let split = make_split(
        &dataset,
        config.split.test_fraction,
        config.split.k_folds,
        config.seed,
    )?;
    let train_subset = dataset.subset(&split.train_ids)?;
    let (graphs, st) = estimate_graphs(&train_subset, config)?;

    let out = &config.out_dir;
    let artifacts = GraphArtifacts {
        split: out.join("split.json"),
        graphs: out.join("graphs.json"),
        st_graph: out.join("st_graph.json"),
        metrics: out.join("graph_metrics.json"),
        dot: out.join("st_graph.dot"),
    };

    io::write_json(
        &artifacts.split,
        &Stamped {
            meta: meta.clone(),
            body: split,
        },
    )?;
    io::write_json(
        &artifacts.graphs,
        &GraphsFile {
            meta: meta.clone(),
            graphs: graphs.clone(),
        },
    )?;
    io::write_json(
        &artifacts.st_graph,
        &Stamped {
            meta: meta.clone(),
            body: st.clone(),
        },
    )?;

    let blocks = graphs
        .iter()
        .map(block_metrics)
        .collect::<Result<Vec<_>>>()?;
    let report = GraphMetricsReport {
        method: config.graph.method,
        representation: config.graph.representation,
        threshold: match config.graph.method {
            GraphMethod::Hgd | GraphMethod::HgdDtw => config.graph.hgd.threshold,
            _ => config.graph.threshold,
        },
        blocks,
        st_density: st.edge_density()?,
        st_entropy: st.edge_entropy().ok(),
    };
    io::write_json(
        &artifacts.metrics,
        &Stamped {
            meta: meta.clone(),
            body: report,
        },
    )?;

    let mut dot = format!("// {}\n", meta.csv_comment().trim_start_matches("# "));
    dot.push_str(&st.to_dot(Some(&dataset.schema.feature_names)));
    io::atomic_write(&artifacts.dot, dot.as_bytes())?;

    println!(
        "wrote {} graph block(s), operator {}x{} with {} edges, metrics, split",
        graphs.len(),
        st.num_nodes(),
        st.num_nodes(),
        st.edges().len()
    );
    Ok(artifacts)
}

#[derive(Serialize, Deserialize)]
struct GridFile {
    meta: Meta,
    grid: Vec<ModelConfig>,
    report: GridSearchReport,
}

pub struct TrainArtifacts {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub grid: PathBuf,
}

/// `train`: grid search with cross-validation, then save the best model.
pub fn run_train(config: &PipelineConfig) -> Result<TrainArtifacts> {
    let meta = Meta::new(config.hash()?);
    let dataset = load_dataset(&config.dataset)
        .map_err(|e| Error::InvalidInput(format!("cannot load dataset: {e}")))?;
    let out = &config.out_dir;
    let split: Stamped<SplitPlan> = read_json_at(&out.join("split.json"), "split file")?;
    let st: Stamped<STAdjacency> = read_json_at(&out.join("st_graph.json"), "graph file")?;

    let grid = config.model.expand(config.seed);
    let (report, outcome) = gcnn::grid_search(&dataset, &split.body, &st.body, &grid)?;

    let artifacts = TrainArtifacts {
        checkpoint: out.join("checkpoint.json"),
        log: out.join("training_log.csv"),
        grid: out.join("grid_results.json"),
    };
    let checkpoint = Checkpoint {
        meta: meta.clone(),
        config: grid[report.best_index].clone(),
        graph: st.body,
        params: outcome.params,
        mean_val_auc: outcome.mean_val_auc,
    };
    checkpoint.save(&artifacts.checkpoint)?;
    outcome.log.write_csv(&artifacts.log, &meta)?;
    io::write_json(
        &artifacts.grid,
        &GridFile {
            meta,
            grid,
            report: report.clone(),
        },
    )?;
    println!(
        "selected grid point {} (mean validation ROC-AUC {:.4}); wrote checkpoint, log, grid results",
        report.best_index, outcome.mean_val_auc
    );
    Ok(artifacts)
}

/// `eval`: score the checkpoint on the held-out test ids.
pub fn run_eval(
    checkpoint_path: &Path,
    dataset_path: &Path,
    split_path: &Path,
    out: &Path,
) -> Result<EvalReport> {
    let checkpoint = Checkpoint::load(checkpoint_path).map_err(|e| {
        Error::InvalidInput(format!(
            "cannot load checkpoint '{}': {e}",
            checkpoint_path.display()
        ))
    })?;
    let dataset = load_dataset(dataset_path)?;
    let split: Stamped<SplitPlan> = read_json_at(split_path, "split file")?;

    let ops = gcnn::build_operator(&checkpoint.graph, &checkpoint.config)?;
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for id in &split.body.test_ids {
        let record = dataset
            .patient(id)
            .ok_or_else(|| Error::Split(format!("test id '{id}' not in dataset")))?;
        let (soft, _) = gcnn::predict(&checkpoint.params, &checkpoint.config, &ops, record)?;
        scores.push(soft);
        labels.push(record.label);
    }
    let report = confusion_at_half(&scores, &labels)?;
    io::write_json(
        out,
        &Stamped {
            meta: checkpoint.meta.clone(),
            body: report.clone(),
        },
    )?;
    println!(
        "test ROC-AUC {:.4}, sensitivity {:.4}, specificity {:.4} -> {}",
        report.roc_auc,
        report.sensitivity,
        report.specificity,
        out.display()
    );
    Ok(report)
}

/// `eval --summarize`: mean +/- std over several report files.
pub fn run_eval_summarize(inputs: &[PathBuf], out: &Path) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::Config("--summarize needs at least one report".into()));
    }
    let mut reports = Vec::with_capacity(inputs.len());
    let mut meta = None;
    for path in inputs {
        let stamped: Stamped<EvalReport> = read_json_at(path, "eval report")?;
        meta.get_or_insert(stamped.meta);
        reports.push(stamped.body);
    }
    let summary = summarize_reports(&reports)?;
    io::write_json(
        out,
        &Stamped {
            meta: meta.unwrap(),
            body: summary.clone(),
        },
    )?;
    println!(
        "{} runs: ROC-AUC {:.4} +/- {:.4} -> {}",
        summary.runs,
        summary.roc_auc.mean,
        summary.roc_auc.std,
        out.display()
    );
    Ok(())
}

pub struct ExplainArtifacts {
    pub importance: PathBuf,
    pub class_frequency: PathBuf,
    pub delta_sensitivity: PathBuf,
}

/// `explain`: importance + class frequency over the (test) patients, and the
/// one-hot sensitivity table of the trained network.
pub fn run_explain(
    checkpoint_path: &Path,
    dataset_path: &Path,
    split_path: Option<&Path>,
    out_dir: &Path,
    tau_factor: f64,
) -> Result<ExplainArtifacts> {
    let checkpoint = Checkpoint::load(checkpoint_path).map_err(|e| {
        Error::InvalidInput(format!(
            "cannot load checkpoint '{}': {e}",
            checkpoint_path.display()
        ))
    })?;
    let dataset = load_dataset(dataset_path)?;
    let cohort = match split_path {
        Some(path) => {
            let split: Stamped<SplitPlan> = read_json_at(path, "split file")?;
            dataset.subset(&split.body.test_ids)?
        }
        None => dataset.clone(),
    };

    let ops = gcnn::build_operator(&checkpoint.graph, &checkpoint.config)?;
    let records =
        importance_for_dataset(&checkpoint.params, &checkpoint.config, &ops, &cohort)?;
    let table = aggregate_by_class(
        &records,
        dataset.schema.num_features,
        dataset.schema.num_steps,
    )?;
    let delta = delta_sensitivity(&checkpoint.params, &checkpoint.config, &ops, tau_factor)?;

    let artifacts = ExplainArtifacts {
        importance: out_dir.join("importance.csv"),
        class_frequency: out_dir.join("class_frequency.csv"),
        delta_sensitivity: out_dir.join("delta_sensitivity.csv"),
    };
    write_importance_csv(
        &artifacts.importance,
        &records,
        &dataset.schema,
        &checkpoint.meta,
    )?;
    write_class_frequency_csv(
        &artifacts.class_frequency,
        &table,
        &dataset.schema,
        &checkpoint.meta,
    )?;
    write_delta_sensitivity_csv(
        &artifacts.delta_sensitivity,
        &delta,
        &dataset.schema,
        &checkpoint.meta,
    )?;
    println!(
        "wrote importance for {} patients, class frequencies, and {} sensitivity rows",
        records.len(),
        delta.rows.len()
    );
    Ok(artifacts)
}
