//! Acceptance suite: one test per release criterion. Each test prints a
//! `[acceptance] C<n> PASS ...` line with measured values (visible with
//! `cargo test -p stgc-cli --test acceptance -- --nocapture`).

use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stgc_cli::config::{
    GraphSection, GridSpec, ModelSection, PipelineConfig, SplitSection,
};
use stgc_cli::pipeline::{estimate_graphs, Stamped};
use stgc_core::association::{pearson, phi, point_biserial};
use stgc_core::data_model::{make_split, vectorize_zeropad, Dataset, FeatureKind, PatientRecord};
use stgc_core::explain::{
    aggregate_by_class, delta_sensitivity, importance_for_dataset, importance_for_record,
    top_selection_size,
};
use stgc_core::gcnn::{
    self, backward, forward, forward_with_masks, loss_bce, Gradients, ModelConfig, ModelParams,
    Phase, Variant,
};
use stgc_core::graphs::TimeRef;
use stgc_core::hgd_dtw::{dtw_hgd, hgd, rescale_pair};
use stgc_core::metrics::roc_auc;
use stgc_core::smoothness::{greedy_graph, normalized_covariance, smoothness_value};
use stgc_core::st_graph::{
    build_cpg, build_stg, edge_density, edge_entropy, normalize_adjacency, OperatorPowers,
    Representation, STAdjacency,
};
use stgc_core::synthgen::{generate, SynthSpec};
use stgc_core::{GraphMethod, HgdConfig};

// --- criterion 1 ----------------------------------------------------------

/// Literal transcriptions of the three coefficient formulas, kept separate
/// from the library implementations.
mod coefficient_oracle {
    pub fn pearson(z1: &[f64], z2: &[f64]) -> f64 {
        let k = z1.len() as f64;
        let m1: f64 = z1.iter().sum::<f64>() / k;
        let m2: f64 = z2.iter().sum::<f64>() / k;
        let num: f64 = z1
            .iter()
            .zip(z2)
            .map(|(a, b)| (a - m1) * (b - m2))
            .sum();
        let d1: f64 = z1.iter().map(|a| (a - m1) * (a - m1)).sum();
        let d2: f64 = z2.iter().map(|b| (b - m2) * (b - m2)).sum();
        if d1 == 0.0 || d2 == 0.0 {
            return 0.0;
        }
        num / (d1 * d2).sqrt()
    }

    pub fn phi(z1: &[f64], z2: &[f64]) -> f64 {
        let count = |pred: &dyn Fn(f64, f64) -> bool| -> f64 {
            z1.iter()
                .zip(z2)
                .filter(|(a, b)| pred(**a, **b))
                .count() as f64
        };
        let n11 = count(&|a, b| a == 1.0 && b == 1.0);
        let n10 = count(&|a, b| a == 1.0 && b == 0.0);
        let n01 = count(&|a, b| a == 0.0 && b == 1.0);
        let n00 = count(&|a, b| a == 0.0 && b == 0.0);
        let (m1, m0) = (n11 + n10, n01 + n00);
        let (n1, n0) = (n11 + n01, n10 + n00);
        let denom = (m1 * m0 * n1 * n0).sqrt();
        if denom == 0.0 {
            return 0.0;
        }
        (n11 * n00 - n10 * n01) / denom
    }

    pub fn point_biserial(z1: &[f64], z2: &[f64]) -> f64 {
        let k = z1.len() as f64;
        let n1 = z2.iter().filter(|b| **b == 1.0).count() as f64;
        let n0 = k - n1;
        let mean: f64 = z1.iter().sum::<f64>() / k;
        let var: f64 = z1.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / k;
        let s = var.sqrt();
        if s == 0.0 || n1 == 0.0 || n0 == 0.0 {
            return 0.0;
        }
        let mean1: f64 = z1
            .iter()
            .zip(z2)
            .filter(|(_, b)| **b == 1.0)
            .map(|(a, _)| *a)
            .sum::<f64>()
            / n1;
        let mean0: f64 = z1
            .iter()
            .zip(z2)
            .filter(|(_, b)| **b == 0.0)
            .map(|(a, _)| *a)
            .sum::<f64>()
            / n0;
        (mean1 - mean0) / s * (n1 * n0 / (k * k)).sqrt()
    }
}

#[test]
fn criterion_01_coefficient_oracles() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let k = rng.gen_range(2..=12);
        let z1: Vec<f64> = (0..k).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let z2: Vec<f64> = (0..k).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let b1: Vec<f64> = (0..k).map(|_| f64::from(u8::from(rng.gen_bool(0.5)))).collect();
        let b2: Vec<f64> = (0..k).map(|_| f64::from(u8::from(rng.gen_bool(0.5)))).collect();

        let d = (pearson(&z1, &z2).unwrap() - coefficient_oracle::pearson(&z1, &z2)).abs();
        worst = worst.max(d);
        let d = (phi(&b1, &b2).unwrap() - coefficient_oracle::phi(&b1, &b2)).abs();
        worst = worst.max(d);
        let d = (point_biserial(&z1, &b2).unwrap()
            - coefficient_oracle::point_biserial(&z1, &b2))
        .abs();
        worst = worst.max(d);
    }
    assert!(worst <= 1e-12, "worst oracle deviation {worst}");
    assert_eq!(
        pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap(),
        0.8,
        "known value must be exact"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!(
        "[acceptance] C1 PASS coefficient oracles: 1000 trials, worst deviation {worst:.2e}, \
         pearson([1,2,3,4],[1,3,2,4]) == 0.8 exactly, {elapsed:?}"
    );
}

// --- criterion 2 ----------------------------------------------------------

/// All monotone warping paths from (0,0) to (rows-1, cols-1).
fn all_paths(rows: usize, cols: usize) -> Vec<Vec<(usize, usize)>> {
    fn extend(path: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>, goal: (usize, usize)) {
        let &(i, j) = path.last().unwrap();
        if (i, j) == goal {
            out.push(path.clone());
            return;
        }
        let mut moves = Vec::new();
        if i < goal.0 && j < goal.1 {
            moves.push((i + 1, j + 1));
        }
        if i < goal.0 {
            moves.push((i + 1, j));
        }
        if j < goal.1 {
            moves.push((i, j + 1));
        }
        for m in moves {
            path.push(m);
            extend(path, out, goal);
            path.pop();
        }
    }
    let mut out = Vec::new();
    extend(&mut vec![(0, 0)], &mut out, (rows - 1, cols - 1));
    out
}

fn random_slice(rng: &mut ChaCha8Rng, p: usize, t: usize, binary: bool) -> Array2<f64> {
    Array2::from_shape_fn((p, t), |_| {
        if binary {
            f64::from(u8::from(rng.gen_bool(0.4)))
        } else {
            rng.gen_range(-3.0..3.0)
        }
    })
}

#[test]
fn criterion_02_dtw_matches_exhaustive_path_enumeration() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for trial in 0..200 {
        let p = rng.gen_range(1..=3);
        let t = rng.gen_range(1..=4);
        let (k1, k2) = match trial % 3 {
            0 => (FeatureKind::Continuous, FeatureKind::Continuous),
            1 => (FeatureKind::Binary, FeatureKind::Continuous),
            _ => (FeatureKind::Binary, FeatureKind::Binary),
        };
        let xi = random_slice(&mut rng, p, t, k1.is_binary());
        let xj = random_slice(&mut rng, p, t, k2.is_binary());

        // oracle step costs: rescale the flattened pair, per-patient ranges
        // over both rescaled slices, then the range-normalized distance
        let (a_flat, b_flat) = rescale_pair(
            xi.as_slice().unwrap(),
            xj.as_slice().unwrap(),
            (k1, k2),
        )
        .unwrap();
        let a = Array2::from_shape_vec((p, t), a_flat).unwrap();
        let b = Array2::from_shape_vec((p, t), b_flat).unwrap();
        let ranges: Vec<f64> = (0..p)
            .map(|row| {
                let vals: Vec<f64> =
                    a.row(row).iter().chain(b.row(row).iter()).copied().collect();
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                hi - lo
            })
            .collect();
        let mut costs = Array2::zeros((t, t));
        for ti in 0..t {
            for tj in 0..t {
                costs[(ti, tj)] =
                    hgd(&a.column(ti).to_vec(), &b.column(tj).to_vec(), &ranges).unwrap();
            }
        }
        let oracle = all_paths(t, t)
            .into_iter()
            .map(|path| path.into_iter().map(|(i, j)| costs[(i, j)]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);

        let got = dtw_hgd(&xi, &xj, (k1, k2)).unwrap();
        worst = worst.max((got - oracle).abs());
    }
    assert!(worst <= 1e-10, "worst path-enumeration deviation {worst}");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "[acceptance] C2 PASS dtw vs exhaustive enumeration: 200 trials, worst deviation \
         {worst:.2e}, {elapsed:?}"
    );
}

// --- criterion 3 ----------------------------------------------------------

fn random_feature_graph(rng: &mut ChaCha8Rng, f: usize) -> Array2<f64> {
    let mut a = Array2::zeros((f, f));
    for i in 0..f {
        for j in (i + 1)..f {
            if rng.gen_bool(0.6) {
                let w: f64 = rng.gen_range(0.05..1.0);
                a[(i, j)] = w;
                a[(j, i)] = w;
            }
        }
    }
    a
}

#[test]
fn criterion_03_cpg_equals_stg_with_repeated_blocks() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for _ in 0..100 {
        let f = rng.gen_range(1..=6);
        let t = rng.gen_range(1..=6);
        let a = random_feature_graph(&mut rng, f);
        let cpg = build_cpg(&a, t).unwrap();
        let stg = build_stg(&vec![a.clone(); t]).unwrap();
        assert_eq!(cpg.matrix, stg.matrix, "CSR structures must be identical");
        assert_eq!(cpg.matrix.to_dense(), stg.matrix.to_dense());
    }

    // hand-written Kronecker-sum example, bit exact
    let edge = ndarray::array![[0.0, 1.0], [1.0, 0.0]];
    let cpg = build_cpg(&edge, 2).unwrap();
    let expect = ndarray::array![
        [0.0, 1.0, 1.0, 0.0],
        [1.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, 1.0, 0.0]
    ];
    assert_eq!(cpg.matrix.to_dense(), expect);
    println!(
        "[acceptance] C3 PASS structural equivalence: 100 random (F<=6, T<=6) trials identical, \
         4x4 Kronecker-sum example bit-exact"
    );
}

// --- criterion 4 ----------------------------------------------------------

fn flatten_params(params: &ModelParams) -> Vec<f64> {
    let mut out = Vec::new();
    for layer in &params.layers {
        for w in &layer.weights {
            out.extend(w.iter().copied());
        }
        out.extend(layer.bias.iter().copied());
    }
    out.extend(params.head_w.iter().copied());
    out.push(params.head_b);
    out
}

fn load_params(template: &ModelParams, flat: &[f64]) -> ModelParams {
    let mut out = template.clone();
    let mut it = flat.iter().copied();
    for layer in &mut out.layers {
        for w in &mut layer.weights {
            for v in w.iter_mut() {
                *v = it.next().unwrap();
            }
        }
        for v in layer.bias.iter_mut() {
            *v = it.next().unwrap();
        }
    }
    for v in out.head_w.iter_mut() {
        *v = it.next().unwrap();
    }
    out.head_b = it.next().unwrap();
    out
}

fn flatten_grads(grads: &Gradients) -> Vec<f64> {
    let mut out = Vec::new();
    for layer in &grads.layers {
        for w in &layer.weights {
            out.extend(w.iter().copied());
        }
        out.extend(layer.bias.iter().copied());
    }
    out.extend(grads.head_w.iter().copied());
    out.push(grads.head_b);
    out
}

#[test]
fn criterion_04_gradients_match_central_finite_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);

    // FT = 3 * 4 = 12 <= 24 node instances
    let blocks: Vec<Array2<f64>> = (0..4).map(|_| random_feature_graph(&mut rng, 3)).collect();
    let st = build_stg(&blocks).unwrap();

    let mut cases = Vec::new();
    for layers in [1usize, 2, 3] {
        cases.push((Variant::Gcnn1, layers, 2usize));
        for poly in [2usize, 3] {
            cases.push((Variant::Gcnn2, layers, poly));
        }
    }

    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    for (variant, layers, poly_order) in cases {
        let config = ModelConfig {
            variant,
            layers,
            hidden_width: 3,
            poly_order,
            leaky_alpha: 0.2,
            dropout: 0.0,
            learning_rate: 0.1,
            lr_decay: 0.0,
            epochs: 1,
            batch_size: 1,
            seed: 1,
        };
        let ops = gcnn::build_operator(&st, &config).unwrap();
        let mut params = ModelParams::init(&config, 12, &mut rng);
        for layer in &mut params.layers {
            for v in layer.bias.iter_mut() {
                *v = rng.gen_range(-0.3..0.3);
            }
        }
        let x = Array1::from_shape_fn(12, |_| rng.gen_range(-1.5..1.5));
        let y: u8 = rng.gen_range(0..=1);

        let trace = forward(&params, &config, &ops, &x, Phase::Eval).unwrap();
        let masks = trace.masks.clone();
        let analytic = flatten_grads(&backward(&trace, &params, &config, &ops, y).unwrap());

        let theta = flatten_params(&params);
        let step = 1e-5;
        for i in 0..theta.len() {
            let mut plus = theta.clone();
            plus[i] += step;
            let mut minus = theta.clone();
            minus[i] -= step;
            let lp = loss_bce(
                forward_with_masks(&load_params(&params, &plus), &config, &ops, &x, &masks)
                    .unwrap()
                    .y_hat,
                y,
            );
            let lm = loss_bce(
                forward_with_masks(&load_params(&params, &minus), &config, &ops, &x, &masks)
                    .unwrap()
                    .y_hat,
                y,
            );
            let fd = (lp - lm) / (2.0 * step);
            let a = analytic[i];
            let denom = a.abs().max(fd.abs());
            let rel = if denom > 0.0 { (a - fd).abs() / denom } else { 0.0 };
            let ok = (a - fd).abs() <= 1e-10 || rel <= 1e-4;
            assert!(
                ok,
                "{variant:?} L={layers} K={poly_order} param {i}: analytic {a} vs fd {fd}"
            );
            worst = worst.max(rel);
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "[acceptance] C4 PASS gradient check: {checked} parameters across both variants, \
         L in {{1,2,3}}, K in {{2,3}}; worst relative error {worst:.2e}, {elapsed:?}"
    );
}

// --- criterion 5 ----------------------------------------------------------

#[test]
fn criterion_05_greedy_smoothness_matches_exhaustive_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for trial in 0..50 {
        let f = rng.gen_range(3..=6);
        let x = Array2::from_shape_fn((f, 12), |_| rng.gen_range(-2.0..2.0));
        let c = normalized_covariance(&x).unwrap();

        let mut adjacency = Array2::from_elem((f, f), 1.0);
        for i in 0..f {
            adjacency[(i, i)] = 0.0;
        }
        let mut edges: Vec<(usize, usize)> = (0..f)
            .flat_map(|i| ((i + 1)..f).map(move |j| (i, j)))
            .collect();
        let mut previous = smoothness_value(&adjacency, &c).unwrap();

        for target in (0..edges.len()).rev() {
            // exhaustive single-edge search with full recomputation
            let mut best_val = f64::INFINITY;
            let mut best_edge = edges[0];
            for &(i, j) in &edges {
                let mut trial_adj = adjacency.clone();
                trial_adj[(i, j)] = 0.0;
                trial_adj[(j, i)] = 0.0;
                let v = smoothness_value(&trial_adj, &c).unwrap();
                if v < best_val - 1e-9 {
                    best_val = v;
                    best_edge = (i, j);
                }
            }

            let got = greedy_graph(&c, target, TimeRef::Static).unwrap();
            assert_eq!(
                got.weights[(best_edge.0, best_edge.1)],
                0.0,
                "trial {trial}: step to {target} edges disagrees with the oracle"
            );
            adjacency[(best_edge.0, best_edge.1)] = 0.0;
            adjacency[(best_edge.1, best_edge.0)] = 0.0;
            edges.retain(|&e| e != best_edge);
            assert_eq!(got.weights, adjacency);

            let now = smoothness_value(&adjacency, &c).unwrap();
            assert!(now <= previous + 1e-12, "objective increased");
            previous = now;
        }
    }
    println!(
        "[acceptance] C5 PASS greedy smoothness: 50 random covariances (F<=6), every removal \
         step matches exhaustive search, objective nonincreasing"
    );
}

// --- criterion 6 ----------------------------------------------------------

fn pipeline_config(
    dataset: &Path,
    out_dir: &Path,
    method: GraphMethod,
    representation: Representation,
    threshold: f64,
    seed: u64,
) -> PipelineConfig {
    PipelineConfig {
        dataset: dataset.to_path_buf(),
        out_dir: out_dir.to_path_buf(),
        seed,
        graph: GraphSection {
            method,
            representation,
            threshold,
            hgd: HgdConfig {
                beta: 1.0,
                threshold,
            },
            target_edges: None,
            temporal_coupling: None,
        },
        split: SplitSection {
            test_fraction: 0.3,
            k_folds: 5,
        },
        model: ModelSection {
            variant: Variant::Gcnn2,
            epochs: 30,
            batch_size: 32,
            leaky_alpha: 0.01,
            grid: GridSpec {
                layers: vec![1],
                hidden_width: vec![8],
                poly_order: vec![3],
                dropout: vec![0.0],
                learning_rate: vec![0.1],
                lr_decay: vec![1e-3],
            },
        },
    }
}

/// Cohort whose continuous features load on one latent factor with loadings
/// spread over [0.55, 1.0], so pairwise correlations cover the sweep range.
fn correlated_cohort(p_count: usize, f_count: usize, t_count: usize, seed: u64) -> Dataset {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = stgc_core::DatasetSchema::new(
        t_count,
        (0..f_count)
            .map(|f| (format!("x{f:02}"), FeatureKind::Continuous))
            .collect(),
    )
    .unwrap();
    let loadings: Vec<f64> = (0..f_count)
        .map(|f| 0.55 + 0.45 * f as f64 / (f_count - 1) as f64)
        .collect();
    let patients = (0..p_count)
        .map(|p| {
            let mut grid = vec![vec![None; t_count]; f_count];
            for t in 0..t_count {
                let shared: f64 = StandardNormal.sample(&mut rng);
                for f in 0..f_count {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    let a = loadings[f];
                    grid[f][t] = Some(a * shared + (1.0 - a * a).sqrt() * noise);
                }
            }
            PatientRecord {
                id: format!("p{p:03}"),
                label: (p % 2) as u8,
                grid,
            }
        })
        .collect();
    Dataset::new(schema, patients).unwrap()
}

#[test]
fn criterion_06_graph_metrics_and_threshold_sweep() {
    // pinned closed-form values
    let complete4 = Array2::from_shape_fn((4, 4), |(i, j)| f64::from(u8::from(i != j)));
    assert_eq!(edge_density(&complete4, false).unwrap(), 1.0);

    let mut path4 = Array2::zeros((4, 4));
    for i in 0..3 {
        path4[(i, i + 1)] = 1.0;
        path4[(i + 1, i)] = 1.0;
    }
    assert_eq!(edge_density(&path4, false).unwrap(), 0.5);

    for n in [3usize, 4, 6] {
        // ring graphs are 2-regular
        let mut ring = Array2::zeros((n, n));
        for i in 0..n {
            ring[(i, (i + 1) % n)] = 1.0;
            ring[((i + 1) % n, i)] = 1.0;
        }
        let h = edge_entropy(&ring).unwrap();
        assert!(
            (h - (n as f64).ln()).abs() <= 1e-12,
            "regular graph on {n}: H={h}"
        );
    }

    // density nonincreasing across the threshold sweep, via the graph
    // command; correlation sweeps a latent-factor cohort whose pairwise
    // correlations spread across the range, the distance method sweeps a
    // mixed binary/continuous cohort where binary agreements carry weight
    let dir = tempfile::tempdir().unwrap();
    let corr_path = dir.path().join("correlated.json");
    stgc_core::data_model::save_dataset(&corr_path, &correlated_cohort(150, 8, 5, 21)).unwrap();
    let mixed_path = dir.path().join("mixed.json");
    let mixed = generate(&SynthSpec {
        num_patients: 150,
        num_continuous: 8,
        num_binary: 4,
        num_steps: 5,
        missing_rate: 0.1,
        positive_fraction: 0.4,
        signal_pairs: vec![(0, 1), (2, 3)],
        signal_strength: 2.0,
        binary_base_rate: 0.3,
        seed: 21,
    })
    .unwrap();
    stgc_core::data_model::save_dataset(&mixed_path, &mixed).unwrap();

    for (method, dataset_path) in [
        (GraphMethod::Correlation, &corr_path),
        (GraphMethod::Hgd, &mixed_path),
    ] {
        let mut densities = Vec::new();
        for (i, threshold) in [0.6, 0.725, 0.85, 0.975].iter().enumerate() {
            let out_dir = dir.path().join(format!("sweep_{method:?}_{i}"));
            let config = pipeline_config(
                dataset_path,
                &out_dir,
                method,
                Representation::Cpg,
                *threshold,
                21,
            );
            stgc_cli::pipeline::run_graph(&config).unwrap();
            let metrics: serde_json::Value = serde_json::from_str(
                &std::fs::read_to_string(out_dir.join("graph_metrics.json")).unwrap(),
            )
            .unwrap();
            densities.push(metrics["blocks"][0]["density"].as_f64().unwrap());
        }
        assert!(
            densities[0] > 0.0,
            "{method:?} sweep must start with a nonempty graph: {densities:?}"
        );
        assert!(
            densities[0] > densities[3],
            "{method:?} sweep must actually thin the graph: {densities:?}"
        );
        for w in densities.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-12,
                "{method:?} density must not increase with threshold: {densities:?}"
            );
        }
        println!(
            "[acceptance] C6 sweep {}: densities over thresholds {{0.6,0.725,0.85,0.975}} = {densities:?}",
            method.as_str()
        );
    }
    println!(
        "[acceptance] C6 PASS graph metrics: density(K4)=1, density(path4)=0.5, \
         entropy(regular)=ln N to 1e-12, sweep nonincreasing"
    );
}

// --- criterion 7 ----------------------------------------------------------

fn planted_spec(seed: u64, strength: f64) -> SynthSpec {
    SynthSpec {
        num_patients: 600,
        num_continuous: 12,
        num_binary: 8,
        num_steps: 8,
        missing_rate: 0.2,
        positive_fraction: 0.4,
        signal_pairs: vec![(0, 1), (3, 4), (7, 6), (12, 2), (15, 5)],
        signal_strength: strength,
        binary_base_rate: 0.3,
        seed,
    }
}

/// Library-level pipeline: synth cohort -> split -> per-step correlation
/// graphs on the training subset -> STG -> GCNN-2 train -> held-out AUC.
fn run_planted_pipeline(seed: u64, strength: f64) -> (f64, Dataset, stgc_core::Checkpoint) {
    let dataset = generate(&planted_spec(seed, strength)).unwrap();
    let split = make_split(&dataset, 0.3, 5, seed).unwrap();
    let train_subset = dataset.subset(&split.train_ids).unwrap();

    let config = pipeline_config(
        Path::new("unused"),
        Path::new("unused"),
        GraphMethod::Correlation,
        Representation::Stg,
        0.3,
        seed,
    );
    let (_, st) = estimate_graphs(&train_subset, &config).unwrap();

    // small grid; cross-validated selection picks the best trajectory per seed
    let base = ModelConfig {
        variant: Variant::Gcnn2,
        layers: 1,
        hidden_width: 8,
        poly_order: 3,
        leaky_alpha: 0.01,
        dropout: 0.0,
        learning_rate: 0.03,
        lr_decay: 1e-3,
        epochs: 100,
        batch_size: 32,
        seed,
    };
    let grid = vec![
        base.clone(),
        ModelConfig {
            learning_rate: 0.05,
            ..base.clone()
        },
        ModelConfig {
            layers: 2,
            hidden_width: 4,
            epochs: 60,
            ..base
        },
    ];
    let (report, outcome) = gcnn::grid_search(&dataset, &split, &st, &grid).unwrap();
    let model = grid[report.best_index].clone();

    let ops = gcnn::build_operator(&st, &model).unwrap();
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for id in &split.test_ids {
        let record = dataset.patient(id).unwrap();
        let (soft, _) = gcnn::predict(&outcome.params, &model, &ops, record).unwrap();
        scores.push(soft);
        labels.push(record.label);
    }
    let auc = roc_auc(&scores, &labels).unwrap();
    println!(
        "[acceptance]   seed {seed} strength {strength}: grid point {} (L={}, lr={}), \
         val AUC {:.3}, test AUC {auc:.3}",
        report.best_index, model.layers, model.learning_rate, outcome.mean_val_auc
    );
    let checkpoint = stgc_core::Checkpoint {
        meta: stgc_core::io::Meta::new("acceptance"),
        config: model,
        graph: st,
        params: outcome.params,
        mean_val_auc: outcome.mean_val_auc,
    };
    (auc, dataset, checkpoint)
}

#[test]
fn criterion_07_end_to_end_synthetic_classification() {
    let start = Instant::now();
    let seeds = [1u64, 2, 3, 4, 5];

    let mut planted_aucs = Vec::new();
    for &seed in &seeds {
        let (auc, _, _) = run_planted_pipeline(seed, 3.0);
        planted_aucs.push(auc);
    }
    let hits = planted_aucs.iter().filter(|a| **a >= 0.95).count();

    // the null mean is a noisier estimand (overfit-to-noise models produce
    // clustered ranking errors), so average over more seeds
    let mut null_aucs = Vec::new();
    for seed in 1..=10u64 {
        let (auc, _, _) = run_planted_pipeline(seed, 0.0);
        null_aucs.push(auc);
    }
    let null_mean = null_aucs.iter().sum::<f64>() / null_aucs.len() as f64;

    let elapsed = start.elapsed();
    assert!(
        hits >= 4,
        "planted-signal AUC >= 0.95 on only {hits}/5 seeds: {planted_aucs:?}"
    );
    assert!(
        (null_mean - 0.5).abs() <= 0.05,
        "null-signal mean AUC {null_mean} outside 0.5 +/- 0.05: {null_aucs:?}"
    );
    assert!(elapsed.as_secs_f64() < 600.0, "took {elapsed:?}");
    println!(
        "[acceptance] C7 PASS end-to-end synthetic classification: planted AUCs {planted_aucs:?} \
         ({hits}/5 >= 0.95), null AUCs {null_aucs:?} (mean {null_mean:.3}), {elapsed:?}"
    );
}

// --- criterion 8 ----------------------------------------------------------

#[test]
fn criterion_08_explainability_recovers_planted_pairs() {
    let (auc, dataset, checkpoint) = run_planted_pipeline(1, 3.0);
    assert!(auc > 0.9, "model must be predictive for importance to mean anything");

    let split = make_split(&dataset, 0.3, 5, 1).unwrap();
    let test_subset = dataset.subset(&split.test_ids).unwrap();
    let ops = gcnn::build_operator(&checkpoint.graph, &checkpoint.config).unwrap();
    let records =
        importance_for_dataset(&checkpoint.params, &checkpoint.config, &ops, &test_subset)
            .unwrap();
    let table = aggregate_by_class(
        &records,
        dataset.schema.num_features,
        dataset.schema.num_steps,
    )
    .unwrap();

    // rank (f, t) pairs by positive-class count, descending
    let mut ranked: Vec<((usize, usize), usize)> = table
        .feature_major(true)
        .into_iter()
        .map(|(f, t, count)| ((f, t), count))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let top10: Vec<(usize, usize)> = ranked.iter().take(10).map(|r| r.0).collect();

    let planted = planted_spec(1, 3.0).signal_pairs;
    let recovered = planted.iter().filter(|p| top10.contains(p)).count();
    assert!(
        recovered >= 4,
        "only {recovered}/5 planted pairs in the top-10 positive counts; top10 {top10:?}, \
         planted {planted:?}"
    );

    // the 5% selection rule at the reference width: FT = 1120 -> exactly 56
    assert_eq!(top_selection_size(1120), 56);
    let zero_graph = Array2::zeros((80, 80));
    let st = build_cpg(&zero_graph, 14).unwrap();
    let config = ModelConfig {
        variant: Variant::Gcnn1,
        layers: 1,
        hidden_width: 1,
        poly_order: 2,
        leaky_alpha: 0.01,
        dropout: 0.0,
        learning_rate: 0.1,
        lr_decay: 0.0,
        epochs: 1,
        batch_size: 1,
        seed: 3,
    };
    let ops_wide = gcnn::build_operator(&st, &config).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = ModelParams::init(&config, 1120, &mut rng);
    let record = PatientRecord {
        id: "probe".into(),
        label: 1,
        grid: vec![vec![Some(0.5); 14]; 80],
    };
    let imp = importance_for_record(&params, &config, &ops_wide, &record).unwrap();
    assert_eq!(imp.selected.len(), 56);

    println!(
        "[acceptance] C8 PASS explainability recovery: {recovered}/5 planted pairs in top-10 \
         positive-class counts, FT=1120 selection size = 56"
    );
}

// --- criterion 9 ----------------------------------------------------------

#[test]
fn criterion_09_linear_regime_sensitivity_equals_jacobian_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let blocks: Vec<Array2<f64>> = (0..4).map(|_| random_feature_graph(&mut rng, 3)).collect();
    let st = build_stg(&blocks).unwrap();
    let n = 12;

    let config = ModelConfig {
        variant: Variant::Gcnn2,
        layers: 2,
        hidden_width: 3,
        poly_order: 2,
        leaky_alpha: 1.0, // fully linear
        dropout: 0.0,
        learning_rate: 0.1,
        lr_decay: 0.0,
        epochs: 1,
        batch_size: 1,
        seed: 5,
    };
    let ops = gcnn::build_operator(&st, &config).unwrap();

    for zero_bias in [true, false] {
        let mut params = ModelParams::init(&config, n, &mut rng);
        if !zero_bias {
            for layer in &mut params.layers {
                for v in layer.bias.iter_mut() {
                    *v = rng.gen_range(-0.5..0.5);
                }
            }
            params.head_b = 0.3;
        }

        let table = delta_sensitivity(&params, &config, &ops, 0.05).unwrap();

        // finite-difference Jacobian of h^(L) with respect to the input
        let eval_h = |x: &Array1<f64>| {
            forward(&params, &config, &ops, x, Phase::Eval)
                .unwrap()
                .head_input
        };
        let eps = 1e-4;
        let mut jt_w = vec![0.0f64; n];
        for j in 0..n {
            let mut plus = Array1::zeros(n);
            plus[j] = eps;
            let mut minus = Array1::zeros(n);
            minus[j] = -eps;
            let column = (&eval_h(&plus) - &eval_h(&minus)) / (2.0 * eps);
            jt_w[j] = params.head_w.dot(&column);
        }

        for (j, row) in table.rows.iter().enumerate() {
            let projection = if zero_bias {
                row.projection
            } else {
                row.projection - table.bias_projection
            };
            assert!(
                (projection - jt_w[j]).abs() <= 1e-6,
                "zero_bias={zero_bias} node {j}: projection {projection} vs J^T w {}",
                jt_w[j]
            );
        }

        // superposition at 1e-10
        let zero_h = eval_h(&Array1::zeros(n));
        for (m, k) in [(0usize, 5usize), (3, 11), (7, 8)] {
            let mut em = Array1::zeros(n);
            em[m] = 1.0;
            let mut ek = Array1::zeros(n);
            ek[k] = 1.0;
            let sum_input = &em + &ek;
            let lhs = eval_h(&sum_input);
            let rhs = &(&eval_h(&em) + &eval_h(&ek)) - &zero_h;
            for (a, b) in lhs.iter().zip(rhs.iter()) {
                assert!(
                    (a - b).abs() <= 1e-10,
                    "superposition violated at pair ({m},{k}): {a} vs {b}"
                );
            }
        }
    }
    println!(
        "[acceptance] C9 PASS linear-regime sensitivity: projections equal J^T w_o within 1e-6 \
         (raw with zero biases, bias-subtracted otherwise), superposition holds to 1e-10"
    );
}

// --- criterion 10 ---------------------------------------------------------

#[test]
fn criterion_10_full_pipeline_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let stgc = env!("CARGO_BIN_EXE_stgc");
    let run = |args: &[&str]| {
        let out = std::process::Command::new(stgc).args(args).output().unwrap();
        assert!(
            out.status.success(),
            "stgc {args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };

    let spec_path = dir.path().join("spec.json");
    SynthSpec {
        num_patients: 120,
        num_continuous: 5,
        num_binary: 3,
        num_steps: 4,
        missing_rate: 0.15,
        positive_fraction: 0.4,
        signal_pairs: vec![(0, 1), (1, 2), (5, 0)],
        signal_strength: 3.0,
        binary_base_rate: 0.3,
        seed: 11,
    }
    .save(&spec_path)
    .unwrap();

    let dataset = dir.path().join("dataset.json");
    let out_dir = dir.path().join("out");
    let config_path = dir.path().join("config.json");
    let config = pipeline_config(
        &dataset,
        &out_dir,
        GraphMethod::Hgd,
        Representation::Stg,
        0.3,
        7,
    );
    stgc_core::io::write_json(&config_path, &config).unwrap();

    let full_run = || {
        run(&[
            "synth",
            "--spec",
            spec_path.to_str().unwrap(),
            "--out",
            dataset.to_str().unwrap(),
        ]);
        run(&["graph", "--config", config_path.to_str().unwrap()]);
        run(&["train", "--config", config_path.to_str().unwrap()]);
        run(&[
            "eval",
            "--checkpoint",
            out_dir.join("checkpoint.json").to_str().unwrap(),
            "--dataset",
            dataset.to_str().unwrap(),
            "--split",
            out_dir.join("split.json").to_str().unwrap(),
            "--out",
            out_dir.join("eval.json").to_str().unwrap(),
        ]);
        run(&[
            "explain",
            "--checkpoint",
            out_dir.join("checkpoint.json").to_str().unwrap(),
            "--dataset",
            dataset.to_str().unwrap(),
            "--split",
            out_dir.join("split.json").to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
        ]);
    };

    full_run();
    let mut first = std::collections::BTreeMap::new();
    first.insert("dataset.json".to_string(), std::fs::read(&dataset).unwrap());
    for entry in std::fs::read_dir(&out_dir).unwrap() {
        let entry = entry.unwrap();
        first.insert(
            entry.file_name().to_string_lossy().into_owned(),
            std::fs::read(entry.path()).unwrap(),
        );
    }
    assert!(first.len() >= 11, "expected the full artifact set, got {:?}", first.keys());

    full_run();
    for (name, bytes) in &first {
        let path = if name == "dataset.json" {
            dataset.clone()
        } else {
            out_dir.join(name)
        };
        let second = std::fs::read(&path).unwrap();
        assert_eq!(&second, bytes, "{name} changed between identical reruns");
    }
    println!(
        "[acceptance] C10 PASS determinism: {} artifacts byte-identical across full pipeline reruns",
        first.len()
    );
}

// keep the Stamped import exercised: split files written by the pipeline
// deserialize through it
#[test]
fn split_files_deserialize_through_the_stamped_wrapper() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        num_patients: 60,
        ..Default::default()
    };
    let dataset = generate(&spec).unwrap();
    let dataset_path = dir.path().join("d.json");
    stgc_core::data_model::save_dataset(&dataset_path, &dataset).unwrap();
    let out_dir = dir.path().join("out");
    let config = pipeline_config(
        &dataset_path,
        &out_dir,
        GraphMethod::Correlation,
        Representation::Cpg,
        0.3,
        2,
    );
    stgc_cli::pipeline::run_graph(&config).unwrap();
    let split: Stamped<stgc_core::SplitPlan> =
        stgc_core::io::read_json(&out_dir.join("split.json")).unwrap();
    assert!(!split.body.test_ids.is_empty());
    assert_eq!(split.meta.config_hash.len(), 64);

    let st: Stamped<STAdjacency> =
        stgc_core::io::read_json(&out_dir.join("st_graph.json")).unwrap();
    let norm = normalize_adjacency(&st.body.matrix).unwrap();
    let ops = OperatorPowers::new(&norm.a_hat, 2).unwrap();
    assert_eq!(ops.num_nodes(), st.body.num_nodes());
    assert_eq!(vectorize_zeropad(&dataset.patients[0]).len(), st.body.num_nodes());
}
