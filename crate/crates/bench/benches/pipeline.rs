//! Benchmarks for the hot paths at the reference problem size
//! (F = 80 features, T = 14 steps, FT = 1120 graph nodes).

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stgc_core::association::association_matrix;
use stgc_core::data_model::FeatureKind;
use stgc_core::gcnn::{
    backward, build_operator, forward, ModelConfig, ModelParams, Phase, Variant,
};
use stgc_core::graphs::TimeRef;
use stgc_core::hgd_dtw::dtw_hgd;
use stgc_core::smoothness::{greedy_graph, normalized_covariance};
use stgc_core::st_graph::build_cpg;

const F: usize = 80;
const T: usize = 14;

fn mixed_kinds(rng: &mut ChaCha8Rng) -> Vec<FeatureKind> {
    (0..F)
        .map(|_| {
            if rng.gen_bool(0.4) {
                FeatureKind::Binary
            } else {
                FeatureKind::Continuous
            }
        })
        .collect()
}

fn mixed_matrix(rng: &mut ChaCha8Rng, kinds: &[FeatureKind], cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((kinds.len(), cols), |(f, _)| match kinds[f] {
        FeatureKind::Binary => f64::from(u8::from(rng.gen_bool(0.3))),
        FeatureKind::Continuous => rng.gen_range(-2.0..2.0),
    })
}

fn sparse_feature_graph(rng: &mut ChaCha8Rng, density: f64) -> Array2<f64> {
    let mut a = Array2::zeros((F, F));
    for i in 0..F {
        for j in (i + 1)..F {
            if rng.gen_bool(density) {
                let w: f64 = rng.gen_range(0.1..1.0);
                a[(i, j)] = w;
                a[(j, i)] = w;
            }
        }
    }
    a
}

fn bench_association(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let kinds = mixed_kinds(&mut rng);
    let x = mixed_matrix(&mut rng, &kinds, 500);
    c.bench_function("association_matrix F=80 K=500", |b| {
        b.iter(|| association_matrix(black_box(&x), &kinds, TimeRef::Static).unwrap())
    });
}

fn bench_dtw(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let xi = Array2::from_shape_fn((40, T), |_| rng.gen_range(-2.0..2.0));
    let xj = Array2::from_shape_fn((40, T), |_| rng.gen_range(-2.0..2.0));
    c.bench_function("dtw_hgd P=40 T=14", |b| {
        b.iter(|| {
            dtw_hgd(
                black_box(&xi),
                black_box(&xj),
                (FeatureKind::Continuous, FeatureKind::Continuous),
            )
            .unwrap()
        })
    });
}

fn bench_greedy(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Array2::from_shape_fn((F, 200), |_| rng.gen_range(-2.0..2.0));
    let cov = normalized_covariance(&x).unwrap();
    c.bench_function("greedy_graph F=80 to 150 edges", |b| {
        b.iter(|| greedy_graph(black_box(&cov), 150, TimeRef::Static).unwrap())
    });
}

fn bench_gcnn(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let feature_graph = sparse_feature_graph(&mut rng, 0.05);
    let st = build_cpg(&feature_graph, T).unwrap();
    let config = ModelConfig {
        variant: Variant::Gcnn2,
        layers: 2,
        hidden_width: 8,
        poly_order: 3,
        leaky_alpha: 0.01,
        dropout: 0.15,
        learning_rate: 0.05,
        lr_decay: 1e-3,
        epochs: 1,
        batch_size: 32,
        seed: 4,
    };
    let ops = build_operator(&st, &config).unwrap();
    let params = ModelParams::init(&config, F * T, &mut rng);
    let x = Array1::from_shape_fn(F * T, |_| rng.gen_range(-1.0..1.0));

    c.bench_function("forward eval FT=1120 L=2 K=3", |b| {
        b.iter(|| forward(&params, &config, &ops, black_box(&x), Phase::Eval).unwrap())
    });

    c.bench_function("forward+backward train FT=1120 L=2 K=3", |b| {
        b.iter(|| {
            let mut train_rng = ChaCha8Rng::seed_from_u64(9);
            let trace = forward(
                &params,
                &config,
                &ops,
                black_box(&x),
                Phase::Train {
                    rng: &mut train_rng,
                },
            )
            .unwrap();
            backward(&trace, &params, &config, &ops, 1).unwrap()
        })
    });
}

fn bench_operator_assembly(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let feature_graph = sparse_feature_graph(&mut rng, 0.05);
    let config = ModelConfig {
        variant: Variant::Gcnn2,
        layers: 1,
        hidden_width: 1,
        poly_order: 3,
        leaky_alpha: 0.01,
        dropout: 0.0,
        learning_rate: 0.05,
        lr_decay: 0.0,
        epochs: 1,
        batch_size: 1,
        seed: 5,
    };
    c.bench_function("build_cpg + normalize + powers FT=1120 K=3", |b| {
        b.iter(|| {
            let st = build_cpg(black_box(&feature_graph), T).unwrap();
            build_operator(&st, &config).unwrap()
        })
    });
}

criterion_group!(
    benches,
    bench_association,
    bench_dtw,
    bench_greedy,
    bench_gcnn,
    bench_operator_assembly
);
criterion_main!(benches);
