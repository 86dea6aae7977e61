use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use sprl_core::autodiff::Graph;
use sprl_core::dataset::clip_and_pad;
use sprl_core::ensemble::vote;
use sprl_core::evaluation::{confusions, macro_f1, mcnemar, per_property_prf};
use sprl_core::model::ModelInput;
use sprl_core::synthetic::lexical_corpus;
use sprl_core::training::{loss_and_gradients, Trainer};
use sprl_core::{Mode, ModelConfig, ModelParams, PredictionSet, Split, Tensor, TrainConfig};

/// Deterministic pseudo-random values in [-1, 1).
fn noise(i: usize) -> f32 {
    let x = (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 40;
    x as f32 / (1u64 << 23) as f32 - 1.0
}

/// A full-size model: T=30, 300-d inputs, 18 properties.
fn full_size() -> (ModelParams, ModelInput, Vec<bool>, Vec<f32>) {
    let config = ModelConfig::new(Mode::Multilabel, 300, 18);
    let params = ModelParams::initialize(config.clone()).unwrap();
    let plan = clip_and_pad(24, &[5], (9, 11), config.max_len).unwrap();
    let inputs = Tensor::from_fn(config.max_len, 300, |r, c| {
        if plan.slots[r].is_some() {
            noise(r * 300 + c)
        } else {
            0.0
        }
    });
    let binary = (0..18).map(|p| p % 3 == 0).collect();
    let likert = (0..18).map(|p| 1.0 + (p % 5) as f32).collect();
    (params, ModelInput { inputs, tags: plan.tags }, binary, likert)
}

fn model(c: &mut Criterion) {
    let (params, input, binary, likert) = full_size();
    let config = TrainConfig::default();
    c.bench_function("forward_full_size", |b| {
        b.iter(|| params.predict_input(black_box(&input)).unwrap())
    });
    c.bench_function("forward_backward_full_size", |b| {
        b.iter(|| loss_and_gradients(&params, black_box(&input), &binary, &likert, &config).unwrap())
    });
}

fn matmul(c: &mut Criterion) {
    let a = Tensor::from_fn(128, 128, |r, c| noise(r * 128 + c));
    let m = Tensor::from_fn(128, 128, |r, c| noise(7 + r * 128 + c));
    c.bench_function("matmul_128", |b| {
        b.iter(|| {
            let mut g = Graph::<f32>::new(&[]);
            let x = g.input(a.clone());
            let y = g.input(m.clone());
            let z = g.matmul(x, y).unwrap();
            black_box(g.value(z).data()[0])
        })
    });
}

fn epoch(c: &mut Criterion) {
    let corpus = lexical_corpus(64, 16, 0.1, 1, 3);
    let train = corpus.prepared(Split::Train, 12).unwrap();
    let config = ModelConfig {
        max_len: 12,
        hidden: 16,
        attention_dim: 16,
        ..ModelConfig::new(Mode::Multilabel, 16, 3)
    };
    let init = ModelParams::initialize(config).unwrap();
    c.bench_function("train_epoch_small", |b| {
        b.iter_batched(
            || Trainer::new(TrainConfig::default(), init.clone()).unwrap(),
            |mut t| t.run_epoch(&train).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn metrics(c: &mut Criterion) {
    let (n, p) = (2000, 18);
    let gold: Vec<Vec<bool>> = (0..n).map(|i| (0..p).map(|j| noise(i * p + j) > 0.3).collect()).collect();
    let pred: Vec<Vec<bool>> = (0..n).map(|i| (0..p).map(|j| noise(5 + i * p + j) > 0.2).collect()).collect();
    let other: Vec<Vec<bool>> = (0..n).map(|i| (0..p).map(|j| noise(9 + i * p + j) > 0.1).collect()).collect();
    c.bench_function("macro_f1_2000x18", |b| {
        b.iter(|| macro_f1(&per_property_prf(&confusions(black_box(&pred), &gold).unwrap())))
    });
    c.bench_function("mcnemar_2000x18", |b| {
        b.iter(|| mcnemar(black_box(&pred), &other, &gold).unwrap())
    });

    let sets: Vec<PredictionSet> = (0..50)
        .map(|m| PredictionSet {
            mode: Mode::Multilabel,
            properties: (0..p).map(|j| format!("p{j}")).collect(),
            rows: (0..n)
                .map(|i| sprl_core::predictions::PredictionRow {
                    id: format!("e{i}"),
                    values: (0..p).map(|j| (noise(m * 97 + i * p + j) + 1.0) / 2.0).collect(),
                })
                .collect(),
        })
        .collect();
    c.bench_function("vote_50x2000x18", |b| b.iter(|| vote(black_box(&sets)).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = model, matmul, epoch, metrics
}
criterion_main!(benches);
