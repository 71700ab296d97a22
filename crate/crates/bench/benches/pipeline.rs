//! Benchmarks for the hot paths: moment summaries, the estimator
//! pipeline, the batch randomizers, and a full simulation replicate.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use strata_infer::assign::{simple_randomize, stratified_block_randomize, RandomizerConfig, Scheme};
use strata_infer::data::{dataset_from_numeric, summarize, Arm, Dataset};
use strata_infer::dgp::{Model, ModelSpec, Setting};
use strata_infer::estimate::EstimatorKind;
use strata_infer::pipeline::{analyze, AnalysisOptions, SparseMode};
use strata_infer::rng::substream;
use strata_infer::sim::{run_cell, CanonicalPi, SimulationSpec};
use strata_infer::variance::VarianceFamily;

fn model_dataset(n: usize) -> Dataset {
    let model = ModelSpec::standard(Model::M1, Setting::S1).with_n(n);
    let mut rng = substream(7, &[]);
    let draws: Vec<_> = (0..n).map(|_| model.draw_unit(&mut rng)).collect();
    let raw: Vec<u32> = draws.iter().map(|d| d.stratum1).collect();
    let arms = simple_randomize(&raw, &CanonicalPi(&model.design_pi()), 3).unwrap();
    let y: Vec<f64> = draws
        .iter()
        .zip(&arms)
        .map(|(d, a)| if *a == Arm::Treated { d.y1 } else { d.y0 })
        .collect();
    let mut x = Vec::with_capacity(2 * n);
    for d in &draws {
        x.extend_from_slice(d.x_adjust(2));
    }
    dataset_from_numeric(&raw, &arms, &y, &x, 2).unwrap().0
}

fn bench_summarize(c: &mut Criterion) {
    let data = model_dataset(500);
    c.bench_function("summarize_n500_p2", |b| {
        b.iter(|| black_box(summarize(black_box(&data))))
    });
}

fn bench_analyze(c: &mut Criterion) {
    let data = model_dataset(500);
    let opts = AnalysisOptions {
        estimators: vec![
            EstimatorKind::DiM,
            EstimatorKind::AdjUnweighted,
            EstimatorKind::AdjWeighted,
        ],
        families: vec![VarianceFamily::NewDf, VarianceFamily::LegacyMa],
        sparse: SparseMode::CompleteCase,
        level: 0.95,
        clusters: None,
    };
    c.bench_function("analyze_full_grid_n500", |b| {
        b.iter(|| black_box(analyze(black_box(&data), None, &opts).unwrap()))
    });
}

fn bench_randomizers(c: &mut Criterion) {
    let model = ModelSpec::standard(Model::M1, Setting::S3);
    let mut rng = substream(11, &[]);
    let strata: Vec<u32> = (0..4000).map(|_| model.draw_unit(&mut rng).stratum1).collect();
    let pi = model.design_pi();
    c.bench_function("simple_randomize_n4000", |b| {
        b.iter_batched(
            || strata.clone(),
            |s| black_box(simple_randomize(&s, &CanonicalPi(&pi), 5).unwrap()),
            BatchSize::SmallInput,
        )
    });
    c.bench_function("stratified_block_n4000", |b| {
        b.iter_batched(
            || strata.clone(),
            |s| black_box(stratified_block_randomize(&s, &CanonicalPi(&pi), 5).unwrap()),
            BatchSize::SmallInput,
        )
    });
}

fn bench_replicates(c: &mut Criterion) {
    let model = ModelSpec::standard(Model::M1, Setting::S1);
    let mut spec = SimulationSpec::new(
        model,
        RandomizerConfig {
            scheme: Scheme::SimpleStratified,
            ..Default::default()
        },
    );
    spec.estimators = vec![EstimatorKind::DiM, EstimatorKind::AdjWeighted];
    spec.sparse_mode = SparseMode::CompleteCase;
    spec.replications = 8;
    c.bench_function("run_cell_8reps_n500", |b| {
        b.iter(|| black_box(run_cell(black_box(&spec)).unwrap()))
    });
}

criterion_group!(
    benches,
    bench_summarize,
    bench_analyze,
    bench_randomizers,
    bench_replicates
);
criterion_main!(benches);
