use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ppml_audit::dataset::{preprocess, synth_generate, PreprocessOptions, SplitKind, SynthSpec};
use ppml_audit::dp::{calibrate_sigma, ClippedAccumulator, DEFAULT_DELTA};
use ppml_audit::lira::evaluate_attack;
use ppml_audit::metrics::{dataset_entropy, fdr};
use ppml_audit::nn::{ModelConfig, ModelParams};

fn small_model() -> ModelConfig {
    ModelConfig {
        conv_channels: [4, 8, 16],
        groupnorm_groups: 2,
        hidden_units: 32,
        ..ModelConfig::default().with_classes(4)
    }
}

fn bench_accountant(c: &mut Criterion) {
    c.bench_function("calibrate_sigma eps=1 N=60000", |b| {
        b.iter(|| calibrate_sigma(black_box(1.0), DEFAULT_DELTA, 256.0 / 60000.0, 7050).unwrap())
    });
}

fn bench_gradients(c: &mut Criterion) {
    let spec = SynthSpec {
        train_per_class: 4,
        test_per_class: 1,
        ..SynthSpec::default()
    };
    let ds = synth_generate(&spec, 1).unwrap();
    let samples = preprocess(&ds, SplitKind::Train, PreprocessOptions::default()).unwrap();
    for (name, config) in [("small", small_model()), ("default", ModelConfig::default().with_classes(4))] {
        let params = ModelParams::init(&config, 0).unwrap();
        let batch = samples.subset(&[0, 1, 2, 3]);
        c.bench_function(&format!("per-example gradients x4 ({name})"), |b| {
            b.iter(|| {
                let (_, grads) = params
                    .loss_and_per_example_gradients(&batch.images, &batch.labels)
                    .unwrap();
                let mut acc = ClippedAccumulator::new(params.params(), 1.0).unwrap();
                for mut g in grads {
                    acc.add(&mut g).unwrap();
                }
                black_box(acc.count())
            })
        });
    }
}

fn bench_metrics(c: &mut Criterion) {
    let spec = SynthSpec {
        train_per_class: 100,
        test_per_class: 1,
        ..SynthSpec::default()
    };
    let ds = synth_generate(&spec, 2).unwrap();
    c.bench_function("dataset_entropy 400x32x32x3", |b| b.iter(|| dataset_entropy(black_box(&ds)).unwrap()));
    c.bench_function("fdr 400x32x32x3", |b| b.iter(|| fdr(black_box(&ds)).unwrap()));
    let scores: Vec<f64> = (0..10_000).map(|i| ((i * 7919) % 10_007) as f64).collect();
    let truths: Vec<bool> = (0..10_000).map(|i| i % 2 == 0).collect();
    c.bench_function("evaluate_attack 10k", |b| {
        b.iter(|| evaluate_attack(black_box(&scores), &truths).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_accountant, bench_gradients, bench_metrics
}
criterion_main!(benches);
