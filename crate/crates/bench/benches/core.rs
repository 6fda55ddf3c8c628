use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use lumen_bench::dark_image;
use lumen_core::fourier::{forward_transform, inverse_transform};
use lumen_core::inference::{enhance_adaptive, InferenceConfig, PersonalizationTarget};
use lumen_core::nn::Architecture;
use lumen_core::rl::{scorer_by_name, ActionGrid, Environment, EpisodeConfig, RewardWeights};
use lumen_core::PolicyValueNet;

fn fft(c: &mut Criterion) {
    let mut group = c.benchmark_group("fft_roundtrip");
    for size in [64, 256, 600] {
        let plane = dark_image(size).luminance();
        group.bench_with_input(BenchmarkId::from_parameter(size), &plane, |b, p| {
            b.iter(|| inverse_transform(&forward_transform(p).unwrap()).unwrap())
        });
    }
    group.finish();
}

fn net_forward(c: &mut Criterion) {
    let net = PolicyValueNet::init(Architecture::default(), 0).unwrap();
    let mut group = c.benchmark_group("net_forward");
    for size in [32, 64] {
        let image = dark_image(size);
        group
            .bench_with_input(BenchmarkId::from_parameter(size), &image, |b, img| b.iter(|| net.forward(img).unwrap()));
    }
    group.finish();
}

fn env_step(c: &mut Criterion) {
    let image = dark_image(64);
    let scorer = scorer_by_name("proxy").unwrap();
    let actions = ActionGrid::filled(64, 64, 20).unwrap();
    c.bench_function("env_step_64", |b| {
        b.iter_batched(
            || Environment::reset(&image, EpisodeConfig::default(), RewardWeights::default(), scorer.clone()).unwrap(),
            |mut env| env.step(&actions).unwrap(),
            criterion::BatchSize::SmallInput,
        )
    });
}

fn adaptive_inference(c: &mut Criterion) {
    let net = PolicyValueNet::init(Architecture::default(), 0).unwrap();
    let image = dark_image(64);
    let target = PersonalizationTarget::FixedIterations(5);
    c.bench_function("enhance_5_steps_64", |b| {
        b.iter(|| enhance_adaptive(&net, &image, &target, &InferenceConfig::default()).unwrap())
    });
}

criterion_group!(benches, fft, net_forward, env_step, adaptive_inference);
criterion_main!(benches);
