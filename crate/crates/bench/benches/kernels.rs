//! Microbenchmarks for the hot paths: matmul at training shapes, one full
//! batched BPTT step at the desk preset, scene generation, and the
//! streaming runner used by evaluation and interventions.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use glimpse_core::model::{forward_episode, ModelConfig, ModelParams};
use glimpse_core::numerics::Tensor2;
use glimpse_core::oracle::{fallback_stream, run_baselines};
use glimpse_core::worldgen::{generate_scene, sample_episode};

fn bench_matmul(c: &mut Criterion) {
    // gate-matrix shape of the desk preset: [64x256] . [256x128]
    let a = Tensor2::<f32>::from_fn(64, 256, |r, k| ((r * 7 + k) % 13) as f32 * 0.01);
    let b = Tensor2::<f32>::from_fn(256, 128, |r, k| ((r + k * 3) % 11) as f32 * 0.02);
    c.bench_function("matmul_64x256x128_f32", |bench| {
        bench.iter(|| a.matmul(&b).unwrap())
    });
}

fn bench_train_batch(c: &mut Criterion) {
    let mut cfg = ModelConfig::desk();
    cfg.total_batches = 1;
    c.bench_function("train_one_desk_batch", |bench| {
        bench.iter_batched(
            || cfg,
            |cfg| glimpse_core::model::train::<f32>(cfg, &Default::default()).unwrap(),
            BatchSize::PerIteration,
        )
    });
}

fn bench_worldgen(c: &mut Criterion) {
    c.bench_function("generate_scene_plus_episode_60", |bench| {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        bench.iter(|| {
            let scene = generate_scene(&mut rng, None).unwrap();
            sample_episode(&scene, 60, &mut rng, None).unwrap()
        })
    });
}

fn bench_runner(c: &mut Criterion) {
    let params = ModelParams::<f32>::init(ModelConfig::desk(), 1);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let scene = generate_scene(&mut rng, None).unwrap();
    let episode = sample_episode(&scene, 100, &mut rng, None).unwrap();
    c.bench_function("runner_episode_100_steps", |bench| {
        bench.iter(|| forward_episode(&params, &episode, false).unwrap())
    });
    c.bench_function("oracle_episode_100_steps", |bench| {
        let mut fb = fallback_stream(scene.seed);
        bench.iter(|| run_baselines(&episode, &mut fb))
    });
}

criterion_group!(
    benches,
    bench_matmul,
    bench_train_batch,
    bench_worldgen,
    bench_runner
);
criterion_main!(benches);
