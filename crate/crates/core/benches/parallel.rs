//! Per-record gradient work on the calling thread versus the rayon pool.
//! Run `cargo bench --bench parallel`; with `--no-default-features` only the
//! sequential case is measured.

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use joganic::math::Tensor;
use joganic::model::{loss_graph, ModelConfig, ModelInput, ModelParams};
use joganic::par;
use joganic::template::ComponentVector;

fn batch(cfg: &ModelConfig, n: usize) -> Vec<ModelInput> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    (0..n)
        .map(|_| ModelInput {
            image: Tensor::uniform(&[4, cfg.d_image], 1.0, &mut rng),
            article: (0..120).map(|_| rng.gen_range(4..cfg.vocab_size)).collect(),
            entities: Tensor::uniform(&[3, cfg.d_entity], 1.0, &mut rng),
            caption: (0..12).map(|_| rng.gen_range(4..cfg.vocab_size)).collect(),
            oracle: ComponentVector::oracle([true, false, true, false, true]),
        })
        .collect()
}

fn gradient(params: &ModelParams, input: &ModelInput) -> f32 {
    let mut lg = loss_graph::<f32>(params, input).unwrap();
    lg.graph.evaluate(&params.tensors).unwrap();
    let grads = lg.graph.backward().unwrap();
    grads.iter().map(|(_, g)| g.data()[0]).sum()
}

fn bench(c: &mut Criterion) {
    let cfg = ModelConfig { vocab_size: 800, d_image: 64, d_entity: 64, ..ModelConfig::default() };
    let params = ModelParams::init(&cfg, 0).unwrap();
    let inputs = batch(&cfg, 16);
    let mut group = c.benchmark_group("batch_gradients_16");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| par::map_seq(&inputs, |r| gradient(&params, r)))
    });
    #[cfg(feature = "parallel")]
    group.bench_function("rayon", |b| {
        b.iter(|| par::map_par(&inputs, |r| gradient(&params, r)))
    });
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
