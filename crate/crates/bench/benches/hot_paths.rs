use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use genplan_bench::task;
use genplan_core::derived::{AugmentationSpec, Augmenter};
use genplan_core::generators;
use genplan_core::gnn::{backward, forward, init_params, initial_embeddings, GnnHyper};
use genplan_core::state_space::expand;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn network(c: &mut Criterion) {
    let t = task("blocks", &generators::blocks(8, 0));
    let aug = Augmenter::new(&t.domain, &AugmentationSpec::goal_only()).unwrap();
    let state = aug.augment(&t.initial_state(), &t.instance.goal);
    let n = t.instance.objects.len();
    let mut group = c.benchmark_group("gnn");
    for (k, layers) in [(16, 4), (16, 8), (32, 8)] {
        let params = init_params(aug.domain(), GnnHyper { k, layers, alpha: 8.0, seed: 0 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let frame = initial_embeddings(n, k, &mut rng);
        group.bench_function(format!("forward k{k} L{layers}"), |b| {
            b.iter(|| forward(&params, &state, &frame).unwrap().value())
        });
        group.bench_function(format!("forward+backward k{k} L{layers}"), |b| {
            b.iter_batched(
                || forward(&params, &state, &frame).unwrap(),
                |tape| backward(&tape, &params).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn state_space(c: &mut Criterion) {
    let mut group = c.benchmark_group("expand");
    group.sample_size(10);
    for (name, t) in [
        ("gripper-6", task("gripper", &generators::gripper(6, "rooma"))),
        ("blocks-6", task("blocks", &generators::blocks(6, 0))),
    ] {
        group.bench_function(name, |b| b.iter(|| expand(&t, 1_000_000).unwrap().len()));
    }
    group.finish();
}

fn closure(c: &mut Criterion) {
    let t = task("blocks", &generators::blocks(12, 0));
    let aug = Augmenter::new(&t.domain, &AugmentationSpec::preset("blocks-above").unwrap()).unwrap();
    let init = t.initial_state();
    c.bench_function("augment blocks-above 12", |b| b.iter(|| aug.augment(&init, &t.instance.goal).len()));
}

criterion_group!(benches, network, state_space, closure);
criterion_main!(benches);
