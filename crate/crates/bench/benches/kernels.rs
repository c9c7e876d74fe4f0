use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;
use vinrs_bench::four_rooms_graph;
use vinrs_core::messages::{message_labels, OptimalityModel};
use vinrs_core::numcore::{ops, Adam, Tensor};
use vinrs_core::rl::{train, TrainConfig};
use vinrs_core::vinrs::{VinConfig, VinNetwork};

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn numcore(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&mut rng, &[3, 13, 13]);
    let k = random(&mut rng, &[8, 3, 3, 3]);
    let b = random(&mut rng, &[8]);
    let g = random(&mut rng, &[8, 13, 13]);
    c.bench_function("conv2d 3x13x13 -> 8, 3x3", |bch| {
        bch.iter(|| ops::conv2d(black_box(&x), black_box(&k), Some(&b)).unwrap())
    });
    c.bench_function("conv2d_backward 3x13x13 -> 8, 3x3", |bch| {
        bch.iter(|| ops::conv2d_backward(black_box(&x), black_box(&k), black_box(&g)).unwrap())
    });
    let q = random(&mut rng, &[4, 13, 13]);
    c.bench_function("channel_max 4x13x13", |bch| bch.iter(|| ops::channel_max(black_box(&q)).unwrap()));
    let w = random(&mut rng, &[32, 4 * 13 * 13]);
    let bias = random(&mut rng, &[32]);
    let flat = random(&mut rng, &[4 * 13 * 13]);
    c.bench_function("dense 676 -> 32", |bch| {
        bch.iter(|| ops::dense(black_box(&flat), black_box(&w), &bias).unwrap())
    });
}

fn network(c: &mut Criterion) {
    let (world, graph, images) = four_rooms_graph(6, 80);
    let net = VinNetwork::new(VinConfig::default(), world.height(), world.width(), 3).unwrap();
    let obs = world.render(world.start_state());
    c.bench_function("vin forward K=26", |bch| bch.iter(|| net.forward(black_box(&obs)).unwrap()));

    let model = OptimalityModel::from_graph(&graph, 1.0).unwrap();
    c.bench_function(&format!("message_labels {} nodes", graph.num_nodes()), |bch| {
        bch.iter(|| message_labels(black_box(&graph), &model).unwrap())
    });

    let labels = message_labels(&graph, &model).unwrap().label;
    let mut group = c.benchmark_group("training");
    group.sample_size(10);
    group.bench_function(format!("train_step {} nodes", graph.num_nodes()), |bch| {
        bch.iter_batched(
            || (net.clone(), Adam::new(1e-3)),
            |(mut n, mut opt)| n.train_step(&images, &graph, &labels, &mut opt).unwrap(),
            BatchSize::LargeInput,
        )
    });
    let cfg = TrainConfig {
        episodes: 20,
        ..TrainConfig::default()
    };
    group.bench_function("actor-critic 20 episodes", |bch| {
        bch.iter(|| train(black_box(&world), &cfg, 1).unwrap())
    });
    group.finish();
}

criterion_group!(benches, numcore, network);
criterion_main!(benches);
