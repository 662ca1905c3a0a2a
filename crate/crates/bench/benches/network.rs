use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use nepsent::mcnn::{build_channel, train_channel};
use nepsent::nn::{ChannelArch, Gradients, Mode, Network};
use nepsent::{FeatureMatrix, SentimentClass, TrainConfig};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const INPUT_LEN: usize = 403;

fn input(rng: &mut StdRng) -> Vec<f64> {
    (0..INPUT_LEN).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn forward_backward(c: &mut Criterion) {
    let mut rng = StdRng::seed_from_u64(1);
    let mut group = c.benchmark_group("channel");
    for k in [1, 4] {
        let net = Network::new(ChannelArch::standard(k, INPUT_LEN), &mut rng).unwrap();
        let x = input(&mut rng);
        group.bench_function(format!("forward_k{k}"), |b| b.iter(|| net.predict_probs(&x).unwrap()));
        group.bench_function(format!("forward_backward_k{k}"), |b| {
            b.iter_batched(
                || Gradients::zeros_for(&net),
                |mut grads| {
                    let cache = net.forward(&x, Mode::Train, &mut rng).unwrap();
                    let mut d = cache.probs.clone();
                    d[0] -= 1.0;
                    net.backward(&cache, &d, &mut grads);
                    grads
                },
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

fn epoch(c: &mut Criterion) {
    let mut rng = StdRng::seed_from_u64(2);
    let mut data = FeatureMatrix::new(INPUT_LEN);
    for i in 0..64 {
        let label = SentimentClass::from_index(i % 3).unwrap();
        data.push(&input(&mut rng), label).unwrap();
    }
    let cfg = TrainConfig {
        epochs: 1,
        ..Default::default()
    };
    let mut group = c.benchmark_group("epoch");
    group.sample_size(10);
    group.bench_function("k3_64_rows", |b| {
        b.iter_batched(
            || build_channel(3, 0).unwrap(),
            |mut ch| train_channel(&mut ch, &data, &cfg).unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, forward_backward, epoch);
criterion_main!(benches);
