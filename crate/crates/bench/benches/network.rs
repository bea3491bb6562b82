use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gridswitch_core::nn::Mlp;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn bench_mlp(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = Mlp::init(&[849, 256, 256, 187], false, &mut rng);
    let mut group = c.benchmark_group("mlp_849_256_256_187");
    for batch in [1usize, 32] {
        let x = Array2::from_elem((batch, 849), 0.1);
        group.bench_with_input(BenchmarkId::new("forward", batch), &x, |b, x| {
            b.iter(|| net.forward(black_box(x)).unwrap())
        });
        let (out, cache) = net.forward(&x).unwrap();
        let grad = Array2::from_elem(out.dim(), 1.0 / batch as f64);
        group.bench_with_input(BenchmarkId::new("backward", batch), &grad, |b, g| {
            b.iter(|| net.backward(&cache, black_box(g)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_mlp);
criterion_main!(benches);
