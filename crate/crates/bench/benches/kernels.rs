use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flexact::activations::ActivationKind;
use flexact::nn::{ConvAutoencoder, ModelSpec, Network, StackedLstm};
use flexact::{FlexActivation, Tensor};

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn activations(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let z: Vec<f64> = (0..4096).map(|_| rng.random_range(-4.0..4.0)).collect();
    let g = vec![1.0; z.len()];
    for kind in [ActivationKind::PSigRamp, ActivationKind::PE2Relu] {
        let act = FlexActivation::new(kind, z.len(), false);
        c.bench_function(&format!("{kind} forward 4096"), |b| b.iter(|| act.forward(black_box(&z)).unwrap()));
        c.bench_function(&format!("{kind} backward 4096"), |b| b.iter(|| act.backward(black_box(&z), &g).unwrap()));
    }
}

fn lstm(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = StackedLstm::init(&ModelSpec::lstm(&[7, 10], ActivationKind::PSigRamp), &mut rng).unwrap();
    let x = random(&[10, 7], &mut rng);
    c.bench_function("lstm [7,10] window forward", |b| b.iter(|| model.forward(black_box(&x)).unwrap()));
    c.bench_function("lstm [7,10] window backward", |b| {
        b.iter(|| {
            let (y, cache) = model.forward_cached(&x).unwrap();
            let mut grads = model.clone();
            model.backward(&cache, &y, &mut grads).unwrap();
            grads
        })
    });
}

fn cae(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = ConvAutoencoder::init(&ModelSpec::cae1(ActivationKind::PE2Relu), &mut rng).unwrap();
    let x = random(&[1, 28, 28], &mut rng);
    c.bench_function("cae1 forward", |b| b.iter(|| model.forward(black_box(&x)).unwrap()));
    c.bench_function("cae1 forward+backward", |b| {
        b.iter(|| {
            let (y, cache) = model.forward_cached(&x).unwrap();
            let mut grads = model.clone();
            model.backward(&cache, &y, &mut grads).unwrap();
            grads
        })
    });
}

criterion_group!(benches, activations, lstm, cae);
criterion_main!(benches);
