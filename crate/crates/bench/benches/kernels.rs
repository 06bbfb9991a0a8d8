use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use kneeaug::augment::{apply_affine, draw_affine, AffinePolicy};
use kneeaug::imagecore::equalize_histogram;
use kneeaug::nn::{
    compound_scale, standard_architecture, Activation, AdamConfig, ConvLayer, LayerStack, Padding,
    ScalingConfig, TrainState,
};
use kneeaug::pipeline::phantom_knee;
use kneeaug::Tensor4;

fn ramp_tensor(dims: [usize; 4]) -> Tensor4 {
    let n = dims.iter().product::<usize>();
    Tensor4::from_vec(
        dims,
        (0..n).map(|i| ((i * 37) % 101) as f64 / 101.0).collect(),
    )
    .unwrap()
}

fn conv(c: &mut Criterion) {
    let mut layer = ConvLayer::new(16, 32, (3, 3), 1, Padding::Same, 1, Activation::Relu).unwrap();
    layer
        .weight
        .iter_mut()
        .enumerate()
        .for_each(|(i, w)| *w = ((i % 7) as f64 - 3.0) * 0.05);
    let x = ramp_tensor([4, 16, 16, 16]);
    c.bench_function("conv3x3_16to32_16px_batch4", |b| {
        b.iter(|| layer.forward(black_box(&x)).unwrap())
    });
}

fn equalize(c: &mut Criterion) {
    let img = phantom_knee(2, 7);
    c.bench_function("equalize_224", |b| {
        b.iter(|| equalize_histogram(black_box(&img)))
    });
}

fn affine(c: &mut Criterion) {
    let img = phantom_knee(2, 7);
    let draw = draw_affine(&AffinePolicy::default(), 1, 2, 3);
    c.bench_function("affine_224", |b| {
        b.iter(|| apply_affine(black_box(&img), &draw))
    });
}

fn train_step(c: &mut Criterion) {
    let dims = compound_scale(&ScalingConfig::default());
    let net = LayerStack::from_blocks(
        (1, dims.resolution, dims.resolution),
        &standard_architecture(&dims, 5),
        1,
    )
    .unwrap();
    let mut state = TrainState::new(net, AdamConfig::default());
    let x = ramp_tensor([16, 1, dims.resolution, dims.resolution]);
    let labels: Vec<usize> = (0..16).map(|i| i % 5).collect();
    c.bench_function("train_step_batch16", |b| {
        b.iter(|| {
            let (_, tape) = state.net.forward(&x, true).unwrap();
            let (_, grads) = state.net.backward(&tape, &labels).unwrap();
            kneeaug::nn::adam_step(&mut state, &grads).unwrap();
        })
    });
}

criterion_group!(benches, conv, equalize, affine, train_step);
criterion_main!(benches);
