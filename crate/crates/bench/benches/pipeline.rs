use criterion::{black_box, criterion_group, criterion_main, Criterion};
use polfuse::metrics::evaluate_pair;
use polfuse::net::{self, ModelParams, NetworkConfig};
use polfuse::stokes::{demosaic_dofp, stokes_from_angles, MosaicPattern};
use polfuse::synth::polarization_mosaic;
use polfuse::tensor::BatchNormMode;
use polfuse_bench::{ramp_plane, ramp_var};

fn stokes(c: &mut Criterion) {
    let m = polarization_mosaic(256, 256, 1, MosaicPattern::default()).unwrap();
    c.bench_function("demosaic_stokes_256", |b| {
        b.iter(|| black_box(stokes_from_angles(&demosaic_dofp(&m).unwrap())))
    });
}

fn network(c: &mut Criterion) {
    let p = ModelParams::init(&NetworkConfig::small(), 1).unwrap();
    let (s0, dolp) = (ramp_var(&[1, 1, 64, 64], 5), ramp_var(&[1, 1, 64, 64], 6));
    c.bench_function("small_net_forward_64", |b| {
        b.iter(|| black_box(net::forward(&p.bind::<f32>(BatchNormMode::Eval, false), &s0, &dolp).unwrap()))
    });
    c.bench_function("small_net_train_step_64", |b| {
        b.iter(|| {
            let ctx = p.bind::<f32>(BatchNormMode::Train, true);
            let y = net::forward(&ctx, &s0, &dolp).unwrap().mean();
            black_box(y.backward().unwrap())
        })
    });
}

fn metrics(c: &mut Criterion) {
    let (f, a, b) = (ramp_plane(128, 128, 7), ramp_plane(128, 128, 8), ramp_plane(128, 128, 9));
    c.bench_function("evaluate_pair_128", |bench| bench.iter(|| black_box(evaluate_pair(&f, &a, &b).unwrap())));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = stokes, network, metrics
}
criterion_main!(benches);
