use criterion::{black_box, criterion_group, criterion_main, Criterion};
use mae_bench::{batch_targets, default_model, swiss_roll_points};
use mae_core::trainer::{batch_gradients, precompute_distances, within_batch_pairs};
use mae_core::{GlobalMode, LocalMode, LossWeights};
use ndarray::s;

fn weights(local_mode: LocalMode) -> LossWeights {
    LossWeights {
        lambda_global: 100.0,
        lambda_local: 10.0,
        lambda_diag: 1e-3,
        global_mode: GlobalMode::Relative,
        local_mode,
    }
}

fn bench_training(c: &mut Criterion) {
    let points = swiss_roll_points(500);
    let d = precompute_distances(points.view(), 10).unwrap();
    let model = default_model(&points);
    let batch = points.slice(s![..128, ..]).to_owned();
    let dm = batch_targets(&d, 128);
    let pairs = within_batch_pairs(128);

    c.bench_function("encode_decode_batch_128", |b| {
        b.iter(|| {
            let z = model.encode_batch(black_box(batch.view())).unwrap();
            model.decode_batch(z.view()).unwrap()
        })
    });

    let mut group = c.benchmark_group("batch_gradients_128");
    for (name, mode, ll) in [
        ("global_only", LocalMode::None, 0.0),
        ("isometric", LocalMode::Isometric, 10.0),
    ] {
        let w = weights(mode);
        group.bench_function(name, |b| {
            b.iter(|| batch_gradients(&model, batch.clone(), &dm, pairs.clone(), &w, 100.0, ll).unwrap())
        });
    }
    group.finish();

    let z = model.encode_batch(batch.view()).unwrap();
    c.bench_function("decoder_pullback", |b| {
        b.iter(|| model.decoder_pullback(black_box(z.row(0))).unwrap())
    });
}

criterion_group!(benches, bench_training);
criterion_main!(benches);
