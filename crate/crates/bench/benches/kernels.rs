use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use trear_core::model::ClipTensors;
use trear_core::tensor::kernels::{im2col, matmul_acc, ConvGeometry};
use trear_core::{Graph, Mode, ModelConfig, NdArray, RngStream, Trear};

fn ramp(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| ((i * 7919) % 1000) as f64 / 1000.0)
        .collect()
}

fn matmul(c: &mut Criterion) {
    let (m, n, p) = (64, 64, 256);
    let a = ramp(m * n);
    let b = ramp(n * p);
    c.bench_function("matmul 64x64x256", |bench| {
        bench.iter(|| {
            let mut out = vec![0.0; m * p];
            matmul_acc(black_box(&a), black_box(&b), &mut out, m, n, p);
            out
        })
    });
}

fn conv_unfold(c: &mut Criterion) {
    let g = ConvGeometry {
        channels: 3,
        height: 56,
        width: 56,
        kernel: 3,
        stride: 2,
        pad: 1,
    };
    let image = ramp(3 * 56 * 56);
    c.bench_function("im2col 3x56x56 k3 s2", |bench| {
        bench.iter(|| {
            let mut cols = vec![0.0; g.col_rows() * g.col_cols()];
            im2col(black_box(&image), &g, &mut cols);
            cols
        })
    });
}

fn train_step(c: &mut Criterion) {
    let config = ModelConfig {
        d_model: 64,
        frames: 8,
        num_classes: 4,
        ..ModelConfig::default()
    };
    let model = Trear::new(config, 0).unwrap();
    let frames = |seed| {
        NdArray::new(
            vec![8, 3, 56, 56],
            ramp(8 * 3 * 56 * 56 + seed)[seed..].to_vec(),
        )
        .unwrap()
    };
    let input = ClipTensors {
        rgb: frames(0),
        depth: frames(1),
    };
    c.bench_function("forward+backward d64 k8 56px", |bench| {
        bench.iter(|| {
            let graph = Graph::new();
            let mut rng = RngStream::new(0, "dropout");
            let out = model
                .forward(&graph, &input, Mode::Train, &mut rng)
                .unwrap();
            let loss = out.loss(1).unwrap();
            graph
                .backward(loss)
                .unwrap()
                .param_grads(model.params())
                .unwrap()
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = matmul, conv_unfold, train_step
}
criterion_main!(benches);
