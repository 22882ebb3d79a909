use proptest::prelude::*;
use trear_core::rng::RngStream;
use trear_core::tensor::gradcheck::{check_function, GradCheckOptions};
use trear_core::{Error, Graph, Mode, NdArray, Result, Tensor};

fn arr(shape: &[usize], data: &[f64]) -> NdArray {
    NdArray::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn random(rng: &mut RngStream, shape: &[usize], lo: f64, hi: f64) -> NdArray {
    let n = shape.iter().product();
    NdArray::new(
        shape.to_vec(),
        (0..n).map(|_| rng.uniform(lo, hi)).collect(),
    )
    .unwrap()
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
    }
}

fn naive_matmul(a: &NdArray, b: &NdArray) -> Vec<f64> {
    let (m, n) = a.dims2().unwrap();
    let (_, p) = b.dims2().unwrap();
    let mut out = vec![0.0; m * p];
    for i in 0..m {
        for j in 0..p {
            for k in 0..n {
                out[i * p + j] += a.get2(i, k) * b.get2(k, j);
            }
        }
    }
    out
}

#[test]
fn matmul_by_identity() {
    let g = Graph::new();
    let a = g.constant(arr(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let i = g.constant(arr(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    assert_eq!(a.matmul(&i).unwrap().value().data(), &[1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn matmul_matches_triple_loop() {
    let a = arr(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
    let b = arr(&[2, 2], &[5.0, 6.0, 7.0, 8.0]);
    let oracle = naive_matmul(&a, &b);
    assert_eq!(oracle, vec![19.0, 22.0, 43.0, 50.0]);
    let g = Graph::new();
    let c = g.constant(a).matmul(&g.constant(b)).unwrap();
    assert_eq!(c.value().data(), &oracle[..]);

    let mut rng = RngStream::new(5, "test");
    let a = random(&mut rng, &[3, 5], -1.0, 1.0);
    let b = random(&mut rng, &[5, 4], -1.0, 1.0);
    let c = g
        .constant(a.clone())
        .matmul(&g.constant(b.clone()))
        .unwrap();
    assert_close(c.value().data(), &naive_matmul(&a, &b), 1e-14);
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let g = Graph::new();
    let a = g.constant(NdArray::zeros(&[2, 3]));
    let b = g.constant(NdArray::zeros(&[2, 2]));
    match a.matmul(&b) {
        Err(Error::Dimension { lhs, rhs, .. }) => {
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![2, 2]);
        }
        other => panic!(
            "expected dimension error, got {:?}",
            other.map(|t| t.shape())
        ),
    }
}

#[test]
fn softmax_examples() {
    let g = Graph::new();
    let s = g.constant(NdArray::zeros(&[4])).softmax(0).unwrap();
    assert_eq!(s.value().data(), &[0.25; 4]);

    let s = g
        .constant(NdArray::vector(vec![10.0, 0.0]))
        .softmax(0)
        .unwrap()
        .value();
    let top = 1.0 / (1.0 + (-10.0f64).exp());
    assert_close(s.data(), &[top, 1.0 - top], 1e-15);
    assert!((s.data()[0] - 0.9999546).abs() < 1e-7);
    assert!((s.data()[1] - 0.0000454).abs() < 1e-7);

    let base = g
        .constant(NdArray::vector(vec![0.0, 0.7]))
        .softmax(0)
        .unwrap()
        .value();
    for c in [-300.0, -1.0, 5.0, 700.0] {
        let shifted = g
            .constant(NdArray::vector(vec![c, c + 0.7]))
            .softmax(0)
            .unwrap()
            .value();
        assert_close(shifted.data(), base.data(), 1e-12);
    }
}

#[test]
fn layer_norm_examples() {
    let g = Graph::new();
    let ones = g.constant(NdArray::full(&[3], 1.0));
    let zeros = g.constant(NdArray::zeros(&[3]));
    let y = g
        .constant(NdArray::full(&[3], 4.5))
        .layer_norm(&ones, &zeros, 1e-5)
        .unwrap();
    assert_eq!(y.value().data(), &[0.0; 3]);

    let y = g
        .constant(NdArray::vector(vec![1.0, 2.0, 3.0]))
        .layer_norm(&ones, &zeros, 0.0)
        .unwrap();
    // population std of [1, 2, 3] is sqrt(2/3)
    let s = 1.0 / (2.0f64 / 3.0).sqrt();
    assert_close(y.value().data(), &[-s, 0.0, s], 1e-15);
    assert!((s - 1.2247).abs() < 1e-4);

    let beta = g.constant(NdArray::vector(vec![0.5, -1.0, 2.0]));
    let y = g
        .constant(NdArray::vector(vec![3.0, -7.0, 0.25]))
        .layer_norm(&zeros, &beta, 1e-5)
        .unwrap();
    assert_eq!(y.value().data(), &[0.5, -1.0, 2.0]);

    let wrong = g.constant(NdArray::full(&[2], 1.0));
    assert!(matches!(
        g.constant(NdArray::zeros(&[3]))
            .layer_norm(&wrong, &zeros, 0.0),
        Err(Error::Dimension { .. })
    ));
}

#[test]
fn dropout_examples() {
    let g = Graph::new();
    let mut rng = RngStream::new(0, "dropout");
    let x = g.constant(NdArray::vector(vec![1.5, -2.0, 0.0, 7.0]));
    let y = x.dropout(0.5, Mode::Eval, &mut rng).unwrap();
    assert_eq!(y.value(), x.value());
    let y = x.dropout(0.0, Mode::Train, &mut rng).unwrap();
    assert_eq!(y.value(), x.value());
    assert_eq!(rng.position(), 0);

    let ones = g.constant(NdArray::full(&[100_000], 1.0));
    let y = ones.dropout(0.5, Mode::Train, &mut rng).unwrap().value();
    let mean = y.data().iter().sum::<f64>() / y.len() as f64;
    assert!((0.98..=1.02).contains(&mean), "mean {mean}");
    assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));

    let again = |seed| {
        let mut r = RngStream::new(seed, "dropout");
        ones.dropout(0.3, Mode::Train, &mut r).unwrap().value()
    };
    assert_eq!(again(9), again(9));

    for p in [1.0, 1.5, -0.1] {
        assert!(matches!(
            x.dropout(p, Mode::Train, &mut rng),
            Err(Error::Parameter(_))
        ));
    }
}

#[test]
fn cross_entropy_examples() {
    let g = Graph::new();
    let loss = g.constant(NdArray::zeros(&[4])).cross_entropy(2).unwrap();
    assert!((loss.item() - 4.0f64.ln()).abs() < 1e-15);
    assert!((loss.item() - 1.3863).abs() < 1e-4);

    let loss = g
        .constant(NdArray::vector(vec![100.0, 0.0, 0.0]))
        .cross_entropy(0)
        .unwrap();
    assert!(loss.item() >= 0.0 && loss.item() < 1e-40);

    let logits = g.variable(NdArray::zeros(&[2]));
    let loss = logits.cross_entropy(0).unwrap();
    let grad = g.backward(loss).unwrap().wrt(logits).unwrap();
    assert_close(grad.data(), &[-0.5, 0.5], 1e-15);

    assert!(matches!(
        g.constant(NdArray::zeros(&[3])).cross_entropy(3),
        Err(Error::Index { .. })
    ));
}

#[test]
fn backward_examples() {
    let g = Graph::new();
    let x = g.variable(NdArray::scalar(3.0));
    let loss = x.mul(&x).unwrap();
    assert_eq!(g.backward(loss).unwrap().wrt(x).unwrap().data(), &[6.0]);

    let g = Graph::new();
    let x = g.variable(NdArray::vector(vec![0.3, -1.0, 2.0]));
    let loss = x.softmax(0).unwrap().sum();
    let grad = g.backward(loss).unwrap().wrt(x).unwrap();
    assert!(grad.data().iter().all(|v| v.abs() < 1e-15));

    let g = Graph::new();
    let x = g.variable(NdArray::vector(vec![1.0, 2.0]));
    assert!(matches!(g.backward(x), Err(Error::Contract(_))));
}

#[test]
fn backward_rejects_a_loss_from_another_graph() {
    let g = Graph::new();
    let other = Graph::new();
    let x = other.variable(NdArray::scalar(1.0));
    assert!(matches!(g.backward(x), Err(Error::Contract(_))));
}

/// Reduces `y` to a scalar with fixed random weights so every output entry
/// reaches the loss with a distinct coefficient.
fn weigh<'g>(g: &'g Graph, y: Tensor<'g>, seed: u64) -> Result<Tensor<'g>> {
    let mut rng = RngStream::new(seed, "weights");
    let w = g.constant(random(&mut rng, &y.shape(), -1.0, 1.0));
    Ok(y.mul(&w)?.sum())
}

fn worst_error<F>(inputs: Vec<NdArray>, seed: u64, f: F) -> f64
where
    F: for<'g> Fn(&'g Graph, &[Tensor<'g>]) -> Result<Tensor<'g>>,
{
    check_function(
        &inputs,
        |g, xs| weigh(g, f(g, xs)?, seed),
        &GradCheckOptions::default(),
    )
    .unwrap()
}

fn op_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = RngStream::new(seed, "op-inputs");
    let mut r = |shape: &[usize]| random(&mut rng, shape, -1.5, 1.5);
    vec![
        (
            "matmul",
            worst_error(vec![r(&[3, 4]), r(&[4, 2])], seed, |_, x| {
                x[0].matmul(&x[1])
            }),
        ),
        (
            "transpose",
            worst_error(vec![r(&[3, 5])], seed, |_, x| x[0].transpose()),
        ),
        (
            "add",
            worst_error(vec![r(&[2, 3]), r(&[2, 3])], seed, |_, x| x[0].add(&x[1])),
        ),
        (
            "mul",
            worst_error(vec![r(&[2, 3]), r(&[2, 3])], seed, |_, x| x[0].mul(&x[1])),
        ),
        (
            "scale",
            worst_error(vec![r(&[4])], seed, |_, x| Ok(x[0].scale(-0.37))),
        ),
        (
            "add_row_bias",
            worst_error(vec![r(&[3, 4]), r(&[4])], seed, |_, x| {
                x[0].add_row_bias(&x[1])
            }),
        ),
        (
            "relu",
            worst_error(vec![r(&[5, 3])], seed, |_, x| Ok(x[0].relu())),
        ),
        (
            "softmax rows",
            worst_error(vec![r(&[3, 4])], seed, |_, x| x[0].softmax(1)),
        ),
        (
            "softmax columns",
            worst_error(vec![r(&[3, 4])], seed, |_, x| x[0].softmax(0)),
        ),
        (
            "layer_norm",
            worst_error(vec![r(&[3, 5]), r(&[5]), r(&[5])], seed, |_, x| {
                x[0].layer_norm(&x[1], &x[2], 1e-5)
            }),
        ),
        (
            "dropout",
            worst_error(vec![r(&[4, 4])], seed, move |_, x| {
                let mut rng = RngStream::new(seed, "dropout");
                x[0].dropout(0.3, Mode::Train, &mut rng)
            }),
        ),
        (
            "cross_entropy",
            worst_error(vec![r(&[5])], seed, move |_, x| {
                x[0].cross_entropy((seed % 5) as usize)
            }),
        ),
        (
            "neg_log_at",
            worst_error(vec![r(&[4])], seed, move |_, x| {
                x[0].softmax(0)?.neg_log_at((seed % 4) as usize)
            }),
        ),
        (
            "mean_rows",
            worst_error(vec![r(&[4, 3])], seed, |_, x| x[0].mean_rows()),
        ),
        (
            "sum",
            worst_error(vec![r(&[2, 3])], seed, |_, x| Ok(x[0].sum())),
        ),
        (
            "concat_cols",
            worst_error(vec![r(&[3, 2]), r(&[3, 4])], seed, |_, x| {
                Tensor::concat_cols(&[x[0], x[1]])
            }),
        ),
        (
            "conv2d",
            worst_error(
                vec![r(&[2, 2, 6, 6]), r(&[3, 2, 3, 3]), r(&[3])],
                seed,
                |_, x| x[0].conv2d(&x[1], &x[2], 2, 1),
            ),
        ),
        (
            "spatial_mean",
            worst_error(vec![r(&[2, 3, 4, 4])], seed, |_, x| x[0].spatial_mean()),
        ),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn every_op_matches_finite_differences(seed in any::<u64>()) {
        for (op, err) in op_errors(seed) {
            prop_assert!(err < 1e-4, "{op}: relative error {err:e} (seed {seed})");
        }
    }

    #[test]
    fn softmax_slices_are_distributions(
        rows in 1usize..5,
        cols in 1usize..7,
        spread in 0.1f64..50.0,
        seed in any::<u64>(),
    ) {
        let mut rng = RngStream::new(seed, "softmax");
        let g = Graph::new();
        let x = random(&mut rng, &[rows, cols], -spread, spread);
        for axis in 0..2 {
            let s = g.constant(x.clone()).softmax(axis).unwrap().value();
            let (outer, len) = if axis == 1 { (rows, cols) } else { (cols, rows) };
            for o in 0..outer {
                let at = |j: usize| if axis == 1 { s.get2(o, j) } else { s.get2(j, o) };
                let total: f64 = (0..len).map(at).sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                if spread < 10.0 {
                    prop_assert!((0..len).all(|j| at(j) > 0.0 && at(j) < 1.0 || len == 1));
                }
            }
        }
    }

    #[test]
    fn layer_norm_standardizes(d in 2usize..20, scale in 0.01f64..100.0, seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, "ln");
        let g = Graph::new();
        let x = random(&mut rng, &[3, d], -scale, scale);
        let y = g
            .constant(x)
            .layer_norm(&g.constant(NdArray::full(&[d], 1.0)), &g.constant(NdArray::zeros(&[d])), 0.0)
            .unwrap()
            .value();
        for row in y.rows() {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            prop_assert!(mean.abs() < 1e-10);
            prop_assert!((var - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn dropout_is_reproducible_and_identity_in_eval(p in 0.0f64..0.95, seed in any::<u64>()) {
        let g = Graph::new();
        let mut rng = RngStream::new(seed, "x");
        let x = g.constant(random(&mut rng, &[50], -1.0, 1.0));
        let run = |mode| {
            let mut r = RngStream::new(seed, "dropout");
            x.dropout(p, mode, &mut r).unwrap().value()
        };
        let eval = run(Mode::Eval);
        prop_assert!(eval.data().iter().zip(x.value().data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        let a = run(Mode::Train);
        let b = run(Mode::Train);
        prop_assert!(a.data().iter().zip(b.data()).all(|(u, v)| u.to_bits() == v.to_bits()));
    }
}

#[test]
fn relu_passes_nan_through() {
    let g = Graph::new();
    let y = g
        .constant(NdArray::vector(vec![-1.0, f64::NAN, 2.0]))
        .relu()
        .value();
    assert_eq!(y.data()[0], 0.0);
    assert!(y.data()[1].is_nan());
    assert_eq!(y.data()[2], 2.0);
}
