//! Finite-difference checks of every differentiable op, and shape/finiteness
//! properties of the layers.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spkemb::nn::gradcheck::{max_relative_error, numeric_gradient};
use spkemb::nn::*;

const EPS: f64 = 1e-5;
const FLOOR: f64 = 1e-8;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn with_data(t: &Tensor, data: &[f64]) -> Tensor {
    Tensor::new(t.shape().to_vec(), data.to_vec()).unwrap()
}

fn conv_errors(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conv = Conv1d::init(3, 4, 3, 1 + (seed % 2) as usize, &mut rng).unwrap();
    let conv = Conv1d::new(conv.weight, rand_tensor(&mut rng, &[4]), conv.stride).unwrap();
    let x = rand_tensor(&mut rng, &[3, 10]);
    let y = conv.forward(&x).unwrap();
    let r = rand_tensor(&mut rng, y.shape());
    let g = conv.backward(&x, &r).unwrap();

    let nx = numeric_gradient(
        |v| conv.forward(&with_data(&x, v)).unwrap().dot(&r),
        x.data(),
        EPS,
    );
    let nw = numeric_gradient(
        |v| {
            let c =
                Conv1d::new(with_data(&conv.weight, v), conv.bias.clone(), conv.stride).unwrap();
            c.forward(&x).unwrap().dot(&r)
        },
        conv.weight.data(),
        EPS,
    );
    let nb = numeric_gradient(
        |v| {
            let c =
                Conv1d::new(conv.weight.clone(), with_data(&conv.bias, v), conv.stride).unwrap();
            c.forward(&x).unwrap().dot(&r)
        },
        conv.bias.data(),
        EPS,
    );
    max_relative_error(g.input.data(), &nx, FLOOR)
        .max(max_relative_error(g.weight.data(), &nw, FLOOR))
        .max(max_relative_error(g.bias.data(), &nb, FLOOR))
}

fn affine_errors(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let aff = Affine::new(rand_tensor(&mut rng, &[4, 5]), rand_tensor(&mut rng, &[4])).unwrap();
    let x = rand_tensor(&mut rng, &[5, 3]);
    let r = rand_tensor(&mut rng, &[4, 3]);
    let g = aff.backward(&x, &r).unwrap();
    let nx = numeric_gradient(
        |v| aff.forward(&with_data(&x, v)).unwrap().dot(&r),
        x.data(),
        EPS,
    );
    let nw = numeric_gradient(
        |v| {
            Affine::new(with_data(&aff.weight, v), aff.bias.clone())
                .unwrap()
                .forward(&x)
                .unwrap()
                .dot(&r)
        },
        aff.weight.data(),
        EPS,
    );
    let nb = numeric_gradient(
        |v| {
            Affine::new(aff.weight.clone(), with_data(&aff.bias, v))
                .unwrap()
                .forward(&x)
                .unwrap()
                .dot(&r)
        },
        aff.bias.data(),
        EPS,
    );
    max_relative_error(g.input.data(), &nx, FLOOR)
        .max(max_relative_error(g.weight.data(), &nw, FLOOR))
        .max(max_relative_error(g.bias.data(), &nb, FLOOR))
}

fn relu_errors(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // keep inputs away from the kink
    let data: Vec<f64> = (0..24)
        .map(|_| {
            let v: f64 = rng.random_range(1e-2..1.0);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    let x = Tensor::new(vec![4, 6], data).unwrap();
    let r = rand_tensor(&mut rng, &[4, 6]);
    let g = relu_backward(&x, &r).unwrap();
    let n = numeric_gradient(|v| relu(&with_data(&x, v)).unwrap().dot(&r), x.data(), EPS);
    max_relative_error(g.data(), &n, FLOOR)
}

fn stats_pool_errors(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = rand_tensor(&mut rng, &[4, 6]);
    let r = rand_tensor(&mut rng, &[8]);
    let g = stats_pool_backward(&x, &r).unwrap();
    let n = numeric_gradient(
        |v| stats_pool(&with_data(&x, v)).unwrap().dot(&r),
        x.data(),
        EPS,
    );
    max_relative_error(g.data(), &n, FLOOR)
}

fn avg_pool_errors(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = rand_tensor(&mut rng, &[4, 6]);
    let r = rand_tensor(&mut rng, &[4]);
    let g = avg_pool_backward(&x, &r).unwrap();
    let n = numeric_gradient(
        |v| avg_pool(&with_data(&x, v)).unwrap().dot(&r),
        x.data(),
        EPS,
    );
    max_relative_error(g.data(), &n, FLOOR)
}

fn xent_errors(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = rand_tensor(&mut rng, &[7]);
    let label = rng.random_range(0..7);
    let (_, g) = softmax_xent(&z, label).unwrap();
    let n = numeric_gradient(
        |v| softmax_xent(&with_data(&z, v), label).unwrap().0,
        z.data(),
        EPS,
    );
    max_relative_error(g.data(), &n, FLOOR)
}

fn check_all_seeds(name: &str, tol: f64, f: fn(u64) -> f64) {
    for seed in 0..20 {
        let err = f(seed);
        assert!(err <= tol, "{name} seed {seed}: relative error {err:e}");
    }
}

#[test]
fn conv1d_gradients() {
    check_all_seeds("conv1d", 1e-6, conv_errors);
}

#[test]
fn affine_gradients() {
    check_all_seeds("affine", 1e-6, affine_errors);
}

#[test]
fn relu_gradients() {
    check_all_seeds("relu", 1e-6, relu_errors);
}

#[test]
fn stats_pool_gradients() {
    check_all_seeds("stats_pool", 1e-5, stats_pool_errors);
}

#[test]
fn avg_pool_gradients() {
    check_all_seeds("avg_pool", 1e-6, avg_pool_errors);
}

#[test]
fn softmax_xent_gradients() {
    check_all_seeds("softmax_xent", 1e-6, xent_errors);
}

#[test]
fn stats_pool_below_floor_has_zero_std_gradient() {
    let x = Tensor::new(vec![1, 4], vec![2.0; 4]).unwrap();
    let g = stats_pool_backward(&x, &Tensor::from_vec(vec![0.0, 1.0]).unwrap()).unwrap();
    assert!(g.data().iter().all(|v| *v == 0.0));
}

#[test]
fn pointwise_conv_equals_affine() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let conv = Conv1d::init(6, 4, 1, 1, &mut rng).unwrap();
    let conv = Conv1d::new(conv.weight, rand_tensor(&mut rng, &[4]), 1).unwrap();
    let aff = Affine::new(
        conv.weight.clone().reshape(vec![4, 6]).unwrap(),
        conv.bias.clone(),
    )
    .unwrap();
    let x = rand_tensor(&mut rng, &[6, 11]);
    assert_eq!(conv.forward(&x).unwrap(), aff.forward(&x).unwrap());
}

proptest! {
    #[test]
    fn mean_halves_agree(data in proptest::collection::vec(-1e3f64..1e3, 12)) {
        let x = Tensor::new(vec![3, 4], data).unwrap();
        let s = stats_pool(&x).unwrap();
        let a = avg_pool(&x).unwrap();
        prop_assert_eq!(a.data(), &s.data()[..3]);
    }

    #[test]
    fn extreme_magnitudes_stay_finite(
        exps in proptest::collection::vec(-30i32..=30, 12),
        signs in proptest::collection::vec(any::<bool>(), 12),
        label in 0usize..3,
    ) {
        let data: Vec<f64> = exps
            .iter()
            .zip(&signs)
            .map(|(e, s)| if *s { 10f64.powi(*e) } else { -10f64.powi(*e) })
            .collect();
        let x = Tensor::new(vec![3, 4], data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let conv = Conv1d::init(3, 2, 2, 1, &mut rng).unwrap();
        let aff = Affine::init(3, 3, &mut rng).unwrap();
        let y = conv.forward(&x).unwrap();
        prop_assert!(y.data().iter().all(|v| v.is_finite()));
        prop_assert!(conv.backward(&x, &y).is_ok());
        let r = relu(&x).unwrap();
        prop_assert!(relu_backward(&x, &r).is_ok());
        let s = stats_pool(&x).unwrap();
        prop_assert!(s.data().iter().all(|v| v.is_finite()));
        prop_assert!(stats_pool_backward(&x, &s).unwrap().data().iter().all(|v| v.is_finite()));
        let a = avg_pool(&x).unwrap();
        prop_assert!(avg_pool_backward(&x, &a).is_ok());
        let z = aff.forward(&a).unwrap();
        let (loss, g) = softmax_xent(&z, label).unwrap();
        prop_assert!(loss.is_finite() && g.data().iter().all(|v| v.is_finite()));
    }
}
