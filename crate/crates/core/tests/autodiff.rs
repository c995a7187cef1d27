use dwnet::autodiff::{LossKind, Tape};
use dwnet::gradcheck::{adjoint_mismatch, check_op, OpCase};
use dwnet::tensor::{PaddingMode, Shape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random64(shape: Shape, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..shape.numel()).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

fn gelu_sum(x: f64) -> (f64, f64) {
    let mut tape = Tape::<f64>::new();
    let v = tape.variable(Tensor::from_vec(Shape::new(1, 1, 1, 1), vec![x]).unwrap());
    let y = tape.gelu(v).unwrap();
    let s = tape.sum(y).unwrap();
    let g = tape.backward(s).unwrap().wrt(v).unwrap().data()[0];
    (tape.value(s).unwrap().data()[0], g)
}

#[test]
fn gelu_gradient_matches_central_differences() {
    let h = 1e-5;
    for x in [-2.0, -0.5, 0.5, 2.0] {
        let (_, g) = gelu_sum(x);
        let fd = (gelu_sum(x + h).0 - gelu_sum(x - h).0) / (2.0 * h);
        assert!((g - fd).abs() / fd.abs() < 1e-4, "x={x}: {g} vs {fd}");
    }
}

#[test]
fn group_norm_output_is_standardized() {
    let x = random64(Shape::new(3, 6, 5, 5), 4).cast::<f32>();
    let mut tape = Tape::<f32>::new();
    let xv = tape.input(x);
    let g = tape.input(Tensor::full(Shape::new(6, 1, 1, 1), 1.0));
    let b = tape.input(Tensor::zeros(Shape::new(6, 1, 1, 1)));
    let y = tape.group_norm(xv, 3, g, b, 1e-5).unwrap();
    let y = tape.value(y).unwrap().data();
    let block = 2 * 25;
    for chunk in y.chunks(block) {
        let mean = chunk.iter().map(|&v| v as f64).sum::<f64>() / block as f64;
        let var = chunk.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / block as f64;
        assert!(mean.abs() < 1e-6, "mean {mean}");
        assert!((var - 1.0).abs() < 1e-4, "var {var}");
    }
}

#[test]
fn sum_of_squares_gradient_is_identity() {
    let x = random64(Shape::new(1, 2, 3, 3), 1);
    let mut tape = Tape::<f64>::new();
    let v = tape.variable(x.clone());
    let sq = tape.mul(v, v).unwrap();
    let s = tape.sum(sq).unwrap();
    let half = tape.scale(s, 0.5).unwrap();
    let g = tape.backward(half).unwrap();
    assert!(g.wrt(v).unwrap().max_abs_diff(&x) < 1e-15);
}

fn periodic_stack(x: &Tensor<f32>, seed: u64) -> Tensor<f32> {
    let c = x.shape().0[1];
    let mut tape = Tape::<f32>::new();
    let mut h = tape.input(x.clone());
    for layer in 0..2u64 {
        let w = tape.input(random64(Shape::new(4, if layer == 0 { c } else { 4 }, 3, 3), seed + layer).cast());
        let b = tape.input(random64(Shape::new(4, 1, 1, 1), seed + 10 + layer).cast());
        h = tape.conv2d(h, w, b, 1, PaddingMode::Periodic, 1).unwrap();
        let g = tape.input(Tensor::full(Shape::new(4, 1, 1, 1), 1.0));
        let beta = tape.input(Tensor::zeros(Shape::new(4, 1, 1, 1)));
        h = tape.group_norm(h, 2, g, beta, 1e-5).unwrap();
        h = tape.gelu(h).unwrap();
    }
    tape.value(h).unwrap().clone()
}

#[test]
fn forward_and_backward_are_deterministic() {
    let x = random64(Shape::new(2, 2, 8, 8), 3).cast::<f32>();
    let t = random64(Shape::new(2, 4, 8, 8), 4).cast::<f32>();
    let run = || {
        let mut tape = Tape::<f32>::new();
        let xv = tape.variable(x.clone());
        let w = tape.variable(random64(Shape::new(4, 2, 3, 3), 5).cast());
        let b = tape.variable(random64(Shape::new(4, 1, 1, 1), 6).cast());
        let y = tape.conv2d(xv, w, b, 1, PaddingMode::Zero, 1).unwrap();
        let l = tape.loss(y, &t, LossKind::ScaledL2).unwrap();
        let g = tape.backward(l).unwrap();
        (tape.value(y).unwrap().clone(), g.wrt(w).unwrap().clone(), g.wrt(xv).unwrap().clone())
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn operator_gradients_match_finite_differences(seed in any::<u64>()) {
        for case in OpCase::all() {
            let r = check_op(&case, 0, seed).unwrap();
            prop_assert!(r.rel_err < 1e-3, "{}: {}", r.name, r.rel_err);
        }
    }

    #[test]
    fn transposed_conv_is_adjoint_of_strided_conv(seed in any::<u64>()) {
        prop_assert!(adjoint_mismatch(seed).unwrap() < 1e-5);
    }

    #[test]
    fn periodic_stack_commutes_with_shifts(seed in 0u64..1000, dy in -11isize..12, dx in -11isize..12) {
        let x = random64(Shape::new(1, 2, 12, 12), seed).cast::<f32>();
        let y = periodic_stack(&x, seed);
        let ys = periodic_stack(&x.roll(dy, dx), seed);
        prop_assert!(ys.max_abs_diff(&y.roll(dy, dx)) < 1e-5);
    }
}
