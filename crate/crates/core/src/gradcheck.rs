//! Finite-difference verification of the analytic gradients.
//!
//! Analytic gradients come from an `f32` tape (the training path). The
//! reference derivative is a central difference of the same forward
//! operators replayed on an `f64` tape.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{LossKind, Tape, Var};
use crate::error::Result;
use crate::tensor::{Element, PaddingMode, Shape, Tensor};

pub const FD_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpCase {
    Conv { k: usize, stride: usize, groups: usize, pad: PaddingMode },
    ConvTranspose,
    MaxPool,
    AvgPool,
    Gelu,
    GroupNorm { groups: usize },
    Concat,
    Add,
}

impl OpCase {
    pub fn name(&self) -> String {
        match self {
            OpCase::Conv { k, stride, groups, pad } => {
                format!("conv2d k={k} s={stride} g={groups} {pad:?}")
            }
            OpCase::ConvTranspose => "conv_transpose2d".into(),
            OpCase::MaxPool => "max_pool2".into(),
            OpCase::AvgPool => "avg_pool2".into(),
            OpCase::Gelu => "gelu".into(),
            OpCase::GroupNorm { groups } => format!("group_norm g={groups}"),
            OpCase::Concat => "concat_channels".into(),
            OpCase::Add => "add".into(),
        }
    }

    /// Shapes of the differentiable inputs of one random instance.
    fn input_shapes(&self) -> Vec<Shape> {
        match *self {
            OpCase::Conv { k, groups, .. } => {
                vec![Shape::new(2, 4, 8, 8), Shape::new(4, 4 / groups, k, k), Shape::new(4, 1, 1, 1)]
            }
            OpCase::ConvTranspose => vec![Shape::new(2, 3, 4, 4), Shape::new(3, 2, 2, 2), Shape::new(2, 1, 1, 1)],
            OpCase::MaxPool | OpCase::AvgPool => vec![Shape::new(1, 2, 4, 4)],
            OpCase::Gelu => vec![Shape::new(1, 2, 3, 3)],
            OpCase::GroupNorm { .. } => {
                vec![Shape::new(2, 4, 4, 4), Shape::new(4, 1, 1, 1), Shape::new(4, 1, 1, 1)]
            }
            OpCase::Concat => vec![Shape::new(2, 2, 4, 4), Shape::new(2, 3, 4, 4)],
            OpCase::Add => vec![Shape::new(1, 3, 4, 4), Shape::new(1, 3, 4, 4)],
        }
    }

    fn apply<T: Element>(&self, tape: &mut Tape<T>, v: &[Var]) -> Result<Var> {
        match *self {
            OpCase::Conv { stride, groups, pad, .. } => tape.conv2d(v[0], v[1], v[2], stride, pad, groups),
            OpCase::ConvTranspose => tape.conv_transpose2d(v[0], v[1], v[2]),
            OpCase::MaxPool => tape.max_pool2(v[0]),
            OpCase::AvgPool => tape.avg_pool2(v[0]),
            OpCase::Gelu => tape.gelu(v[0]),
            OpCase::GroupNorm { groups } => tape.group_norm(v[0], groups, v[1], v[2], 1e-5),
            OpCase::Concat => tape.concat_channels(v),
            OpCase::Add => tape.add(v[0], v[1]),
        }
    }

    /// Every operator configuration the architectures use.
    pub fn all() -> Vec<OpCase> {
        vec![
            OpCase::Conv { k: 3, stride: 1, groups: 1, pad: PaddingMode::Zero },
            OpCase::Conv { k: 3, stride: 1, groups: 1, pad: PaddingMode::Periodic },
            OpCase::Conv { k: 1, stride: 1, groups: 1, pad: PaddingMode::Zero },
            OpCase::Conv { k: 7, stride: 1, groups: 4, pad: PaddingMode::Periodic },
            OpCase::Conv { k: 2, stride: 2, groups: 1, pad: PaddingMode::Zero },
            OpCase::ConvTranspose,
            OpCase::MaxPool,
            OpCase::AvgPool,
            OpCase::Gelu,
            OpCase::GroupNorm { groups: 2 },
            OpCase::Concat,
            OpCase::Add,
        ]
    }
}

/// Outcome of one random instance of one operator.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub instance: usize,
    /// `max |analytic - numeric| / max |numeric|` over the probed coordinates,
    /// worst case over the operator's inputs.
    pub rel_err: f64,
}

fn random_tensor(rng: &mut ChaCha8Rng, s: Shape) -> Tensor<f64> {
    let data = (0..s.numel()).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(s, data).expect("shape")
}

/// Distinct values spaced well beyond the finite-difference step so that no
/// max-pool window changes its argmax under perturbation.
fn separated_tensor(rng: &mut ChaCha8Rng, s: Shape) -> Tensor<f64> {
    let n = s.numel();
    let mut vals: Vec<f64> = (0..n).map(|i| (i as f64 - n as f64 / 2.0) * 0.05).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        vals.swap(i, j);
    }
    Tensor::from_vec(s, vals).expect("shape")
}

/// `sum(op(inputs) * weights)`: a scalar whose gradient exercises every
/// output element differently.
fn weighted_loss<T: Element>(
    case: &OpCase,
    inputs: &[Tensor<f64>],
    weights: &Tensor<f64>,
) -> Result<(Tape<T>, Vec<Var>, Var)> {
    let mut tape = Tape::<T>::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.cast())).collect();
    let y = case.apply(&mut tape, &vars)?;
    let wv = tape.input(weights.cast());
    let prod = tape.mul(y, wv)?;
    let root = tape.sum(prod)?;
    Ok((tape, vars, root))
}

fn scalar_value(tape: &Tape<f64>, v: Var) -> f64 {
    tape.value(v).expect("own var").data()[0]
}

pub fn check_op(case: &OpCase, instance: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (instance as u64).wrapping_mul(0x9E37_79B9));
    let shapes = case.input_shapes();
    let inputs: Vec<Tensor<f64>> = shapes
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            if *case == OpCase::MaxPool && i == 0 {
                separated_tensor(&mut rng, s)
            } else {
                random_tensor(&mut rng, s)
            }
        })
        .collect();
    let out_shape = {
        let mut tape = Tape::<f64>::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
        let y = case.apply(&mut tape, &vars)?;
        tape.value(y)?.shape()
    };
    let weights = random_tensor(&mut rng, out_shape);

    let (tape32, vars32, root32) = weighted_loss::<f32>(case, &inputs, &weights)?;
    let grads = tape32.backward(root32)?;

    let mut rel_err = 0.0f64;
    for (ti, input) in inputs.iter().enumerate() {
        let mut max_diff = 0.0f64;
        let mut max_ref = 0.0f64;
        let analytic = grads.wrt(vars32[ti]).expect("variable gradient");
        let n = input.numel();
        let probes = n.min(24);
        for _ in 0..probes {
            let idx = rng.random_range(0..n);
            let mut plus = inputs.clone();
            plus[ti].data_mut()[idx] += FD_STEP;
            let mut minus = inputs.clone();
            minus[ti].data_mut()[idx] -= FD_STEP;
            let (tp, _, rp) = weighted_loss::<f64>(case, &plus, &weights)?;
            let (tm, _, rm) = weighted_loss::<f64>(case, &minus, &weights)?;
            let numeric = (scalar_value(&tp, rp) - scalar_value(&tm, rm)) / (2.0 * FD_STEP);
            let a = analytic.data()[idx] as f64;
            max_diff = max_diff.max((a - numeric).abs());
            max_ref = max_ref.max(numeric.abs());
        }
        rel_err = rel_err.max(max_diff / max_ref.max(1e-12));
    }
    Ok(CheckResult { name: case.name(), instance, rel_err })
}

/// Run `instances` random checks of every operator.
pub fn run_operator_suite(instances: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for case in OpCase::all() {
        for i in 0..instances {
            out.push(check_op(&case, i, seed)?);
        }
    }
    Ok(out)
}

/// Inner-product adjoint test `<conv2d_s2(a), b> = <a, conv_transpose2d(b)>`
/// with a shared `(c_out, c_in, 2, 2)` weight and zero bias. Returns the
/// relative mismatch.
pub fn adjoint_mismatch(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c_in, c_out) = (rng.random_range(1..5), rng.random_range(1..5));
    let (h, w) = (2 * rng.random_range(1..6), 2 * rng.random_range(1..6));
    let a = random_tensor(&mut rng, Shape::new(2, c_in, h, w)).cast::<f32>();
    let b = random_tensor(&mut rng, Shape::new(2, c_out, h / 2, w / 2)).cast::<f32>();
    let wt = random_tensor(&mut rng, Shape::new(c_out, c_in, 2, 2)).cast::<f32>();

    let mut tape = Tape::<f32>::new();
    let av = tape.input(a.clone());
    let bv = tape.input(b.clone());
    let wv = tape.input(wt);
    let zb_out = tape.input(Tensor::zeros(Shape::new(c_out, 1, 1, 1)));
    let zb_in = tape.input(Tensor::zeros(Shape::new(c_in, 1, 1, 1)));
    let fa = tape.conv2d(av, wv, zb_out, 2, PaddingMode::Zero, 1)?;
    let tb = tape.conv_transpose2d(bv, wv, zb_in)?;
    let dot = |x: &[f32], y: &[f32]| x.iter().zip(y).map(|(p, q)| *p as f64 * *q as f64).sum::<f64>();
    let lhs = dot(tape.value(fa)?.data(), b.data());
    let rhs = dot(a.data(), tape.value(tb)?.data());
    Ok((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-12))
}

/// Compare model gradients against central differences on randomly sampled
/// scalar parameters. Returns `(parameter name, flat index, relative error)`.
pub fn model_spot_check(
    model: &crate::arch::Model,
    input: &Tensor<f32>,
    target: &Tensor<f32>,
    kind: LossKind,
    samples: usize,
    seed: u64,
) -> Result<Vec<(String, usize, f64)>> {
    let mut tape = Tape::<f32>::new();
    let x = tape.input(input.clone());
    let y = model.forward(&mut tape, x)?;
    let loss = tape.loss(y, target, kind)?;
    let grads = tape.backward(loss)?.into_param_vec(model.params().len());

    let rms = {
        let (s, n) = grads.iter().flatten().fold((0.0f64, 0usize), |(s, n), g| {
            (s + g.data().iter().map(|v| (*v as f64).powi(2)).sum::<f64>(), n + g.numel())
        });
        (s / n.max(1) as f64).sqrt()
    };

    let base: Vec<Tensor<f64>> = model.params().iter().map(|t| t.cast()).collect();
    let x64 = input.cast::<f64>();
    let t64 = target.cast::<f64>();
    let eval = |params: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::<f64>::new();
        let xv = tape.input(x64.clone());
        let y = model.forward_with(params, &mut tape, xv)?;
        let l = tape.loss(y, &t64, kind)?;
        Ok(tape.value(l)?.data()[0])
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let pi = rng.random_range(0..base.len());
        let idx = rng.random_range(0..base[pi].numel());
        let mut plus = base.clone();
        plus[pi].data_mut()[idx] += FD_STEP;
        let mut minus = base.clone();
        minus[pi].data_mut()[idx] -= FD_STEP;
        let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * FD_STEP);
        let analytic = grads[pi].as_ref().map_or(0.0, |g| g.data()[idx] as f64);
        let denom = numeric.abs().max(analytic.abs()).max(1e-4 * rms).max(1e-12);
        out.push((model.param_names()[pi].clone(), idx, (analytic - numeric).abs() / denom));
    }
    Ok(out)
}

/// Spot check of a small periodic DW-Net-3 (w0 = 4, five levels) on a random
/// 16×16 two-channel input with scaled-L2 loss.
pub fn dwnet_spot_check(samples: usize, seed: u64) -> Result<Vec<(String, usize, f64)>> {
    use crate::arch::{Family, Model, ModelConfig};
    let cfg = ModelConfig::new(Family::DWNet, 4, 2, 1).with_waves(3);
    let model = Model::build(cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let x = random_tensor(&mut rng, Shape::new(1, 2, 16, 16)).cast::<f32>();
    let y = random_tensor(&mut rng, Shape::new(1, 1, 16, 16)).cast::<f32>();
    model_spot_check(&model, &x, &y, LossKind::ScaledL2, samples, seed)
}
