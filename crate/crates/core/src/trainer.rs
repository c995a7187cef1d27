//! History-to-next-frame supervision, ADAM and the warm-up/decay schedule.

use std::f64::consts::PI;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::Model;
use crate::autodiff::{LossKind, Tape};
use crate::error::{shape_err, Error, Result};
use crate::tensor::{Shape, Tensor};
use crate::trajectory::{FieldStats, Trajectory};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const BASE_LR: f64 = 0.01;

/// Learning rate for epoch `i` of `n_total`:
/// `0.01 α exp(-5 (max(i, Nw) - Nw) / N) (0.8 + 0.5 sin(2π (0.75 + i / Nw)))`
/// with `Nw = N / 2`.
pub fn lr_schedule(i: usize, n_total: usize, alpha: f64) -> f64 {
    let n = n_total as f64;
    let nw = n / 2.0;
    let i = i as f64;
    let decay = (-5.0 * (i.max(nw) - nw) / n).exp();
    let wave = 0.8 + 0.5 * (2.0 * PI * (0.75 + i / nw)).sin();
    BASE_LR * alpha * decay * wave
}

/// ADAM first and second moments plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor<f32>>,
    pub v: Vec<Tensor<f32>>,
}

impl AdamState {
    pub fn new(params: &[Tensor<f32>]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState { step: 0, m: zeros(), v: zeros() }
    }
}

/// One bias-corrected ADAM update.
pub fn adam_step(params: &mut [Tensor<f32>], grads: &[Tensor<f32>], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len() {
        return Err(shape_err("adam_step", "parameter, gradient and moment counts differ"));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() || p.shape() != state.v[i].shape() {
            return Err(shape_err("adam_step", format!("tensor {i}: {:?} vs {:?}", p.shape().0, g.shape().0)));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, (pv, &gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            let gv = gv as f64;
            let mj = ADAM_BETA1 * m[j] as f64 + (1.0 - ADAM_BETA1) * gv;
            let vj = ADAM_BETA2 * v[j] as f64 + (1.0 - ADAM_BETA2) * gv * gv;
            m[j] = mj as f32;
            v[j] = vj as f32;
            let update = lr * (mj / c1) / ((vj / c2).sqrt() + ADAM_EPS);
            *pv = (*pv as f64 - update) as f32;
        }
    }
    Ok(())
}

/// Where normalization statistics come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormSource {
    /// Pooled over the training trajectories.
    Pooled,
    /// The statistics stored in the first trajectory's header.
    Stored,
    /// No normalization.
    Identity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_scale: f64,
    pub seed: u64,
    pub history: usize,
    pub loss: LossKind,
    pub norm: NormSource,
}

impl TrainConfig {
    pub fn new(epochs: usize, batch_size: usize, lr_scale: f64, seed: u64, history: usize, loss: LossKind) -> Self {
        TrainConfig { epochs, batch_size, lr_scale, seed, history, loss, norm: NormSource::Pooled }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || !self.epochs.is_multiple_of(2) {
            return Err(Error::Config(format!("epochs must be even and positive, got {}", self.epochs)));
        }
        if !(self.lr_scale > 0.0 && self.lr_scale <= 1.0) {
            return Err(Error::Config(format!("lr_scale must lie in (0, 1], got {}", self.lr_scale)));
        }
        if self.batch_size == 0 || self.history == 0 {
            return Err(Error::Config("batch_size and history must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one training run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub label: String,
    pub params: usize,
    pub seed: u64,
    pub steps: usize,
    pub train_wall_seconds: f64,
    pub infer_wall_seconds: f64,
    pub err_first_step: f64,
    pub err_last_step: f64,
    pub final_loss: f64,
    /// Training loss of every optimizer step.
    pub step_losses: Vec<f64>,
    pub norm: FieldStats,
}

/// Supervised (history window -> next frame) pairs over a set of trajectories.
#[derive(Debug, Clone)]
pub struct WindowSet {
    trajs: Vec<Trajectory>,
    history: usize,
    windows: Vec<(usize, usize)>,
}

impl WindowSet {
    /// Build windows over already-normalized trajectories.
    pub fn new(trajs: Vec<Trajectory>, history: usize) -> Result<Self> {
        let first = trajs.first().ok_or_else(|| Error::EmptyDataset("no trajectories".into()))?;
        let dims = first.dims();
        let mut windows = Vec::new();
        for (ti, t) in trajs.iter().enumerate() {
            let d = t.dims();
            if d[1..] != dims[1..] {
                return Err(shape_err("dataset", format!("trajectory {ti} has dims {d:?}, expected {dims:?}")));
            }
            for s in 0..t.frames().saturating_sub(history) {
                windows.push((ti, s));
            }
        }
        if windows.is_empty() {
            return Err(Error::EmptyDataset(format!("no trajectory has more than {history} frames")));
        }
        Ok(WindowSet { trajs, history, windows })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn in_channels(&self) -> usize {
        self.history * self.trajs[0].fields()
    }

    pub fn out_channels(&self) -> usize {
        self.trajs[0].fields()
    }

    /// Input (B, history*M, H, W) and target (B, M, H, W) for window indices.
    pub fn batch(&self, idx: &[usize]) -> (Tensor<f32>, Tensor<f32>) {
        let [_, m, h, w] = self.trajs[0].dims();
        let frame = m * h * w;
        let mut x = Vec::with_capacity(idx.len() * self.history * frame);
        let mut y = Vec::with_capacity(idx.len() * frame);
        for &i in idx {
            let (ti, s) = self.windows[i];
            let t = &self.trajs[ti];
            for f in s..s + self.history {
                x.extend_from_slice(t.frame(f));
            }
            y.extend_from_slice(t.frame(s + self.history));
        }
        let b = idx.len();
        (
            Tensor::from_vec(Shape::new(b, self.history * m, h, w), x).expect("batch shape"),
            Tensor::from_vec(Shape::new(b, m, h, w), y).expect("batch shape"),
        )
    }
}

fn resolve_stats(dataset: &[Trajectory], src: NormSource) -> Result<FieldStats> {
    let first = dataset.first().ok_or_else(|| Error::EmptyDataset("no trajectories".into()))?;
    match src {
        NormSource::Pooled => FieldStats::pooled(dataset),
        NormSource::Stored => Ok(first.stats.clone()),
        NormSource::Identity => Ok(FieldStats::identity(first.fields())),
    }
}

/// Train `model` in place. Windows are reshuffled every epoch from
/// `(cfg.seed, epoch)` and the learning rate is set once per epoch.
pub fn train(model: &mut Model, dataset: &[Trajectory], cfg: &TrainConfig) -> Result<RunRecord> {
    train_with_state(model, dataset, cfg, None).map(|(r, _)| r)
}

/// As [`train`], optionally resuming from and returning the optimizer state.
pub fn train_with_state(
    model: &mut Model,
    dataset: &[Trajectory],
    cfg: &TrainConfig,
    state: Option<AdamState>,
) -> Result<(RunRecord, AdamState)> {
    cfg.validate()?;
    let stats = resolve_stats(dataset, cfg.norm)?;
    let set = WindowSet::new(dataset.iter().map(|t| t.normalized(&stats)).collect(), cfg.history)?;
    let mc = *model.config();
    if mc.in_channels != set.in_channels() || mc.out_channels != set.out_channels() {
        return Err(shape_err(
            "train",
            format!(
                "model maps {} -> {} channels, data needs {} -> {}",
                mc.in_channels,
                mc.out_channels,
                set.in_channels(),
                set.out_channels()
            ),
        ));
    }
    let mut adam = state.unwrap_or_else(|| AdamState::new(model.params()));
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut losses = Vec::new();
    let start = Instant::now();
    for epoch in 0..cfg.epochs {
        let lr = lr_schedule(epoch, cfg.epochs, cfg.lr_scale);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        order.sort_unstable();
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let (x, y) = set.batch(chunk);
            let mut tape = Tape::new();
            let xv = tape.input(x);
            let pred = model.forward(&mut tape, xv)?;
            let loss = tape.loss(pred, &y, cfg.loss)?;
            let value = tape.value(loss)?.data()[0] as f64;
            if !value.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {epoch}, step {} (lr {lr:.3e})",
                    losses.len()
                )));
            }
            losses.push(value);
            let n = model.params().len();
            let grads: Vec<Tensor<f32>> = tape
                .backward(loss)?
                .into_param_vec(n)
                .into_iter()
                .zip(model.params())
                .map(|(g, p)| g.unwrap_or_else(|| Tensor::zeros(p.shape())))
                .collect();
            adam_step(model.params_mut(), &grads, &mut adam, lr)?;
        }
        log::debug!("epoch {epoch}: lr {lr:.3e}, last loss {:.4e}", losses.last().copied().unwrap_or(f64::NAN));
    }
    let train_wall_seconds = start.elapsed().as_secs_f64();
    let record = RunRecord {
        label: mc.label(),
        params: model.param_count(),
        seed: cfg.seed,
        steps: losses.len(),
        train_wall_seconds,
        infer_wall_seconds: 0.0,
        err_first_step: f64::NAN,
        err_last_step: f64::NAN,
        final_loss: losses.last().copied().unwrap_or(f64::NAN),
        step_losses: losses,
        norm: stats,
    };
    Ok((record, adam))
}
