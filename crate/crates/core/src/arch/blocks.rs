//! Parameterized layers, convolutional blocks and the per-wave skeleton.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::{Family, ModelConfig};
use super::layout::{LayerInfo, LayerKind, Stage};
use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::tensor::{Element, PaddingMode, Shape, Tensor};

pub(crate) const GN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Ctx {
    pub wave: usize,
    pub level: usize,
    pub stage: Stage,
    pub block: Option<usize>,
}

impl Ctx {
    pub fn new(wave: usize, level: usize, stage: Stage) -> Self {
        Ctx { wave, level, stage, block: None }
    }
}

/// Accumulates parameters and the layer listing while a model is wired.
pub(crate) struct Builder<'a> {
    pub cfg: &'a ModelConfig,
    rng: ChaCha8Rng,
    pub params: Vec<Tensor<f32>>,
    pub names: Vec<String>,
    pub layout: Vec<LayerInfo>,
    next_block: usize,
}

impl<'a> Builder<'a> {
    pub fn new(cfg: &'a ModelConfig, rng: ChaCha8Rng) -> Self {
        Builder { cfg, rng, params: Vec::new(), names: Vec::new(), layout: Vec::new(), next_block: 0 }
    }

    fn uniform(&mut self, shape: Shape, bound: f32) -> Tensor<f32> {
        let data = (0..shape.numel()).map(|_| self.rng.random_range(-bound..=bound)).collect();
        Tensor::from_vec(shape, data).expect("shape")
    }

    fn push_param(&mut self, name: String, t: Tensor<f32>) -> usize {
        self.params.push(t);
        self.names.push(name);
        self.params.len() - 1
    }

    pub fn note(&mut self, ctx: Ctx, kind: LayerKind, cin: usize, cout: usize, role: &'static str) {
        self.layout.push(LayerInfo {
            kind,
            in_channels: cin,
            out_channels: cout,
            level: ctx.level,
            wave: ctx.wave,
            stage: ctx.stage,
            block: ctx.block,
            role,
        });
    }

    #[allow(clippy::too_many_arguments)]
    pub fn conv(
        &mut self,
        prefix: &str,
        ctx: Ctx,
        role: &'static str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        groups: usize,
    ) -> Conv {
        let cin_g = cin / groups;
        let bound = (1.0 / (cin_g * k * k) as f32).sqrt();
        let w = self.uniform(Shape::new(cout, cin_g, k, k), bound);
        let b = self.uniform(Shape::new(cout, 1, 1, 1), bound);
        let weight = self.push_param(format!("{prefix}.{role}.weight"), w);
        let bias = self.push_param(format!("{prefix}.{role}.bias"), b);
        self.note(ctx, LayerKind::Conv { k, stride, groups }, cin, cout, role);
        Conv { weight, bias, stride, groups }
    }

    pub fn conv_transpose(&mut self, prefix: &str, ctx: Ctx, cin: usize, cout: usize) -> ConvT {
        let bound = (1.0 / cin as f32).sqrt();
        let w = self.uniform(Shape::new(cin, cout, 2, 2), bound);
        let b = self.uniform(Shape::new(cout, 1, 1, 1), bound);
        let weight = self.push_param(format!("{prefix}.up.weight"), w);
        let bias = self.push_param(format!("{prefix}.up.bias"), b);
        self.note(ctx, LayerKind::ConvTranspose, cin, cout, "up");
        ConvT { weight, bias }
    }

    pub fn norm(&mut self, prefix: &str, ctx: Ctx, role: &'static str, c: usize) -> Norm {
        let groups = self.cfg.groups_for(c);
        let gamma = self.push_param(format!("{prefix}.{role}.gamma"), Tensor::full(Shape::new(c, 1, 1, 1), 1.0));
        let beta = self.push_param(format!("{prefix}.{role}.beta"), Tensor::zeros(Shape::new(c, 1, 1, 1)));
        self.note(ctx, LayerKind::GroupNorm { groups }, c, c, role);
        Norm { gamma, beta, groups }
    }

    fn begin_block(&mut self, ctx: Ctx, cin: usize, cout: usize) -> Ctx {
        let id = self.next_block;
        self.next_block += 1;
        let ctx = Ctx { block: Some(id), ..ctx };
        self.note(ctx, LayerKind::Block, cin, cout, "block");
        ctx
    }

    /// Conv -> norm -> GELU.
    fn unit(&mut self, prefix: &str, ctx: Ctx, idx: usize, cin: usize, cout: usize) -> (Conv, Norm) {
        const CONV: [&str; 4] = ["conv1", "conv2", "conv3", "conv4"];
        const NORM: [&str; 4] = ["norm1", "norm2", "norm3", "norm4"];
        let c = self.conv(prefix, ctx, CONV[idx], cin, cout, 3, 1, 1);
        let n = self.norm(prefix, ctx, NORM[idx], cout);
        self.note(ctx, LayerKind::Gelu, cout, cout, "gelu");
        (c, n)
    }

    fn projection(&mut self, prefix: &str, ctx: Ctx, cin: usize, cout: usize) -> Option<Conv> {
        (cin != cout).then(|| self.conv(prefix, ctx, "skip_proj", cin, cout, 1, 1, 1))
    }

    /// The family's convolutional block mapping `cin -> cout` channels.
    pub fn block(&mut self, prefix: &str, ctx: Ctx, cin: usize, cout: usize) -> Block {
        let ctx = self.begin_block(ctx, cin, cout);
        match self.cfg.family {
            Family::UNetBase | Family::SineNet | Family::DWNet => {
                let first = self.unit(prefix, ctx, 0, cin, cout);
                let second = self.unit(prefix, ctx, 1, cout, cout);
                Block::Plain { units: [first, second] }
            }
            Family::UNetMod => {
                let first = self.unit(prefix, ctx, 0, cin, cout);
                let second = self.unit(prefix, ctx, 1, cout, cout);
                let proj = self.projection(prefix, ctx, cin, cout);
                self.note(ctx, LayerKind::Add, cout, cout, "residual");
                Block::Residual { units: [first, second], proj }
            }
            Family::UNetDeep => {
                let u1 = self.unit(prefix, ctx, 0, cin, cout);
                let u2 = self.unit(prefix, ctx, 1, cout, cout);
                let proj = self.projection(prefix, ctx, cin, cout);
                self.note(ctx, LayerKind::Add, cout, cout, "residual");
                let u3 = self.unit(prefix, ctx, 2, cout, cout);
                let u4 = self.unit(prefix, ctx, 3, cout, cout);
                self.note(ctx, LayerKind::Add, cout, cout, "residual");
                Block::Deep { units: [u1, u2, u3, u4], proj }
            }
            Family::CNUNet => {
                let dw = self.conv(prefix, ctx, "dw", cin, cin, 7, 1, cin);
                let norm = self.norm(prefix, ctx, "norm", cin);
                let pw1 = self.conv(prefix, ctx, "pw1", cin, 4 * cout, 1, 1, 1);
                self.note(ctx, LayerKind::Gelu, 4 * cout, 4 * cout, "gelu");
                let pw2 = self.conv(prefix, ctx, "pw2", 4 * cout, cout, 1, 1, 1);
                let proj = self.projection(prefix, ctx, cin, cout);
                self.note(ctx, LayerKind::Add, cout, cout, "residual");
                Block::ConvNext { dw, norm, pw1, pw2, proj }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Conv {
    weight: usize,
    bias: usize,
    stride: usize,
    groups: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct ConvT {
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Norm {
    gamma: usize,
    beta: usize,
    groups: usize,
}

/// Forward-pass state: the tape plus one registered leaf per parameter.
pub(crate) struct Fwd<'t, T: Element> {
    pub tape: &'t mut Tape<T>,
    pub p: Vec<Var>,
    pub pad: PaddingMode,
}

impl Conv {
    pub fn apply<T: Element>(&self, f: &mut Fwd<'_, T>, x: Var) -> Result<Var> {
        f.tape.conv2d(x, f.p[self.weight], f.p[self.bias], self.stride, f.pad, self.groups)
    }
}

impl ConvT {
    pub fn apply<T: Element>(&self, f: &mut Fwd<'_, T>, x: Var) -> Result<Var> {
        f.tape.conv_transpose2d(x, f.p[self.weight], f.p[self.bias])
    }
}

impl Norm {
    pub fn apply<T: Element>(&self, f: &mut Fwd<'_, T>, x: Var) -> Result<Var> {
        f.tape.group_norm(x, self.groups, f.p[self.gamma], f.p[self.beta], GN_EPS)
    }
}

fn unit_apply<T: Element>(u: &(Conv, Norm), f: &mut Fwd<'_, T>, x: Var) -> Result<Var> {
    let h = u.0.apply(f, x)?;
    let h = u.1.apply(f, h)?;
    f.tape.gelu(h)
}

fn shortcut<T: Element>(proj: &Option<Conv>, f: &mut Fwd<'_, T>, x: Var) -> Result<Var> {
    match proj {
        Some(p) => p.apply(f, x),
        None => Ok(x),
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Block {
    Plain { units: [(Conv, Norm); 2] },
    Residual { units: [(Conv, Norm); 2], proj: Option<Conv> },
    Deep { units: [(Conv, Norm); 4], proj: Option<Conv> },
    ConvNext { dw: Conv, norm: Norm, pw1: Conv, pw2: Conv, proj: Option<Conv> },
}

impl Block {
    pub fn apply<T: Element>(&self, f: &mut Fwd<'_, T>, x: Var) -> Result<Var> {
        match self {
            Block::Plain { units } => {
                let h = unit_apply(&units[0], f, x)?;
                unit_apply(&units[1], f, h)
            }
            Block::Residual { units, proj } => {
                let h = unit_apply(&units[0], f, x)?;
                let h = unit_apply(&units[1], f, h)?;
                let s = shortcut(proj, f, x)?;
                f.tape.add(h, s)
            }
            Block::Deep { units, proj } => {
                let h = unit_apply(&units[0], f, x)?;
                let h = unit_apply(&units[1], f, h)?;
                let s = shortcut(proj, f, x)?;
                let h1 = f.tape.add(h, s)?;
                let h = unit_apply(&units[2], f, h1)?;
                let h = unit_apply(&units[3], f, h)?;
                f.tape.add(h, h1)
            }
            Block::ConvNext { dw, norm, pw1, pw2, proj } => {
                let h = dw.apply(f, x)?;
                let h = norm.apply(f, h)?;
                let h = pw1.apply(f, h)?;
                let h = f.tape.gelu(h)?;
                let h = pw2.apply(f, h)?;
                let s = shortcut(proj, f, x)?;
                f.tape.add(h, s)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Down {
    Max,
    Avg,
    Learned(Conv),
}

impl Down {
    pub fn apply<T: Element>(&self, f: &mut Fwd<'_, T>, x: Var) -> Result<Var> {
        match self {
            Down::Max => f.tape.max_pool2(x),
            Down::Avg => f.tape.avg_pool2(x),
            Down::Learned(c) => c.apply(f, x),
        }
    }
}

/// One encoder-decoder pass.
///
/// A `continuation` wave (DW-Net waves 2..K) has no block of its own at
/// level 1: its path starts from the previous wave's level-1 decoder output,
/// and every deeper encoder block consumes `concat(down(path), previous
/// wave's decoder output at that level)`.
#[derive(Debug, Clone)]
pub(crate) struct Wave {
    pub continuation: bool,
    /// Lowest level this wave decodes back to (0 or 1).
    pub end_level: usize,
    pub enc: Vec<Option<Block>>,
    pub downs: Vec<Option<Down>>,
    pub bottleneck_extra: Vec<Block>,
    pub ups: Vec<Option<ConvT>>,
    pub dec: Vec<Option<Block>>,
}

/// Per-level activations produced by one wave.
pub(crate) struct WaveOutputs {
    pub enc: Vec<Option<Var>>,
    pub dec: Vec<Option<Var>>,
}

impl Wave {
    /// Wire a wave. `cin` is the channel count of the wave input at its start
    /// level (ignored for continuation waves).
    pub fn build(b: &mut Builder<'_>, wave: usize, cin: usize, continuation: bool, end_level: usize) -> Wave {
        let cfg = *b.cfg;
        let levels = cfg.levels;
        let ch = |l: usize| cfg.channels_at(l);
        let start = usize::from(continuation);
        let mut enc: Vec<Option<Block>> = (0..levels).map(|_| None).collect();
        let mut downs: Vec<Option<Down>> = (0..levels).map(|_| None).collect();
        let mut ups: Vec<Option<ConvT>> = (0..levels).map(|_| None).collect();
        let mut dec: Vec<Option<Block>> = (0..levels).map(|_| None).collect();
        let mut bottleneck_extra = Vec::new();

        if !continuation {
            let prefix = format!("w{wave}.enc0");
            enc[0] = Some(b.block(&prefix, Ctx::new(wave, 0, Stage::Encoder), cin, ch(0)));
        }
        for l in start + 1..levels {
            let stage = if l == levels - 1 { Stage::Bottleneck } else { Stage::Encoder };
            let down_ctx = Ctx::new(wave, l - 1, Stage::Down);
            downs[l - 1] = Some(match cfg.family {
                Family::UNetBase | Family::CNUNet | Family::UNetDeep => {
                    b.note(down_ctx, LayerKind::MaxPool, ch(l - 1), ch(l - 1), "down");
                    Down::Max
                }
                Family::SineNet | Family::DWNet => {
                    b.note(down_ctx, LayerKind::AvgPool, ch(l - 1), ch(l - 1), "down");
                    Down::Avg
                }
                Family::UNetMod => {
                    let prefix = format!("w{wave}.down{}", l - 1);
                    Down::Learned(b.conv(&prefix, down_ctx, "down", ch(l - 1), ch(l - 1), 2, 2, 1))
                }
            });
            let ctx = Ctx::new(wave, l, stage);
            let mut block_in = ch(l - 1);
            if continuation {
                b.note(ctx, LayerKind::Concat { cross_wave: true }, ch(l - 1) + ch(l), ch(l - 1) + ch(l), "cross_skip");
                block_in += ch(l);
            }
            let prefix = format!("w{wave}.enc{l}");
            enc[l] = Some(b.block(&prefix, ctx, block_in, ch(l)));
            if l == levels - 1 {
                for i in 1..cfg.family.bottleneck_blocks() {
                    let prefix = format!("w{wave}.bottleneck{i}");
                    bottleneck_extra.push(b.block(&prefix, ctx, ch(l), ch(l)));
                }
            }
        }
        for l in (end_level..levels - 1).rev() {
            let ctx = Ctx::new(wave, l, Stage::Decoder);
            let prefix = format!("w{wave}.dec{l}");
            ups[l] = Some(b.conv_transpose(&prefix, Ctx::new(wave, l, Stage::Up), ch(l + 1), ch(l)));
            let cross = continuation && l <= 1;
            b.note(
                ctx,
                LayerKind::Concat { cross_wave: cross },
                2 * ch(l),
                2 * ch(l),
                if cross { "cross_skip" } else { "skip" },
            );
            dec[l] = Some(b.block(&prefix, ctx, 2 * ch(l), ch(l)));
        }
        Wave { continuation, end_level, enc, downs, bottleneck_extra, ups, dec }
    }

    /// Run the wave.
    ///
    /// * `input`: level-0 input for a full wave, or the previous wave's
    ///   level-1 decoder output for a continuation wave.
    /// * `prev_dec`: previous wave's decoder outputs (continuation only).
    /// * `long_skip`: first wave's level-0 encoder output, consumed when a
    ///   continuation wave decodes back to level 0.
    pub fn apply<T: Element>(
        &self,
        f: &mut Fwd<'_, T>,
        input: Var,
        prev_dec: Option<&[Option<Var>]>,
        long_skip: Option<Var>,
    ) -> Result<WaveOutputs> {
        let levels = self.enc.len();
        let mut enc: Vec<Option<Var>> = vec![None; levels];
        let start = usize::from(self.continuation);
        enc[start] = Some(match &self.enc[start] {
            Some(b) if !self.continuation => b.apply(f, input)?,
            _ => input,
        });
        for l in start + 1..levels {
            let prev = enc[l - 1].expect("encoder path");
            let mut h = self.downs[l - 1].as_ref().expect("down").apply(f, prev)?;
            if self.continuation {
                let side = prev_dec.and_then(|d| d[l]).expect("previous wave decoder output");
                h = f.tape.concat_channels(&[h, side])?;
            }
            h = self.enc[l].as_ref().expect("encoder block").apply(f, h)?;
            if l == levels - 1 {
                for b in &self.bottleneck_extra {
                    h = b.apply(f, h)?;
                }
            }
            enc[l] = Some(h);
        }
        let mut dec: Vec<Option<Var>> = vec![None; levels];
        dec[levels - 1] = enc[levels - 1];
        for l in (self.end_level..levels - 1).rev() {
            let u = self.ups[l].as_ref().expect("up").apply(f, dec[l + 1].expect("decoder path"))?;
            let skip = if l == 0 && self.continuation {
                long_skip.expect("level-0 skip from the first wave")
            } else {
                enc[l].expect("skip")
            };
            let h = f.tape.concat_channels(&[u, skip])?;
            dec[l] = Some(self.dec[l].as_ref().expect("decoder block").apply(f, h)?);
        }
        Ok(WaveOutputs { enc, dec })
    }
}
