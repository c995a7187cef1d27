//! The six encoder-decoder model families.

mod blocks;
pub mod checkpoint;
pub mod config;
pub mod layout;

pub use checkpoint::Checkpoint;
pub use config::{Family, ModelConfig};
pub use layout::{LayerInfo, LayerKind, Stage};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{shape_err, Error, Result};
use crate::tensor::{Element, Tensor};
use blocks::{Builder, Conv, Ctx, Fwd, Wave};

#[derive(Debug, Clone)]
struct Wiring {
    stem: Option<Conv>,
    waves: Vec<Wave>,
    head: Conv,
}

/// An instantiated model: configuration, ordered named parameters and wiring.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: Vec<Tensor<f32>>,
    names: Vec<String>,
    layout: Vec<LayerInfo>,
    wiring: Wiring,
}

impl Model {
    /// Build and initialize a model deterministically from `seed`.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Model> {
        config.validate()?;
        let mut b = Builder::new(&config, ChaCha8Rng::seed_from_u64(seed));
        let w0 = config.channels_at(0);
        let mut wave_in = config.in_channels;
        let stem = if config.family == Family::CNUNet {
            wave_in = w0;
            Some(b.conv("stem", Ctx::new(1, 0, Stage::Stem), "stem", config.in_channels, w0, 3, 1, 1))
        } else {
            None
        };
        let mut waves = Vec::with_capacity(config.waves);
        for k in 1..=config.waves {
            let wave = match config.family {
                Family::DWNet => {
                    let end = if k == config.waves { 0 } else { 1 };
                    Wave::build(&mut b, k, wave_in, k > 1, end)
                }
                _ => {
                    let cin = if k == 1 { wave_in } else { w0 };
                    Wave::build(&mut b, k, cin, false, 0)
                }
            };
            waves.push(wave);
        }
        let head = b.conv("head", Ctx::new(config.waves, 0, Stage::Head), "head", w0, config.out_channels, 1, 1, 1);
        let Builder { params, names, layout, .. } = b;
        Ok(Model { config, params, names, layout, wiring: Wiring { stem, waves, head } })
    }

    /// Assemble a model from an explicit parameter list (checkpoint loading).
    pub fn from_parts(config: ModelConfig, params: Vec<Tensor<f32>>, names: &[String]) -> Result<Model> {
        let mut m = Model::build(config, 0)?;
        if params.len() != m.params.len() {
            return Err(Error::Format {
                what: "model parameters",
                detail: format!("expected {} tensors, got {}", m.params.len(), params.len()),
            });
        }
        for (i, p) in params.iter().enumerate() {
            if p.shape() != m.params[i].shape() || names[i] != m.names[i] {
                return Err(Error::Format {
                    what: "model parameters",
                    detail: format!(
                        "parameter {i} ('{}') does not match '{}' {:?}",
                        names[i],
                        m.names[i],
                        m.params[i].shape()
                    ),
                });
            }
        }
        m.params = params;
        Ok(m)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor<f32>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<f32>] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Ordered layer listing, one row per layer, pool, concat and add.
    pub fn describe(&self) -> &[LayerInfo] {
        &self.layout
    }

    pub fn check_input(&self, shape: [usize; 4]) -> Result<()> {
        if shape[1] != self.config.in_channels {
            return Err(shape_err(
                "model forward",
                format!("expected {} input channels, got {}", self.config.in_channels, shape[1]),
            ));
        }
        self.config.check_spatial(shape[2], shape[3])
    }

    /// Forward pass recording on an f32 tape with this model's parameters.
    pub fn forward(&self, tape: &mut Tape<f32>, x: Var) -> Result<Var> {
        self.forward_with(&self.params, tape, x)
    }

    /// Forward pass with caller-supplied parameters of any element type.
    pub fn forward_with<T: Element>(&self, params: &[Tensor<T>], tape: &mut Tape<T>, x: Var) -> Result<Var> {
        if params.len() != self.params.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameter tensors, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.check_input(tape.value(x)?.shape().0)?;
        let p = params.iter().enumerate().map(|(i, t)| tape.param(i, t.clone())).collect();
        let mut f = Fwd { tape, p, pad: self.config.padding };
        let w = &self.wiring;
        let mut h = match &w.stem {
            Some(s) => s.apply(&mut f, x)?,
            None => x,
        };
        if self.config.family == Family::DWNet {
            let first = w.waves[0].apply(&mut f, h, None, None)?;
            let long_skip = first.enc[0];
            let mut prev = first.dec;
            for wave in &w.waves[1..] {
                let input = prev[1].expect("level-1 decoder output");
                prev = wave.apply(&mut f, input, Some(&prev), long_skip)?.dec;
            }
            h = prev[0].expect("level-0 decoder output");
        } else {
            for wave in &w.waves {
                h = wave.apply(&mut f, h, None, None)?.dec[0].expect("level-0 decoder output");
            }
        }
        w.head.apply(&mut f, h)
    }

    /// Evaluate on a batch without keeping the tape.
    pub fn predict(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        let mut tape = Tape::new();
        let xv = tape.input(x.clone());
        let y = self.forward(&mut tape, xv)?;
        Ok(tape.value(y)?.clone())
    }
}
