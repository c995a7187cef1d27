use dwnet::arch::{Family, LayerInfo, LayerKind, Model, ModelConfig, Stage};
use dwnet::autodiff::{LossKind, Tape};
use dwnet::tensor::{PaddingMode, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: Shape, seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..shape.numel()).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Parameter count of a plain U-Net written out from the wiring rules:
/// two 3×3 conv + group-norm pairs per block, 2×2 transposed convs up, a
/// skip concat before each decoder block, and a 1×1 head.
fn unet_base_count(w0: usize, levels: usize, cin: usize, cout: usize) -> usize {
    let conv = |i: usize, o: usize, k: usize| i * o * k * k + o;
    let norm = |c: usize| 2 * c;
    let block = |i: usize, o: usize| conv(i, o, 3) + norm(o) + conv(o, o, 3) + norm(o);
    let ch = |l: usize| w0 << l;
    let mut n = block(cin, ch(0));
    for l in 1..levels {
        n += block(ch(l - 1), ch(l));
    }
    for l in 0..levels - 1 {
        n += ch(l + 1) * ch(l) * 4 + ch(l);
        n += block(2 * ch(l), ch(l));
    }
    n + conv(ch(0), cout, 1)
}

#[test]
fn unet_base_count_matches_counting_oracle() {
    for (w0, levels, cin, cout) in [(4, 2, 1, 1), (4, 5, 4, 1), (8, 5, 2, 2), (6, 3, 3, 1)] {
        let m = Model::build(ModelConfig::new(Family::UNetBase, w0, cin, cout).with_levels(levels), 0).unwrap();
        assert_eq!(m.param_count(), unet_base_count(w0, levels, cin, cout), "w0={w0} L={levels}");
    }
}

#[test]
fn unet_base_five_levels_on_128() {
    let m = Model::build(ModelConfig::new(Family::UNetBase, 4, 4, 1), 3).unwrap();
    assert_eq!(m.config().levels, 5);
    let y = m.predict(&random(Shape::new(2, 4, 128, 128), 1)).unwrap();
    assert_eq!(y.shape(), Shape::new(2, 1, 128, 128));
    assert!(y.is_finite());
}

#[test]
fn every_family_preserves_shape() {
    for fam in Family::ALL {
        let m = Model::build(ModelConfig::new(fam, 4, 2, 1), 5).unwrap();
        for n in [32, 64, 128] {
            let y = m.predict(&random(Shape::new(1, 2, n, n), n as u64)).unwrap();
            assert_eq!(y.shape(), Shape::new(1, 1, n, n), "{fam} at {n}");
            assert!(y.is_finite(), "{fam} at {n}");
        }
    }
}

fn conv_widths(rows: &[LayerInfo]) -> impl Iterator<Item = &LayerInfo> {
    rows.iter().filter(|r| matches!(r.kind, LayerKind::Block))
}

#[test]
fn widths_double_per_level() {
    for fam in Family::ALL {
        let m = Model::build(ModelConfig::new(fam, 4, 1, 1), 0).unwrap();
        let levels: std::collections::BTreeSet<usize> = m.describe().iter().map(|r| r.level).collect();
        assert_eq!(levels.into_iter().collect::<Vec<_>>(), vec![0, 1, 2, 3, 4], "{fam}");
        for r in conv_widths(m.describe()) {
            assert_eq!(r.out_channels, 4 << r.level, "{fam}: {r}");
        }
    }
}

fn cross_wave_levels(m: &Model) -> std::collections::BTreeSet<usize> {
    m.describe().iter().filter(|r| r.kind == LayerKind::Concat { cross_wave: true }).map(|r| r.level).collect()
}

#[test]
fn dwnet_has_cross_wave_concats_and_sinenet_none() {
    for k in [2, 3, 4] {
        let dw = Model::build(ModelConfig::new(Family::DWNet, 4, 1, 1).with_waves(k), 0).unwrap();
        for wave in 2..=k {
            let lv: std::collections::BTreeSet<usize> = dw
                .describe()
                .iter()
                .filter(|r| r.wave == wave && r.kind == LayerKind::Concat { cross_wave: true })
                .map(|r| r.level)
                .collect();
            assert!((1..5).all(|l| lv.contains(&l)), "wave {wave} of DW-Net-{k}: {lv:?}");
        }
        let sn = Model::build(ModelConfig::new(Family::SineNet, 4, 1, 1).with_waves(k), 0).unwrap();
        assert!(cross_wave_levels(&sn).is_empty());
    }
}

#[test]
fn intermediate_dwnet_waves_skip_level_zero() {
    for k in [3, 5] {
        let m = Model::build(ModelConfig::new(Family::DWNet, 4, 1, 1).with_waves(k), 0).unwrap();
        for r in m.describe().iter().filter(|r| r.level == 0) {
            let ok = (r.wave == 1 && matches!(r.stage, Stage::Encoder | Stage::Down))
                || (r.wave == k && matches!(r.stage, Stage::Up | Stage::Decoder | Stage::Head));
            assert!(ok, "unexpected level-0 layer in DW-Net-{k}: {r}");
        }
    }
}

fn blocks(m: &Model) -> Vec<Vec<&LayerInfo>> {
    let mut out: std::collections::BTreeMap<usize, Vec<&LayerInfo>> = Default::default();
    for r in m.describe() {
        if let Some(b) = r.block {
            out.entry(b).or_default().push(r);
        }
    }
    out.into_values().collect()
}

#[test]
fn unet_deep_blocks_have_four_convs() {
    let m = Model::build(ModelConfig::new(Family::UNetDeep, 4, 1, 1), 0).unwrap();
    for b in blocks(&m) {
        let convs = b.iter().filter(|r| matches!(r.kind, LayerKind::Conv { k: 3, .. })).count();
        assert_eq!(convs, 4, "{}", b[0]);
    }
}

#[test]
fn cnunet_blocks_are_depthwise_then_expanding_pointwise() {
    let m = Model::build(ModelConfig::new(Family::CNUNet, 4, 1, 1), 0).unwrap();
    for b in blocks(&m) {
        let dw: Vec<_> = b.iter().filter(|r| r.role == "dw").collect();
        assert_eq!(dw.len(), 1);
        assert_eq!(dw[0].kind, LayerKind::Conv { k: 7, stride: 1, groups: dw[0].in_channels });
        let pw1 = b.iter().find(|r| r.role == "pw1").unwrap();
        let pw2 = b.iter().find(|r| r.role == "pw2").unwrap();
        assert_eq!(pw1.kind, LayerKind::Conv { k: 1, stride: 1, groups: 1 });
        assert_eq!(pw2.kind, LayerKind::Conv { k: 1, stride: 1, groups: 1 });
        assert_eq!(pw1.out_channels, 4 * pw2.out_channels);
    }
}

#[test]
fn counts_grow_with_width_and_unet_mod_exceeds_base() {
    for fam in Family::ALL {
        let a = Model::build(ModelConfig::new(fam, 4, 1, 1), 0).unwrap().param_count();
        let b = Model::build(ModelConfig::new(fam, 8, 1, 1), 0).unwrap().param_count();
        assert!(b > a, "{fam}");
    }
    let base = Model::build(ModelConfig::new(Family::UNetBase, 4, 1, 1), 0).unwrap().param_count();
    let m = Model::build(ModelConfig::new(Family::UNetMod, 4, 1, 1), 0).unwrap().param_count();
    assert!(m > base);
}

#[test]
fn build_is_deterministic() {
    for fam in Family::ALL {
        let a = Model::build(ModelConfig::new(fam, 4, 2, 1), 9).unwrap();
        let b = Model::build(ModelConfig::new(fam, 4, 2, 1), 9).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(a.param_names(), b.param_names());
    }
}

#[test]
fn zero_input_with_zero_biases_gives_zero_output() {
    for fam in Family::ALL {
        let mut m = Model::build(ModelConfig::new(fam, 4, 1, 1).with_levels(3), 4).unwrap();
        let names: Vec<String> = m.param_names().to_vec();
        for (p, name) in m.params_mut().iter_mut().zip(&names) {
            if name.ends_with(".bias") || name.ends_with(".beta") {
                p.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let y = m.predict(&Tensor::zeros(Shape::new(1, 1, 16, 16))).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0), "{fam}");
    }
}

#[test]
fn sinenet_and_dwnet_differ() {
    let x = random(Shape::new(1, 1, 32, 32), 3);
    let a = Model::build(ModelConfig::new(Family::SineNet, 4, 1, 1).with_waves(2), 1).unwrap();
    let b = Model::build(ModelConfig::new(Family::DWNet, 4, 1, 1).with_waves(2), 1).unwrap();
    assert_ne!(a.param_count(), b.param_count());
    assert_ne!(a.predict(&x).unwrap(), b.predict(&x).unwrap());
}

#[test]
fn every_parameter_receives_gradient() {
    for fam in Family::ALL {
        let cfg = ModelConfig::new(fam, 8, 2, 1).with_levels(4);
        let m = Model::build(cfg, 11).unwrap();
        let x = random(Shape::new(2, 2, 16, 16), 1);
        let t = random(Shape::new(2, 1, 16, 16), 2);
        let mut tape = Tape::new();
        let xv = tape.input(x);
        let y = m.forward(&mut tape, xv).unwrap();
        let loss = tape.loss(y, &t, LossKind::Mse).unwrap();
        let grads = tape.backward(loss).unwrap().into_param_vec(m.params().len());
        for (g, name) in grads.iter().zip(m.param_names()) {
            let norm: f64 = g.as_ref().map_or(0.0, |g| g.data().iter().map(|v| (*v as f64).powi(2)).sum());
            assert!(norm > 0.0, "{fam}: no gradient reaches {name}");
        }
    }
}

#[test]
fn periodic_dwnet_commutes_with_coarse_shifts() {
    let m = Model::build(ModelConfig::new(Family::DWNet, 4, 1, 1).with_padding(PaddingMode::Periodic), 6).unwrap();
    let x = random(Shape::new(1, 1, 64, 64), 8);
    let y = m.predict(&x).unwrap();
    for (dy, dx) in [(16, 0), (0, 32), (16, 48)] {
        let ys = m.predict(&x.roll(dy, dx)).unwrap();
        assert!(ys.max_abs_diff(&y.roll(dy, dx)) < 1e-4, "shift ({dy}, {dx})");
    }
}
