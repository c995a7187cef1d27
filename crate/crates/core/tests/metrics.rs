use std::f64::consts::PI;

use dwnet::arch::{Family, Model, ModelConfig};
use dwnet::metrics::{autocorrelation, radial_power, radial_spectrum, rollout, scaled_l2, stat_err};
use dwnet::tensor::{Shape, Tensor};
use dwnet::trajectory::{FieldStats, Trajectory};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn noise(n: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample::<f32, _>(StandardNormal)).collect()
}

fn history(frames: usize, fields: usize, n: usize, seed: u64) -> Trajectory {
    let names = (0..fields).map(|k| format!("f{k}")).collect();
    let mut t = Trajectory::new([frames, fields, n, n], noise(frames * fields * n * n, seed), 0.5, names).unwrap();
    t.periodic = [true, true];
    t
}

fn model(hist: usize, fields: usize, seed: u64) -> Model {
    Model::build(ModelConfig::new(Family::DWNet, 4, hist * fields, fields).with_levels(3), seed).unwrap()
}

#[test]
fn one_step_rollout_is_a_denormalized_forward_pass() {
    let m = model(2, 2, 1);
    let h = history(3, 2, 16, 2);
    let stats = FieldStats { mean: vec![0.5, -1.0], std: vec![2.0, 0.25] };
    let r = rollout(&m, &h, 1, &stats).unwrap();
    assert_eq!(r.trajectory.frames(), 1);
    assert!(r.blew_up_at.is_none());

    let plane = 16 * 16;
    let mut x = Vec::new();
    for t in 1..3 {
        for k in 0..2 {
            x.extend(h.field(t, k).iter().map(|&v| ((v as f64 - stats.mean[k]) / stats.std[k]) as f32));
        }
    }
    let y = m.predict(&Tensor::from_vec(Shape::new(1, 4, 16, 16), x).unwrap()).unwrap();
    for k in 0..2 {
        for p in 0..plane {
            let expect = y.data()[k * plane + p] as f64 * stats.std[k] + stats.mean[k];
            assert!((r.trajectory.field(0, k)[p] as f64 - expect).abs() < 1e-5);
        }
    }
}

#[test]
fn constant_output_model_gives_a_constant_trajectory() {
    let mut m = model(1, 1, 3);
    let names: Vec<String> = m.param_names().to_vec();
    for (p, name) in m.params_mut().iter_mut().zip(&names) {
        let head_bias = name.starts_with("head") && name.ends_with(".bias");
        p.data_mut().iter_mut().for_each(|v| *v = if head_bias { 0.75 } else { 0.0 });
    }
    let r = rollout(&m, &history(1, 1, 16, 4), 6, &FieldStats::identity(1)).unwrap();
    assert_eq!(r.trajectory.frames(), 6);
    assert!(r.trajectory.data().iter().all(|&v| v == 0.75));
}

#[test]
fn rollout_is_bitwise_deterministic() {
    let m = model(1, 1, 5);
    let h = history(2, 1, 16, 6);
    let stats = FieldStats::pooled(std::slice::from_ref(&h)).unwrap();
    let a = rollout(&m, &h, 5, &stats).unwrap().trajectory;
    let b = rollout(&m, &h, 5, &stats).unwrap().trajectory;
    assert_eq!(a.data(), b.data());
}

#[test]
fn rollout_rejects_mismatched_history() {
    let m = model(2, 1, 0);
    assert!(rollout(&m, &history(1, 1, 16, 0), 3, &FieldStats::identity(1)).is_err());
    assert!(rollout(&m, &history(3, 2, 16, 0), 3, &FieldStats::identity(2)).is_err());
}

#[test]
fn white_noise_spectrum_is_flat() {
    let n = 64;
    let t = history(50, 1, n, 9);
    let s = radial_spectrum(&t, 0, 0).unwrap();
    let bins = &s.power[4..=n / 4];
    let mean = bins.iter().sum::<f64>() / bins.len() as f64;
    for (i, p) in bins.iter().enumerate() {
        assert!(*p < 3.0 * mean && *p > mean / 3.0, "bin {}: {p} vs mean {mean}", i + 4);
    }
}

#[test]
fn spectrum_of_a_sine_sits_in_one_bin() {
    let n = 64;
    let data: Vec<f32> = (0..3 * n * n).map(|i| (4.0 * 2.0 * PI * (i % n) as f64 / n as f64).sin() as f32).collect();
    let mut t = Trajectory::new([3, 1, n, n], data, 1.0, vec!["u".into()]).unwrap();
    t.periodic = [true, true];
    let s = radial_spectrum(&t, 0, 1).unwrap();
    let peak = s.power[4];
    assert!((peak - (n * n) as f64 / 2.0).abs() < 1e-6 * peak);
    assert!(s.power.iter().enumerate().all(|(k, p)| k == 4 || *p < 1e-10 * peak));
    assert!(s.k.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn white_noise_decorrelates() {
    let len = 2000;
    let s: Vec<f64> = noise(len, 11).into_iter().map(f64::from).collect();
    let r = autocorrelation(&s, 20).unwrap();
    assert_eq!(r[0], 1.0);
    let bound = 3.0 / (len as f64).sqrt();
    assert!(r[1..].iter().all(|v| v.abs() < bound), "{r:?}");
}

#[test]
fn periodic_series_peaks_at_its_period() {
    for period in [3usize, 7, 12] {
        let s: Vec<f64> =
            (0..400).map(|i| (2.0 * PI * i as f64 / period as f64).cos() + 0.1 * (i % 2) as f64).collect();
        let r = autocorrelation(&s, period + period / 2).unwrap();
        let best = (1..r.len()).max_by(|&a, &b| r[a].total_cmp(&r[b])).unwrap();
        assert_eq!(best, period);
    }
}

#[test]
fn stat_err_offset_example() {
    let y: Vec<f64> = (0..20).map(|i| (i as f64 * 0.3).sin() * 4.0).collect();
    let mean = y.iter().sum::<f64>() / 20.0;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 20.0;
    let c = 0.7;
    let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
    assert!((stat_err(&shifted, &y).unwrap() - c * c / var).abs() < 1e-9);
}

proptest! {
    #[test]
    fn scaled_l2_reports_the_scale(a in -3.0f32..3.0, seed in any::<u64>()) {
        let truth = noise(64, seed);
        prop_assume!(truth.iter().any(|&v| v != 0.0));
        let pred: Vec<f32> = truth.iter().map(|v| a * v).collect();
        let e = scaled_l2(&pred, &truth, 1).unwrap();
        prop_assert!((e - (a as f64 - 1.0).abs()).abs() < 1e-6);
    }

    #[test]
    fn parseval_holds_per_frame(seed in any::<u64>(), logn in 3u32..7, aspect in 0u32..2) {
        let (h, w) = (1usize << logn, 1usize << (logn + aspect));
        let f = noise(h * w, seed);
        let bins = radial_power(&f, h, w).unwrap();
        let energy: f64 = f.iter().map(|&v| (v as f64).powi(2)).sum();
        prop_assert!((bins.iter().sum::<f64>() - energy).abs() < 1e-4 * energy);
        prop_assert!(bins.iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn stat_err_ignores_common_offset_and_scale(
        seed in any::<u64>(), c in -10.0f64..10.0, s in 0.1f64..10.0,
    ) {
        let y: Vec<f64> = noise(32, seed).into_iter().map(f64::from).collect();
        let yt: Vec<f64> = noise(32, seed ^ 1).into_iter().map(f64::from).collect();
        let base = stat_err(&y, &yt).unwrap();
        let shift = |v: &[f64]| v.iter().map(|x| s * x + c).collect::<Vec<f64>>();
        let moved = stat_err(&shift(&y), &shift(&yt)).unwrap();
        prop_assert!((moved - base).abs() < 1e-9 * base.max(1.0));
    }
}
