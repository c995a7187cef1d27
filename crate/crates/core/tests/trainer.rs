use dwnet::arch::{Checkpoint, Family, Model, ModelConfig};
use dwnet::autodiff::LossKind;
use dwnet::datagen::{generate_one, SolverConfig, SystemKind};
use dwnet::tensor::{Shape, Tensor};
use dwnet::trainer::{adam_step, lr_schedule, train, train_with_state, AdamState, TrainConfig};
use dwnet::trajectory::Trajectory;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn kolmogorov(frames: usize) -> Trajectory {
    let mut cfg = SolverConfig::new(SystemKind::Kolmogorov, 32, frames);
    cfg.warmup_frames = 2;
    generate_one(&cfg, 7).unwrap()
}

fn small_model(seed: u64) -> Model {
    Model::build(ModelConfig::new(Family::UNetBase, 4, 1, 1).with_levels(3), seed).unwrap()
}

#[test]
fn adam_descends_a_quadratic_bowl() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let c: Vec<f32> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
    let theta0: Vec<f32> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut params = vec![Tensor::from_vec(Shape::new(6, 1, 1, 1), theta0).unwrap()];
    let mut state = AdamState::new(&params);
    for _ in 0..200 {
        let g: Vec<f32> = params[0].data().iter().zip(&c).map(|(p, c)| 2.0 * (p - c)).collect();
        let g = [Tensor::from_vec(Shape::new(6, 1, 1, 1), g).unwrap()];
        adam_step(&mut params, &g, &mut state, 0.05).unwrap();
    }
    let dist = params[0].data().iter().zip(&c).map(|(p, c)| ((p - c) as f64).powi(2)).sum::<f64>().sqrt();
    assert!(dist < 1e-2, "distance {dist}");
    assert_eq!(state.step, 200);
}

#[test]
fn schedule_peak_is_bounded_for_eighty_epochs() {
    let peak = (0..=80).map(|i| lr_schedule(i, 80, 1.0)).fold(0.0, f64::max);
    assert!(peak <= 0.013 + 1e-15);
    assert!((peak - 0.013).abs() < 1e-12);
}

proptest! {
    #[test]
    fn schedule_is_positive_and_scales_with_alpha(n_half in 1usize..200, alpha in 0.01f64..1.0) {
        let n = 2 * n_half;
        for i in 0..=n {
            let lr = lr_schedule(i, n, alpha);
            prop_assert!(lr > 0.0);
            prop_assert!(lr <= 0.013 * alpha * (1.0 + 1e-12));
            prop_assert!((lr / lr_schedule(i, n, 1.0) - alpha).abs() < 1e-12);
        }
    }

    #[test]
    fn schedule_steps_are_small_on_a_fine_grid(n_half in 200usize..400) {
        // Adjacent epochs differ by at most the Lipschitz bound of the closed form.
        let n = 2 * n_half;
        let nw = n as f64 / 2.0;
        let bound = 0.01 * (0.5 * 2.0 * std::f64::consts::PI / nw + 1.3 * 5.0 / n as f64);
        for i in 0..n {
            prop_assert!((lr_schedule(i + 1, n, 1.0) - lr_schedule(i, n, 1.0)).abs() <= bound);
        }
    }
}

#[test]
fn identical_seeds_give_identical_runs() {
    let data = vec![kolmogorov(6)];
    let cfg = TrainConfig::new(2, 2, 0.5, 12, 1, LossKind::ScaledL2);
    let mut a = small_model(12);
    let mut b = small_model(12);
    let ra = train(&mut a, &data, &cfg).unwrap();
    let rb = train(&mut b, &data, &cfg).unwrap();
    assert_eq!(ra.final_loss.to_bits(), rb.final_loss.to_bits());
    assert_eq!(ra.step_losses, rb.step_losses);
    assert_eq!(a.params(), b.params());
}

#[test]
fn three_seeds_give_three_distinct_records() {
    let data = vec![kolmogorov(6)];
    let records: Vec<_> = [2u64, 12, 22]
        .iter()
        .map(|&s| {
            let mut m = small_model(s);
            train(&mut m, &data, &TrainConfig::new(2, 2, 0.5, s, 1, LossKind::ScaledL2)).unwrap()
        })
        .collect();
    assert_eq!(records.len(), 3);
    assert_eq!(records.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![2, 12, 22]);
    assert_ne!(records[0].final_loss, records[1].final_loss);
    assert!(records.iter().all(|r| r.train_wall_seconds > 0.0 && r.final_loss.is_finite()));
}

#[test]
fn two_epochs_take_longer_than_one() {
    let data = vec![kolmogorov(10)];
    let time = |epochs| {
        let mut m = small_model(3);
        train(&mut m, &data, &TrainConfig::new(epochs, 2, 0.5, 3, 1, LossKind::ScaledL2)).unwrap().train_wall_seconds
    };
    let best = |epochs| (0..3).map(|_| time(epochs)).fold(f64::INFINITY, f64::min);
    let t1 = best(2);
    let t2 = best(4);
    assert!(t2 >= 1.5 * t1, "{t2} vs {t1}");
}

#[test]
fn adam_state_survives_checkpointing() {
    let data = vec![kolmogorov(5)];
    let mut m = small_model(1);
    let (_, state) =
        train_with_state(&mut m, &data, &TrainConfig::new(2, 2, 0.5, 1, 1, LossKind::ScaledL2), None).unwrap();
    let mut ck = Checkpoint::new(m);
    ck.adam = Some(state.clone());
    let mut buf = Vec::new();
    ck.write_to(&mut buf).unwrap();
    let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
    assert_eq!(back.adam.as_ref(), Some(&state));
    assert_eq!(back.model.params(), ck.model.params());
}

#[test]
fn empty_and_short_datasets_are_rejected() {
    let mut m = small_model(0);
    let cfg = TrainConfig::new(2, 2, 0.5, 0, 1, LossKind::Mse);
    assert!(train(&mut m, &[], &cfg).is_err());
    let one = kolmogorov(1);
    assert!(train(&mut m, &[one], &cfg).is_err());
    let odd = TrainConfig::new(3, 2, 0.5, 0, 1, LossKind::Mse);
    assert!(train(&mut m, &[kolmogorov(4)], &odd).is_err());
}
