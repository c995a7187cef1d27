use std::f64::consts::PI;

use dwnet::datagen::spectral::max_abs;
use dwnet::datagen::{
    gaussian_random_field, generate_one, poisson_bracket, GrfSpec, Grid, HwParams, HwSolver, KolmogorovParams,
    KolmogorovSolver, Solver, SolverConfig, SystemKind,
};
use dwnet::metrics::{radial_power, spectral_slope};
use proptest::prelude::*;

fn grid(n: usize) -> Grid {
    Grid::new(n, 2.0 * PI).unwrap()
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

#[test]
fn grf_is_zero_mean_and_seed_dependent() {
    for seed in 0..5 {
        let f = gaussian_random_field(32, seed, GrfSpec::default()).unwrap();
        assert!((f.iter().sum::<f64>() / f.len() as f64).abs() < 1e-12);
        assert_ne!(f, gaussian_random_field(32, seed + 100, GrfSpec::default()).unwrap());
    }
}

/// Number of lattice modes falling in each `round(|k|)` bin of an `n x n` grid.
fn shell_counts(n: usize) -> Vec<f64> {
    let signed = |i: usize| if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
    let mut c = vec![0.0; n];
    for y in 0..n {
        for x in 0..n {
            c[(signed(x).hypot(signed(y))).round() as usize] += 1.0;
        }
    }
    c
}

#[test]
fn grf_spectrum_follows_the_prescribed_law() {
    let n = 64;
    let spec = GrfSpec::default();
    let counts = shell_counts(n);
    let mut acc = vec![0.0; n];
    for seed in 0..20 {
        let f: Vec<f32> = gaussian_random_field(n, seed, spec).unwrap().iter().map(|&v| v as f32).collect();
        for (a, p) in acc.iter_mut().zip(radial_power(&f, n, n).unwrap()) {
            *a += p;
        }
    }
    let per_mode: Vec<f64> = acc.iter().zip(&counts).map(|(p, c)| if *c > 0.0 { p / c } else { 0.0 }).collect();
    let measured = spectral_slope(&per_mode, 4, n / 4).unwrap();
    let law: Vec<f64> = (0..n).map(|k| ((k * k) as f64 + spec.tau * spec.tau).powf(-spec.gamma)).collect();
    let expected = spectral_slope(&law, 4, n / 4).unwrap();
    assert!((measured / expected - 1.0).abs() < 0.15, "slope {measured} vs {expected}");
}

#[test]
fn poisson_bracket_of_sines() {
    let n = 64;
    let g = grid(n);
    let (mut a, mut b, mut want) = (vec![0.0; n * n], vec![0.0; n * n], vec![0.0; n * n]);
    for y in 0..n {
        for x in 0..n {
            let (xc, yc) = (g.coord(x), g.coord(y));
            a[y * n + x] = xc.sin();
            b[y * n + x] = yc.sin();
            want[y * n + x] = xc.cos() * yc.cos();
        }
    }
    let got = poisson_bracket(&g, &a, &b).unwrap();
    let err = got.iter().zip(&want).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    assert!(err < 1e-8, "{err}");
    assert!(poisson_bracket(&g, &a, &b[..10]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn poisson_bracket_is_antisymmetric(sa in any::<u64>(), sb in any::<u64>()) {
        let g = grid(32);
        let a = gaussian_random_field(32, sa, GrfSpec::default()).unwrap();
        let b = gaussian_random_field(32, sb, GrfSpec::default()).unwrap();
        prop_assert!(max_abs(&poisson_bracket(&g, &a, &a).unwrap()) < 1e-10);
        let ab = poisson_bracket(&g, &a, &b).unwrap();
        let ba = poisson_bracket(&g, &b, &a).unwrap();
        prop_assert!(ab.iter().zip(&ba).all(|(p, q)| (p + q).abs() < 1e-10));
    }

    #[test]
    fn kolmogorov_steps_stay_dealiased_and_real(seed in 0u64..1000) {
        let g = grid(32);
        let w0 = gaussian_random_field(32, seed, GrfSpec::default()).unwrap();
        let mut s = KolmogorovSolver::new(g.clone(), KolmogorovParams::default(), &w0).unwrap();
        for _ in 0..3 {
            s.step(2e-3).unwrap();
            prop_assert_eq!(g.aliased_max(s.omega_spec()), 0.0);
            let back = g.inverse_complex(s.omega_spec());
            let re: Vec<f64> = back.iter().map(|v| v.re).collect();
            let im = back.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
            prop_assert!(im < 1e-12 * rms(&re));
            prop_assert!(s.divergence_norm() < 1e-10);
        }
    }

    #[test]
    fn hw_steps_stay_dealiased_and_real(seed in 0u64..1000) {
        let p = HwParams::default();
        let g = Grid::new(32, p.domain_length()).unwrap();
        let n0: Vec<f64> = gaussian_random_field(32, seed, GrfSpec::default()).unwrap().iter().map(|v| 0.1 * v).collect();
        let p0: Vec<f64> = gaussian_random_field(32, seed + 1, GrfSpec::default()).unwrap().iter().map(|v| 0.1 * v).collect();
        let mut s = HwSolver::new(g.clone(), p, &n0, &p0).unwrap();
        for _ in 0..3 {
            s.step(0.05).unwrap();
            prop_assert_eq!(g.aliased_max(s.n_spec()), 0.0);
            prop_assert_eq!(g.aliased_max(s.vorticity_spec()), 0.0);
            for spec in [s.n_spec(), s.vorticity_spec()] {
                let back = g.inverse_complex(spec);
                let re: Vec<f64> = back.iter().map(|v| v.re).collect();
                let im = back.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
                prop_assert!(im < 1e-12 * rms(&re));
            }
        }
    }
}

#[test]
fn kolmogorov_laminar_state_is_steady() {
    let n = 32;
    let g = grid(n);
    let amp = -8.0 / (64.0 / 1000.0 + 0.1);
    let w0: Vec<f64> = (0..n * n).map(|i| amp * (8.0 * g.coord(i % n)).cos()).collect();
    let mut s = KolmogorovSolver::new(g, KolmogorovParams::default(), &w0).unwrap();
    for _ in 0..100 {
        s.step(1e-3).unwrap();
    }
    let w = s.omega();
    let err = w.iter().zip(&w0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-6 * amp.abs(), "{err}");
}

#[test]
fn kolmogorov_forcing_from_rest_excites_one_mode_family() {
    let g = grid(32);
    let mut s = KolmogorovSolver::new(g.clone(), KolmogorovParams::default(), &vec![0.0; 32 * 32]).unwrap();
    for _ in 0..5 {
        s.step(1e-2).unwrap();
    }
    let spec = s.omega_spec();
    let peak = spec.iter().map(|v| v.norm()).fold(0.0, f64::max);
    assert!(peak > 0.0);
    for (i, v) in spec.iter().enumerate() {
        if !(g.kx[i].abs() == 8.0 && g.ky[i] == 0.0) {
            assert!(v.norm() <= 1e-12 * peak, "mode ({}, {}) = {v}", g.kx[i], g.ky[i]);
        }
    }
}

#[test]
fn kolmogorov_inviscid_unforced_energy_is_conserved() {
    let g = grid(32);
    let w0 = gaussian_random_field(32, 3, GrfSpec::default()).unwrap();
    let params = KolmogorovParams { re: f64::INFINITY, f0: 8.0, drag: 0.0, forcing_scale: 0.0 };
    let mut s = KolmogorovSolver::new(g, params, &w0).unwrap();
    let e0 = s.energy();
    for _ in 0..100 {
        s.step(5e-3).unwrap();
    }
    assert!((s.energy() - e0).abs() < 1e-4 * e0);
}

#[test]
fn kolmogorov_cfl_violation_is_an_error() {
    let g = grid(32);
    let w0: Vec<f64> = gaussian_random_field(32, 1, GrfSpec::default()).unwrap().iter().map(|v| 100.0 * v).collect();
    let mut s = KolmogorovSolver::new(g, KolmogorovParams::default(), &w0).unwrap();
    assert!(s.step(1.0).is_err());
}

#[test]
fn hw_zero_state_is_fixed() {
    let p = HwParams::default();
    let g = Grid::new(32, p.domain_length()).unwrap();
    let z = vec![0.0; 32 * 32];
    let mut s = HwSolver::new(g, p, &z, &z).unwrap();
    for _ in 0..20 {
        s.step(0.1).unwrap();
    }
    assert!(s.density().iter().chain(&s.potential()).all(|&v| v == 0.0));
}

fn hw_with(params: HwParams, amp: f64, seed: u64) -> HwSolver {
    let g = Grid::new(32, params.domain_length()).unwrap();
    let n0: Vec<f64> = gaussian_random_field(32, seed, GrfSpec::default()).unwrap().iter().map(|v| amp * v).collect();
    let p0: Vec<f64> =
        gaussian_random_field(32, seed + 7, GrfSpec::default()).unwrap().iter().map(|v| amp * v).collect();
    HwSolver::new(g, params, &n0, &p0).unwrap()
}

#[test]
fn hw_strong_coupling_drives_density_to_potential() {
    let mut s = hw_with(HwParams { alpha: 1e3, ..HwParams::default() }, 1e-3, 4);
    let gap = |s: &HwSolver| rms(&s.density().iter().zip(&s.potential()).map(|(a, b)| a - b).collect::<Vec<_>>());
    let mut last = gap(&s);
    let first = last;
    for _ in 0..40 {
        s.step(2e-5).unwrap();
        let g = gap(&s);
        assert!(g < last, "{g} >= {last}");
        last = g;
    }
    assert!(last < 0.5 * first);
}

#[test]
fn hw_without_coupling_or_drive_only_dissipates() {
    let params = HwParams { alpha: 0.0, kappa: 0.0, dn: 1e-2, dp: 1e-2, ..HwParams::default() };
    let mut s = hw_with(params, 0.5, 9);
    let (mut n_last, mut v_last) = s.norms();
    for _ in 0..50 {
        s.step(0.02).unwrap();
        let (n, v) = s.norms();
        assert!(n <= n_last * (1.0 + 1e-12) && v <= v_last * (1.0 + 1e-12));
        (n_last, v_last) = (n, v);
    }
}

#[test]
fn generate_is_deterministic_and_counts_frames() {
    for system in [SystemKind::Kolmogorov, SystemKind::HasegawaWakatani] {
        let mut cfg = SolverConfig::new(system, 16, 5);
        cfg.warmup_frames = 1;
        let a = generate_one(&cfg, 3).unwrap();
        let b = generate_one(&cfg, 3).unwrap();
        assert_eq!(a.frames(), 5);
        assert_eq!(a.dims(), b.dims());
        let bytes = |t: &dwnet::trajectory::Trajectory| {
            let mut v = Vec::new();
            t.write_to(&mut v).unwrap();
            v
        };
        assert_eq!(bytes(&a), bytes(&b));
        assert!((a.dt - cfg.output_dt()).abs() < 1e-15);
        assert_ne!(a.data(), generate_one(&cfg, 4).unwrap().data());
    }
}
