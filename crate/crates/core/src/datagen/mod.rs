//! Pseudo-spectral generators for Kolmogorov flow and Hasegawa–Wakatani
//! turbulence, Gaussian-random-field initial conditions and trajectory export.

mod hw;
mod kolmogorov;
pub mod spectral;

pub use hw::{HwParams, HwSolver};
pub use kolmogorov::{KolmogorovParams, KolmogorovSolver};
pub use spectral::{poisson_bracket, Grid};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;
use spectral::Spec;

/// Courant number above which a step is refused.
pub const CFL_LIMIT: f64 = 1.0;
/// Fraction of the CFL-limited step used when choosing `dt` automatically.
pub const CFL_SAFETY: f64 = 0.5;

/// Isotropic spectrum `(|k|^2 + tau^2)^(-gamma)` over integer mode numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrfSpec {
    pub gamma: f64,
    pub tau: f64,
}

impl Default for GrfSpec {
    fn default() -> Self {
        GrfSpec { gamma: 2.5, tau: 3.0 }
    }
}

impl GrfSpec {
    pub fn power(&self, mode_radius: f64) -> f64 {
        (mode_radius * mode_radius + self.tau * self.tau).powf(-self.gamma)
    }
}

/// Zero-mean, unit-variance real field with power spectrum `spec`, built by
/// filtering white noise.
pub fn gaussian_random_field(n: usize, seed: u64, spec: GrfSpec) -> Result<Vec<f64>> {
    let grid = Grid::new(n, 2.0 * std::f64::consts::PI)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut s = grid.forward(&noise);
    for (v, &r) in s.iter_mut().zip(&grid.mode_radius) {
        *v *= spec.power(r).sqrt();
    }
    s[0] = Complex64::new(0.0, 0.0);
    let mut f = grid.inverse(&s);
    let mean = f.iter().sum::<f64>() / f.len() as f64;
    f.iter_mut().for_each(|v| *v -= mean);
    let std = (f.iter().map(|v| v * v).sum::<f64>() / f.len() as f64).sqrt();
    if std > 0.0 {
        f.iter_mut().for_each(|v| *v /= std);
    }
    Ok(f)
}

/// Integrating-factor RK4 for `ds/dt = L s + N(s)` with diagonal `L`.
pub(crate) struct Ifrk4 {
    lin: Vec<Vec<f64>>,
    cached_dt: f64,
    full: Vec<Vec<f64>>,
    half: Vec<Vec<f64>>,
}

impl Ifrk4 {
    pub fn new(lin: Vec<Vec<f64>>) -> Self {
        Ifrk4 { lin, cached_dt: f64::NAN, full: Vec::new(), half: Vec::new() }
    }

    fn factors(&mut self, dt: f64) {
        if self.cached_dt != dt {
            self.full = self.lin.iter().map(|l| l.iter().map(|v| (v * dt).exp()).collect()).collect();
            self.half = self.lin.iter().map(|l| l.iter().map(|v| (v * dt * 0.5).exp()).collect()).collect();
            self.cached_dt = dt;
        }
    }

    pub fn step(&mut self, state: &mut [Spec], dt: f64, mut rhs: impl FnMut(&[Spec]) -> Vec<Spec>) {
        self.factors(dt);
        let (e, h) = (&self.full, &self.half);
        let comb = |f: &dyn Fn(usize, usize) -> Complex64| -> Vec<Spec> {
            (0..state.len()).map(|j| (0..state[j].len()).map(|i| f(j, i)).collect()).collect()
        };
        let a = rhs(state);
        let s1 = comb(&|j, i| h[j][i] * (state[j][i] + 0.5 * dt * a[j][i]));
        let b = rhs(&s1);
        let s2 = comb(&|j, i| h[j][i] * state[j][i] + 0.5 * dt * b[j][i]);
        let c = rhs(&s2);
        let s3 = comb(&|j, i| e[j][i] * state[j][i] + dt * h[j][i] * c[j][i]);
        let d = rhs(&s3);
        for j in 0..state.len() {
            for i in 0..state[j].len() {
                state[j][i] = e[j][i] * state[j][i]
                    + dt / 6.0 * (e[j][i] * a[j][i] + 2.0 * h[j][i] * (b[j][i] + c[j][i]) + d[j][i]);
            }
        }
    }
}

pub(crate) fn check_cfl(max_speed: f64, dt: f64, dx: f64) -> Result<()> {
    let courant = max_speed * dt / dx;
    if courant > CFL_LIMIT || !courant.is_finite() {
        return Err(Error::Cfl { courant, limit: CFL_LIMIT, suggested_dt: CFL_SAFETY * CFL_LIMIT * dx / max_speed });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Kolmogorov,
    HasegawaWakatani,
}

impl std::str::FromStr for SystemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "kolmogorov" | "kf" => Ok(SystemKind::Kolmogorov),
            "hasegawa_wakatani" | "hw" => Ok(SystemKind::HasegawaWakatani),
            _ => Err(Error::Config(format!("unknown system '{s}'"))),
        }
    }
}

impl std::fmt::Display for SystemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SystemKind::Kolmogorov => "kolmogorov",
            SystemKind::HasegawaWakatani => "hasegawa_wakatani",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub system: SystemKind,
    #[serde(default = "default_grid")]
    pub grid: usize,
    pub frames: usize,
    /// Output frames simulated and discarded before recording.
    #[serde(default)]
    pub warmup_frames: usize,
    /// Time between output frames; 1/16 for Kolmogorov, 1 for HW if unset.
    #[serde(default)]
    pub output_dt: Option<f64>,
    /// Internal step; derived from the CFL guard if unset.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Number of trajectories, seeded `seed, seed + 1, ...`.
    #[serde(default = "one")]
    pub trajectories: usize,
    #[serde(default)]
    pub ic: GrfSpec,
    /// IC standard deviation; 1 for Kolmogorov, 1e-3 for HW if unset.
    #[serde(default)]
    pub ic_amplitude: Option<f64>,
    #[serde(default)]
    pub kolmogorov: KolmogorovParams,
    #[serde(default)]
    pub hw: HwParams,
}

fn default_grid() -> usize {
    64
}

fn one() -> usize {
    1
}

impl SolverConfig {
    pub fn new(system: SystemKind, grid: usize, frames: usize) -> Self {
        SolverConfig {
            system,
            grid,
            frames,
            warmup_frames: 0,
            output_dt: None,
            dt: None,
            seed: 0,
            trajectories: 1,
            ic: GrfSpec::default(),
            ic_amplitude: None,
            kolmogorov: KolmogorovParams::default(),
            hw: HwParams::default(),
        }
    }

    pub fn output_dt(&self) -> f64 {
        self.output_dt.unwrap_or(match self.system {
            SystemKind::Kolmogorov => 1.0 / 16.0,
            SystemKind::HasegawaWakatani => 1.0,
        })
    }

    pub fn ic_amplitude(&self) -> f64 {
        self.ic_amplitude.unwrap_or(match self.system {
            SystemKind::Kolmogorov => 1.0,
            SystemKind::HasegawaWakatani => 1e-3,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid < 8 || !self.grid.is_power_of_two() {
            return Err(Error::Config(format!("grid {} must be a power of two >= 8", self.grid)));
        }
        if self.frames == 0 || self.trajectories == 0 {
            return Err(Error::Config("frames and trajectories must be positive".into()));
        }
        let odt = self.output_dt();
        if !(odt > 0.0 && odt.is_finite()) {
            return Err(Error::Config(format!("output_dt {odt} must be positive")));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt <= odt) {
                return Err(Error::Config(format!("dt {dt} must lie in (0, output_dt]")));
            }
        }
        Ok(())
    }
}

/// Common interface of the two solvers.
pub trait Solver {
    fn step(&mut self, dt: f64) -> Result<()>;
    fn time(&self) -> f64;
    fn grid(&self) -> &Grid;
    /// Real-space output fields.
    fn fields(&self) -> Vec<Vec<f64>>;
    fn field_names(&self) -> Vec<String>;
    fn max_speed(&self) -> f64;
    /// A priori speed bound used to choose the internal step.
    fn speed_scale(&self) -> f64;
    /// Extra step bound from stiff linear terms handled explicitly.
    fn stiff_dt(&self) -> f64 {
        f64::INFINITY
    }
}

fn build_solver(cfg: &SolverConfig, seed: u64) -> Result<Box<dyn Solver>> {
    let amp = cfg.ic_amplitude();
    match cfg.system {
        SystemKind::Kolmogorov => {
            let grid = Grid::new(cfg.grid, 2.0 * std::f64::consts::PI)?;
            let w0: Vec<f64> = gaussian_random_field(cfg.grid, seed, cfg.ic)?.iter().map(|v| v * amp).collect();
            Ok(Box::new(KolmogorovSolver::new(grid, cfg.kolmogorov, &w0)?))
        }
        SystemKind::HasegawaWakatani => {
            let grid = Grid::new(cfg.grid, cfg.hw.domain_length())?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            use rand::Rng;
            let (sa, sb): (u64, u64) = (rng.random(), rng.random());
            let n0: Vec<f64> = gaussian_random_field(cfg.grid, sa, cfg.ic)?.iter().map(|v| v * amp).collect();
            let p0: Vec<f64> = gaussian_random_field(cfg.grid, sb, cfg.ic)?.iter().map(|v| v * amp).collect();
            Ok(Box::new(HwSolver::new(grid, cfg.hw, &n0, &p0)?))
        }
    }
}

/// Internal step and steps per output frame.
pub fn choose_dt(solver: &dyn Solver, cfg: &SolverConfig) -> (f64, usize) {
    let odt = cfg.output_dt();
    let target = match cfg.dt {
        Some(dt) => dt,
        None => {
            let speed = solver.max_speed().max(solver.speed_scale());
            let cfl = if speed > 0.0 { CFL_LIMIT * solver.grid().dx() / speed } else { f64::INFINITY };
            (CFL_SAFETY * cfl).min(CFL_SAFETY * solver.stiff_dt())
        }
    };
    let steps = (odt / target).ceil().max(1.0) as usize;
    (odt / steps as f64, steps)
}

/// Run one trajectory with IC seed `seed`.
pub fn generate_one(cfg: &SolverConfig, seed: u64) -> Result<Trajectory> {
    cfg.validate()?;
    let mut solver = build_solver(cfg, seed)?;
    let (dt, per_frame) = choose_dt(solver.as_ref(), cfg);
    log::info!(
        "{} {}x{}: dt {dt:.3e}, {per_frame} steps per frame, {} + {} frames",
        cfg.system,
        cfg.grid,
        cfg.grid,
        cfg.warmup_frames,
        cfg.frames
    );
    let names = solver.field_names();
    let n2 = cfg.grid * cfg.grid;
    let mut data: Vec<f32> = Vec::with_capacity(cfg.frames * names.len() * n2);
    let mut recorded = 0usize;
    for frame in 0..cfg.warmup_frames + cfg.frames {
        for _ in 0..per_frame {
            solver.step(dt).map_err(|e| match e {
                Error::NonFinite(reason) => Error::SolverBlowUp { last_valid_frame: recorded, reason },
                other => other,
            })?;
        }
        if frame >= cfg.warmup_frames {
            for f in solver.fields() {
                data.extend(f.iter().map(|&v| v as f32));
            }
            recorded += 1;
        }
    }
    let mut t = Trajectory::new([cfg.frames, names.len(), cfg.grid, cfg.grid], data, cfg.output_dt(), names)?;
    t.periodic = [true, true];
    t.stats = crate::trajectory::FieldStats::pooled(std::slice::from_ref(&t))?;
    Ok(t)
}

/// All trajectories of a config, in seed order.
pub fn generate(cfg: &SolverConfig) -> Result<Vec<Trajectory>> {
    use rayon::prelude::*;
    (0..cfg.trajectories as u64).into_par_iter().map(|i| generate_one(cfg, cfg.seed + i)).collect()
}

/// `max |s|` over all retained modes, used for fixed-point checks.
pub fn spec_norm(s: &[Complex64]) -> f64 {
    s.iter().map(|v| v.norm()).fold(0.0, f64::max)
}
