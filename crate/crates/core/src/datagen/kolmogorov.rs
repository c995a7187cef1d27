use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::spectral::{max_abs, Grid, Spec};
use super::{check_cfl, Ifrk4, Solver};
use crate::error::{shape_err, Error, Result};

/// Vorticity form of 2D Navier–Stokes with Kolmogorov forcing
/// `-scale f0 cos(f0 x)` and linear drag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KolmogorovParams {
    pub re: f64,
    pub f0: f64,
    pub drag: f64,
    /// Multiplier on the forcing amplitude (0 disables forcing).
    pub forcing_scale: f64,
}

impl Default for KolmogorovParams {
    fn default() -> Self {
        KolmogorovParams { re: 1000.0, f0: 8.0, drag: 0.1, forcing_scale: 1.0 }
    }
}

impl KolmogorovParams {
    pub fn viscosity(&self) -> f64 {
        1.0 / self.re
    }

    /// Amplitude `A` of the steady laminar state `ω = A cos(f0 x)`.
    pub fn laminar_amplitude(&self) -> f64 {
        -self.forcing_scale * self.f0 / (self.f0 * self.f0 * self.viscosity() + self.drag)
    }
}

pub struct KolmogorovSolver {
    grid: Grid,
    params: KolmogorovParams,
    omega: Spec,
    forcing: Spec,
    integrator: Ifrk4,
    time: f64,
}

impl KolmogorovSolver {
    pub fn new(grid: Grid, params: KolmogorovParams, omega0: &[f64]) -> Result<Self> {
        let n2 = grid.n() * grid.n();
        if omega0.len() != n2 {
            return Err(shape_err("kolmogorov", format!("{} IC values for {n2} points", omega0.len())));
        }
        let mut omega = grid.forward(omega0);
        grid.dealias(&mut omega);
        let f: Vec<f64> =
            (0..n2).map(|i| -params.forcing_scale * params.f0 * (params.f0 * grid.coord(i % grid.n())).cos()).collect();
        let mut forcing = grid.forward(&f);
        grid.dealias(&mut forcing);
        let nu = params.viscosity();
        let lin = grid.k2.iter().map(|k2| -nu * k2 - params.drag).collect();
        Ok(KolmogorovSolver { grid, params, omega, forcing, integrator: Ifrk4::new(vec![lin]), time: 0.0 })
    }

    pub fn params(&self) -> &KolmogorovParams {
        &self.params
    }

    pub fn omega_spec(&self) -> &[Complex64] {
        &self.omega
    }

    pub fn omega(&self) -> Vec<f64> {
        self.grid.inverse(&self.omega)
    }

    /// Streamfunction from `Δψ = −ω`.
    pub fn psi_spec(&self) -> Spec {
        let lap: Spec = self.grid.inverse_laplacian(&self.omega);
        lap.into_iter().map(|v| -v).collect()
    }

    /// Velocity spectra `(u, v) = (ψ_y, −ψ_x)`.
    pub fn velocity_spec(&self) -> (Spec, Spec) {
        let psi = self.psi_spec();
        let u = self.grid.ddy(&psi);
        let v: Spec = self.grid.ddx(&psi).into_iter().map(|z| -z).collect();
        (u, v)
    }

    /// Spectral divergence `i kx û + i ky v̂`, max over modes.
    pub fn divergence_norm(&self) -> f64 {
        let (u, v) = self.velocity_spec();
        let du = self.grid.ddx(&u);
        let dv = self.grid.ddy(&v);
        du.iter().zip(&dv).map(|(a, b)| (a + b).norm()).fold(0.0, f64::max)
    }

    /// Kinetic energy `½ mean(u² + v²)`.
    pub fn energy(&self) -> f64 {
        let (u, v) = self.velocity_spec();
        let (u, v) = (self.grid.inverse(&u), self.grid.inverse(&v));
        0.5 * u.iter().zip(&v).map(|(a, b)| a * a + b * b).sum::<f64>() / u.len() as f64
    }

    /// Enstrophy `½ mean(ω²)`.
    pub fn enstrophy(&self) -> f64 {
        let w = self.omega();
        0.5 * w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64
    }

    fn rhs(grid: &Grid, forcing: &[Complex64], s: &[Spec]) -> Vec<Spec> {
        let omega = &s[0];
        let psi: Spec = grid.inverse_laplacian(omega).into_iter().map(|v| -v).collect();
        let adv = grid.bracket_spec(&psi, omega);
        vec![adv.iter().zip(forcing).map(|(a, f)| a + f).collect()]
    }
}

impl Solver for KolmogorovSolver {
    fn step(&mut self, dt: f64) -> Result<()> {
        check_cfl(self.max_speed(), dt, self.grid.dx())?;
        let grid = &self.grid;
        let forcing = &self.forcing;
        let mut state = [std::mem::take(&mut self.omega)];
        self.integrator.step(&mut state, dt, |s| Self::rhs(grid, forcing, s));
        let [mut omega] = state;
        grid.dealias(&mut omega);
        if !omega.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::NonFinite(format!("vorticity at t = {:.4}", self.time + dt)));
        }
        self.omega = omega;
        self.time += dt;
        Ok(())
    }

    fn time(&self) -> f64 {
        self.time
    }

    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn fields(&self) -> Vec<Vec<f64>> {
        vec![self.omega()]
    }

    fn field_names(&self) -> Vec<String> {
        vec!["omega".into()]
    }

    fn max_speed(&self) -> f64 {
        let (u, v) = self.velocity_spec();
        let (u, v) = (self.grid.inverse(&u), self.grid.inverse(&v));
        u.iter().zip(&v).map(|(a, b)| (a * a + b * b).sqrt()).fold(0.0, f64::max)
    }

    /// Velocity amplitude of the laminar state.
    fn speed_scale(&self) -> f64 {
        let a = self.params.laminar_amplitude();
        if a.is_finite() && self.params.f0 > 0.0 {
            a.abs() / self.params.f0
        } else {
            max_abs(&self.omega())
        }
    }
}
