use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::spectral::{Grid, Spec};
use super::{check_cfl, Ifrk4, Solver};
use crate::error::{shape_err, Error, Result};

/// Hasegawa–Wakatani parameters. The box side is `2π / k0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HwParams {
    pub alpha: f64,
    pub kappa: f64,
    pub dn: f64,
    pub dp: f64,
    pub k0: f64,
    /// A priori E×B speed bound used to pick the internal step.
    pub speed_scale: f64,
}

impl Default for HwParams {
    fn default() -> Self {
        HwParams { alpha: 0.01, kappa: 0.5, dn: 1e-4, dp: 1e-4, k0: 0.15, speed_scale: 4.0 }
    }
}

impl HwParams {
    pub fn domain_length(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.k0
    }
}

/// Evolves density `n` and vorticity `Ω = ∇²φ`:
///
/// `∂n/∂t = −{φ, n} − κ ∂φ/∂y + α(φ − n) − D_n ∇⁴n`
/// `∂Ω/∂t = −{φ, Ω} + α(φ − n) − D_p ∇⁴Ω`
pub struct HwSolver {
    grid: Grid,
    params: HwParams,
    n: Spec,
    vort: Spec,
    integrator: Ifrk4,
    time: f64,
}

impl HwSolver {
    pub fn new(grid: Grid, params: HwParams, n0: &[f64], phi0: &[f64]) -> Result<Self> {
        let n2 = grid.n() * grid.n();
        if n0.len() != n2 || phi0.len() != n2 {
            return Err(shape_err(
                "hasegawa_wakatani",
                format!("IC sizes {} / {} for {n2} points", n0.len(), phi0.len()),
            ));
        }
        let mut n = grid.forward(n0);
        let mut vort = grid.laplacian(&grid.forward(phi0));
        n[0] = Complex64::new(0.0, 0.0);
        grid.dealias(&mut n);
        grid.dealias(&mut vort);
        let hyper = |d: f64| grid.k2.iter().map(|k2| -d * k2 * k2).collect::<Vec<f64>>();
        let integrator = Ifrk4::new(vec![hyper(params.dn), hyper(params.dp)]);
        Ok(HwSolver { grid, params, n, vort, integrator, time: 0.0 })
    }

    pub fn params(&self) -> &HwParams {
        &self.params
    }

    pub fn phi_spec(&self) -> Spec {
        self.grid.inverse_laplacian(&self.vort)
    }

    pub fn n_spec(&self) -> &[Complex64] {
        &self.n
    }

    pub fn vorticity_spec(&self) -> &[Complex64] {
        &self.vort
    }

    pub fn density(&self) -> Vec<f64> {
        self.grid.inverse(&self.n)
    }

    pub fn potential(&self) -> Vec<f64> {
        self.grid.inverse(&self.phi_spec())
    }

    /// `½ mean(n² + |∇φ|²)`.
    pub fn energy(&self) -> f64 {
        let phi = self.phi_spec();
        let px = self.grid.inverse(&self.grid.ddx(&phi));
        let py = self.grid.inverse(&self.grid.ddy(&phi));
        let n = self.density();
        let s: f64 = (0..n.len()).map(|i| n[i] * n[i] + px[i] * px[i] + py[i] * py[i]).sum();
        0.5 * s / n.len() as f64
    }

    /// `(‖n‖₂, ‖Ω‖₂)` as root-mean-square values.
    pub fn norms(&self) -> (f64, f64) {
        let rms = |s: &[Complex64]| {
            let f = self.grid.inverse(s);
            (f.iter().map(|v| v * v).sum::<f64>() / f.len() as f64).sqrt()
        };
        (rms(&self.n), rms(&self.vort))
    }

    fn rhs(grid: &Grid, p: &HwParams, s: &[Spec]) -> Vec<Spec> {
        let (n, vort) = (&s[0], &s[1]);
        let phi = grid.inverse_laplacian(vort);
        let bn = grid.bracket_spec(&phi, n);
        let bv = grid.bracket_spec(&phi, vort);
        let mut dn = Vec::with_capacity(n.len());
        let mut dv = Vec::with_capacity(n.len());
        for i in 0..n.len() {
            let coupling = p.alpha * (phi[i] - n[i]);
            let drive = Complex64::new(0.0, p.kappa * grid.ky[i]) * phi[i];
            dn.push(-bn[i] - drive + coupling);
            dv.push(if i == 0 { Complex64::new(0.0, 0.0) } else { -bv[i] + coupling });
        }
        vec![dn, dv]
    }
}

impl Solver for HwSolver {
    fn step(&mut self, dt: f64) -> Result<()> {
        check_cfl(self.max_speed(), dt, self.grid.dx())?;
        let grid = &self.grid;
        let params = &self.params;
        let mut state = [std::mem::take(&mut self.n), std::mem::take(&mut self.vort)];
        self.integrator.step(&mut state, dt, |s| Self::rhs(grid, params, s));
        let [mut n, mut vort] = state;
        grid.dealias(&mut n);
        grid.dealias(&mut vort);
        let finite = |s: &Spec| s.iter().all(|v| v.re.is_finite() && v.im.is_finite());
        if !finite(&n) || !finite(&vort) {
            return Err(Error::NonFinite(format!("HW state at t = {:.4}", self.time + dt)));
        }
        self.n = n;
        self.vort = vort;
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
        vec![self.density(), self.potential()]
    }

    fn field_names(&self) -> Vec<String> {
        vec!["n".into(), "phi".into()]
    }

    /// Largest E×B speed `|∇φ|`.
    fn max_speed(&self) -> f64 {
        let phi = self.phi_spec();
        let px = self.grid.inverse(&self.grid.ddx(&phi));
        let py = self.grid.inverse(&self.grid.ddy(&phi));
        px.iter().zip(&py).map(|(a, b)| (a * a + b * b).sqrt()).fold(0.0, f64::max)
    }

    fn speed_scale(&self) -> f64 {
        self.params.speed_scale
    }

    /// Explicit bound from the adiabatic coupling and drift terms, whose
    /// fastest rate is at the smallest nonzero wavenumber.
    fn stiff_dt(&self) -> f64 {
        let kmin2 = self.params.k0 * self.params.k0;
        let rate = self.params.alpha * (1.0 + 1.0 / kmin2) + self.params.kappa * self.params.k0 / kmin2;
        if rate > 0.0 {
            2.5 / rate
        } else {
            f64::INFINITY
        }
    }
}
