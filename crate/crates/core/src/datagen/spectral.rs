//! Square periodic grids in Fourier space.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type Spec = Vec<Complex64>;

/// An `n x n` periodic grid of side `length` with cached FFT plans.
///
/// Arrays are row-major with rows along `y` and columns along `x`.
#[derive(Clone)]
pub struct Grid {
    n: usize,
    length: f64,
    /// Physical wavenumbers along x and y for every mode.
    pub kx: Vec<f64>,
    pub ky: Vec<f64>,
    /// `|k|^2` with the mean mode set to 1 so inversions need no branch.
    pub k2_safe: Vec<f64>,
    pub k2: Vec<f64>,
    /// Integer radial mode number `sqrt(ix^2 + iy^2)`.
    pub mode_radius: Vec<f64>,
    keep: Vec<bool>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid").field("n", &self.n).field("length", &self.length).finish()
    }
}

pub(crate) fn signed_index(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

impl Grid {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("grid size {n} must be a power of two >= 4")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidArgument(format!("domain length {length} must be positive")));
        }
        let dk = 2.0 * std::f64::consts::PI / length;
        let cutoff = n as i64 / 3;
        let mut kx = Vec::with_capacity(n * n);
        let mut ky = Vec::with_capacity(n * n);
        let mut keep = Vec::with_capacity(n * n);
        let mut mode_radius = Vec::with_capacity(n * n);
        for y in 0..n {
            let iy = signed_index(y, n);
            for x in 0..n {
                let ix = signed_index(x, n);
                kx.push(ix as f64 * dk);
                ky.push(iy as f64 * dk);
                keep.push(ix.abs() <= cutoff && iy.abs() <= cutoff);
                mode_radius.push(((ix * ix + iy * iy) as f64).sqrt());
            }
        }
        let k2: Vec<f64> = kx.iter().zip(&ky).map(|(a, b)| a * a + b * b).collect();
        let k2_safe = k2.iter().map(|&v| if v == 0.0 { 1.0 } else { v }).collect();
        let mut planner = FftPlanner::new();
        Ok(Grid {
            n,
            length,
            kx,
            ky,
            k2,
            k2_safe,
            mode_radius,
            keep,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Coordinate of column/row `i`.
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    /// Whether mode `i` survives the two-thirds truncation.
    pub fn kept(&self, i: usize) -> bool {
        self.keep[i]
    }

    fn transform2(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        for row in buf.chunks_exact_mut(n) {
            plan.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for x in 0..n {
            for y in 0..n {
                col[y] = buf[y * n + x];
            }
            plan.process(&mut col);
            for y in 0..n {
                buf[y * n + x] = col[y];
            }
        }
    }

    /// Unnormalized forward transform of a real field.
    pub fn forward(&self, field: &[f64]) -> Spec {
        let mut buf: Spec = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform2(&mut buf, &self.fwd);
        buf
    }

    /// Inverse transform (with the `1/n^2` factor), keeping the complex result.
    pub fn inverse_complex(&self, spec: &[Complex64]) -> Spec {
        let mut buf = spec.to_vec();
        self.transform2(&mut buf, &self.inv);
        let s = 1.0 / (self.n * self.n) as f64;
        buf.iter_mut().for_each(|v| *v *= s);
        buf
    }

    /// Real part of the inverse transform.
    pub fn inverse(&self, spec: &[Complex64]) -> Vec<f64> {
        self.inverse_complex(spec).into_iter().map(|v| v.re).collect()
    }

    pub fn dealias(&self, spec: &mut [Complex64]) {
        for (v, &k) in spec.iter_mut().zip(&self.keep) {
            if !k {
                *v = Complex64::new(0.0, 0.0);
            }
        }
    }

    pub fn ddx(&self, spec: &[Complex64]) -> Spec {
        spec.iter().zip(&self.kx).map(|(v, &k)| v * Complex64::new(0.0, k)).collect()
    }

    pub fn ddy(&self, spec: &[Complex64]) -> Spec {
        spec.iter().zip(&self.ky).map(|(v, &k)| v * Complex64::new(0.0, k)).collect()
    }

    /// Solve `∇² f = rhs` with the mean of `f` set to zero.
    pub fn inverse_laplacian(&self, rhs: &[Complex64]) -> Spec {
        rhs.iter()
            .zip(&self.k2)
            .zip(&self.k2_safe)
            .map(|((v, &k2), &ks)| if k2 == 0.0 { Complex64::new(0.0, 0.0) } else { -v / ks })
            .collect()
    }

    pub fn laplacian(&self, spec: &[Complex64]) -> Spec {
        spec.iter().zip(&self.k2).map(|(v, &k2)| -v * k2).collect()
    }

    /// Dealiased spectrum of `{A, B} = A_x B_y − A_y B_x` from spectra.
    pub fn bracket_spec(&self, a: &[Complex64], b: &[Complex64]) -> Spec {
        let ax = self.inverse(&self.ddx(a));
        let ay = self.inverse(&self.ddy(a));
        let bx = self.inverse(&self.ddx(b));
        let by = self.inverse(&self.ddy(b));
        let prod: Vec<f64> = (0..ax.len()).map(|i| ax[i] * by[i] - ay[i] * bx[i]).collect();
        let mut out = self.forward(&prod);
        self.dealias(&mut out);
        out
    }

    /// Maximum over modes outside the retained set.
    pub fn aliased_max(&self, spec: &[Complex64]) -> f64 {
        spec.iter().zip(&self.keep).filter(|(_, &k)| !k).map(|(v, _)| v.norm()).fold(0.0, f64::max)
    }
}

/// `{A, B} = A_x B_y − A_y B_x` of two real fields on `grid`, dealiased.
pub fn poisson_bracket(grid: &Grid, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let n2 = grid.n() * grid.n();
    if a.len() != n2 || b.len() != n2 {
        return Err(crate::error::shape_err(
            "poisson_bracket",
            format!("fields of {} and {} values on a {n2}-point grid", a.len(), b.len()),
        ));
    }
    Ok(grid.inverse(&grid.bracket_spec(&grid.forward(a), &grid.forward(b))))
}

/// Real-space max norm.
pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
