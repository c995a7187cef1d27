//! Forward and backward kernels on raw buffers.
//!
//! Every function here is a pure function of its slices; the tape in
//! [`crate::autodiff`] owns shapes and dispatch.

use crate::tensor::{Element, PaddingMode, Shape};

/// Static description of a 2D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub groups: usize,
    pub pad: PaddingMode,
}

impl ConvGeom {
    pub fn padding(&self) -> usize {
        if self.stride == 1 {
            (self.k - 1) / 2
        } else {
            0
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let p = self.padding();
        ((h + 2 * p - self.k) / self.stride + 1, (w + 2 * p - self.k) / self.stride + 1)
    }

    fn cin_g(&self) -> usize {
        self.c_in / self.groups
    }

    fn cout_g(&self) -> usize {
        self.c_out / self.groups
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1
    }
}

#[inline]
fn source_index(o: usize, kk: usize, stride: usize, pad: usize, n: usize, mode: PaddingMode) -> Option<usize> {
    let i = (o * stride + kk) as isize - pad as isize;
    if i >= 0 && (i as usize) < n {
        Some(i as usize)
    } else {
        match mode {
            PaddingMode::Periodic => Some(i.rem_euclid(n as isize) as usize),
            PaddingMode::Zero => None,
        }
    }
}

/// Unfold `channels` planes of `x` (each `h x w`) into a
/// `(channels * k * k) x (ho * wo)` column matrix.
fn im2col<T: Element>(x: &[T], channels: usize, h: usize, w: usize, g: &ConvGeom, cols: &mut [T]) {
    let (ho, wo) = g.out_hw(h, w);
    let p = g.padding();
    let k = g.k;
    let plane_out = ho * wo;
    for c in 0..channels {
        let src = &x[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * plane_out..(row + 1) * plane_out];
                for oy in 0..ho {
                    let line = &mut dst[oy * wo..(oy + 1) * wo];
                    match source_index(oy, ky, g.stride, p, h, g.pad) {
                        None => line.iter_mut().for_each(|v| *v = T::zero()),
                        Some(iy) => {
                            let srow = &src[iy * w..(iy + 1) * w];
                            for (ox, v) in line.iter_mut().enumerate() {
                                *v = match source_index(ox, kx, g.stride, p, w, g.pad) {
                                    Some(ix) => srow[ix],
                                    None => T::zero(),
                                };
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulate columns back into image planes.
fn col2im<T: Element>(cols: &[T], channels: usize, h: usize, w: usize, g: &ConvGeom, dx: &mut [T]) {
    let (ho, wo) = g.out_hw(h, w);
    let p = g.padding();
    let k = g.k;
    let plane_out = ho * wo;
    for c in 0..channels {
        let dst = &mut dx[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * plane_out..(row + 1) * plane_out];
                for oy in 0..ho {
                    let Some(iy) = source_index(oy, ky, g.stride, p, h, g.pad) else {
                        continue;
                    };
                    let line = &src[oy * wo..(oy + 1) * wo];
                    let drow = &mut dst[iy * w..(iy + 1) * w];
                    for (ox, v) in line.iter().enumerate() {
                        if let Some(ix) = source_index(ox, kx, g.stride, p, w, g.pad) {
                            drow[ix] = drow[ix] + *v;
                        }
                    }
                }
            }
        }
    }
}

/// Row-major `c = a * b (+ c)` where `a` is `m x k` and `b` is `k x n`.
/// `ta`/`tb` read the operand transposed from its stored row-major layout.
#[allow(clippy::too_many_arguments)]
fn matmul<T: Element>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    ta: bool,
    b: &[T],
    tb: bool,
    c: &mut [T],
    accumulate: bool,
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: the slices cover the described matrices and `c` is a distinct
    // mutable borrow.
    unsafe {
        T::gemm(m, k, n, T::one(), a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
    }
}

pub fn conv2d_forward<T: Element>(x: &[T], xs: Shape, wt: &[T], bias: &[T], g: &ConvGeom) -> Vec<T> {
    let [n, _, h, w] = xs.0;
    let (ho, wo) = g.out_hw(h, w);
    let plane_out = ho * wo;
    let (cin_g, cout_g) = (g.cin_g(), g.cout_g());
    let kk = cin_g * g.k * g.k;
    let mut out = vec![T::zero(); n * g.c_out * plane_out];
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); kk * plane_out] };
    for b in 0..n {
        for grp in 0..g.groups {
            let xin = &x[(b * g.c_in + grp * cin_g) * h * w..(b * g.c_in + (grp + 1) * cin_g) * h * w];
            let colm: &[T] = if g.is_pointwise() {
                xin
            } else {
                im2col(xin, cin_g, h, w, g, &mut cols);
                &cols
            };
            let wg = &wt[grp * cout_g * kk..(grp + 1) * cout_g * kk];
            let o0 = (b * g.c_out + grp * cout_g) * plane_out;
            let og = &mut out[o0..o0 + cout_g * plane_out];
            for (co, row) in og.chunks_mut(plane_out).enumerate() {
                row.iter_mut().for_each(|v| *v = bias[grp * cout_g + co]);
            }
            matmul(cout_g, kk, plane_out, wg, false, colm, false, og, true);
        }
    }
    out
}

/// Returns `(dx, dw, db)`.
pub fn conv2d_backward<T: Element>(x: &[T], xs: Shape, wt: &[T], dy: &[T], g: &ConvGeom) -> (Vec<T>, Vec<T>, Vec<T>) {
    let [n, _, h, w] = xs.0;
    let (ho, wo) = g.out_hw(h, w);
    let plane_out = ho * wo;
    let (cin_g, cout_g) = (g.cin_g(), g.cout_g());
    let kk = cin_g * g.k * g.k;
    let mut dx = vec![T::zero(); x.len()];
    let mut dw = vec![T::zero(); wt.len()];
    let mut db = vec![T::zero(); g.c_out];
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); kk * plane_out] };
    let mut dcols = vec![T::zero(); kk * plane_out];
    for b in 0..n {
        for grp in 0..g.groups {
            let x0 = (b * g.c_in + grp * cin_g) * h * w;
            let xin = &x[x0..x0 + cin_g * h * w];
            let o0 = (b * g.c_out + grp * cout_g) * plane_out;
            let dyg = &dy[o0..o0 + cout_g * plane_out];
            for (co, row) in dyg.chunks(plane_out).enumerate() {
                let s = row.iter().fold(T::zero(), |a, v| a + *v);
                db[grp * cout_g + co] = db[grp * cout_g + co] + s;
            }
            let colm: &[T] = if g.is_pointwise() {
                xin
            } else {
                im2col(xin, cin_g, h, w, g, &mut cols);
                &cols
            };
            let wg = &wt[grp * cout_g * kk..(grp + 1) * cout_g * kk];
            let dwg = &mut dw[grp * cout_g * kk..(grp + 1) * cout_g * kk];
            matmul(cout_g, plane_out, kk, dyg, false, colm, true, dwg, true);
            if g.is_pointwise() {
                matmul(kk, cout_g, plane_out, wg, true, dyg, false, &mut dx[x0..x0 + cin_g * h * w], true);
            } else {
                matmul(kk, cout_g, plane_out, wg, true, dyg, false, &mut dcols, false);
                col2im(&dcols, cin_g, h, w, g, &mut dx[x0..x0 + cin_g * h * w]);
            }
        }
    }
    (dx, dw, db)
}

/// 2x2 stride-2 transposed convolution; weight layout `(c_in, c_out, 2, 2)`.
pub fn conv_transpose2d_forward<T: Element>(x: &[T], xs: Shape, wt: &[T], bias: &[T], c_out: usize) -> Vec<T> {
    let [n, c_in, h, w] = xs.0;
    let plane = h * w;
    let mut y4 = vec![T::zero(); c_out * 4 * plane];
    let mut out = vec![T::zero(); n * c_out * 4 * plane];
    for b in 0..n {
        let xb = &x[b * c_in * plane..(b + 1) * c_in * plane];
        matmul(c_out * 4, c_in, plane, wt, true, xb, false, &mut y4, false);
        let ob = &mut out[b * c_out * 4 * plane..(b + 1) * c_out * 4 * plane];
        for co in 0..c_out {
            for a in 0..2 {
                for bb in 0..2 {
                    let src = &y4[(co * 4 + a * 2 + bb) * plane..(co * 4 + a * 2 + bb + 1) * plane];
                    for i in 0..h {
                        for j in 0..w {
                            ob[(co * 2 * h + 2 * i + a) * 2 * w + 2 * j + bb] = src[i * w + j] + bias[co];
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn conv_transpose2d_backward<T: Element>(
    x: &[T],
    xs: Shape,
    wt: &[T],
    dy: &[T],
    c_out: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let [n, c_in, h, w] = xs.0;
    let plane = h * w;
    let mut dy4 = vec![T::zero(); c_out * 4 * plane];
    let mut dx = vec![T::zero(); x.len()];
    let mut dw = vec![T::zero(); wt.len()];
    let mut db = vec![T::zero(); c_out];
    for b in 0..n {
        let dyb = &dy[b * c_out * 4 * plane..(b + 1) * c_out * 4 * plane];
        for co in 0..c_out {
            let mut s = T::zero();
            for a in 0..2 {
                for bb in 0..2 {
                    let dst = &mut dy4[(co * 4 + a * 2 + bb) * plane..(co * 4 + a * 2 + bb + 1) * plane];
                    for i in 0..h {
                        for j in 0..w {
                            let v = dyb[(co * 2 * h + 2 * i + a) * 2 * w + 2 * j + bb];
                            dst[i * w + j] = v;
                            s = s + v;
                        }
                    }
                }
            }
            db[co] = db[co] + s;
        }
        let xb = &x[b * c_in * plane..(b + 1) * c_in * plane];
        matmul(
            c_in,
            c_out * 4,
            plane,
            wt,
            false,
            &dy4,
            false,
            &mut dx[b * c_in * plane..(b + 1) * c_in * plane],
            false,
        );
        matmul(c_in, plane, c_out * 4, xb, false, &dy4, true, &mut dw, true);
    }
    (dx, dw, db)
}

/// 2x2 max pooling. Returns the pooled values and the flat source index of
/// each window maximum (first maximum in row-major order on ties).
pub fn max_pool2_forward<T: Element>(x: &[T], xs: Shape) -> (Vec<T>, Vec<usize>) {
    let [n, c, h, w] = xs.0;
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut arg = Vec::with_capacity(n * c * ho * wo);
    for p in 0..n * c {
        let base = p * h * w;
        for i in 0..ho {
            for j in 0..wo {
                let mut best = base + 2 * i * w + 2 * j;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * i + di) * w + 2 * j + dj;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

pub fn max_pool2_backward<T: Element>(len: usize, argmax: &[usize], dy: &[T]) -> Vec<T> {
    let mut dx = vec![T::zero(); len];
    for (g, &i) in dy.iter().zip(argmax) {
        dx[i] = dx[i] + *g;
    }
    dx
}

pub fn avg_pool2_forward<T: Element>(x: &[T], xs: Shape) -> Vec<T> {
    let [n, c, h, w] = xs.0;
    let (ho, wo) = (h / 2, w / 2);
    let quarter = T::from(0.25).unwrap();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    for p in 0..n * c {
        let b = p * h * w;
        for i in 0..ho {
            for j in 0..wo {
                let r0 = b + 2 * i * w + 2 * j;
                let r1 = r0 + w;
                out.push((x[r0] + x[r0 + 1] + x[r1] + x[r1 + 1]) * quarter);
            }
        }
    }
    out
}

pub fn avg_pool2_backward<T: Element>(xs: Shape, dy: &[T]) -> Vec<T> {
    let [n, c, h, w] = xs.0;
    let (ho, wo) = (h / 2, w / 2);
    let quarter = T::from(0.25).unwrap();
    let mut dx = vec![T::zero(); n * c * h * w];
    for p in 0..n * c {
        let b = p * h * w;
        for i in 0..ho {
            for j in 0..wo {
                let g = dy[(p * ho + i) * wo + j] * quarter;
                let r0 = b + 2 * i * w + 2 * j;
                dx[r0] = g;
                dx[r0 + 1] = g;
                dx[r0 + w] = g;
                dx[r0 + w + 1] = g;
            }
        }
    }
    dx
}

#[inline]
fn std_normal_cdf<T: Element>(x: T) -> T {
    let half = T::from(0.5).unwrap();
    half * (T::one() + (x * T::from(std::f64::consts::FRAC_1_SQRT_2).unwrap()).erf())
}

#[inline]
fn std_normal_pdf<T: Element>(x: T) -> T {
    let c = T::from(0.398_942_280_401_432_7).unwrap();
    c * (-(x * x) * T::from(0.5).unwrap()).exp()
}

/// Exact GELU `x * Phi(x)`.
pub fn gelu<T: Element>(x: T) -> T {
    x * std_normal_cdf(x)
}

pub fn gelu_grad<T: Element>(x: T) -> T {
    std_normal_cdf(x) + x * std_normal_pdf(x)
}

/// Saved statistics of a group-norm forward pass.
#[derive(Debug, Clone)]
pub struct GroupNormCache<T> {
    pub xhat: Vec<T>,
    /// One `1/sqrt(var + eps)` per (sample, group).
    pub inv_std: Vec<T>,
}

pub fn group_norm_forward<T: Element>(
    x: &[T],
    xs: Shape,
    groups: usize,
    gamma: &[T],
    beta: &[T],
    eps: f64,
) -> (Vec<T>, GroupNormCache<T>) {
    let [n, c, h, w] = xs.0;
    let cpg = c / groups;
    let span = cpg * h * w;
    let plane = h * w;
    let mut out = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut inv_std = Vec::with_capacity(n * groups);
    for b in 0..n {
        for g in 0..groups {
            let o = (b * c + g * cpg) * plane;
            let seg = &x[o..o + span];
            let mean = seg.iter().map(|v| v.to_f64().unwrap()).sum::<f64>() / span as f64;
            let var = seg
                .iter()
                .map(|v| {
                    let d = v.to_f64().unwrap() - mean;
                    d * d
                })
                .sum::<f64>()
                / span as f64;
            let is = 1.0 / (var + eps).sqrt();
            let (mean_t, is_t) = (T::from(mean).unwrap(), T::from(is).unwrap());
            inv_std.push(is_t);
            for ci in 0..cpg {
                let ch = g * cpg + ci;
                for p in 0..plane {
                    let idx = o + ci * plane + p;
                    let xh = (x[idx] - mean_t) * is_t;
                    xhat[idx] = xh;
                    out[idx] = gamma[ch] * xh + beta[ch];
                }
            }
        }
    }
    (out, GroupNormCache { xhat, inv_std })
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn group_norm_backward<T: Element>(
    xs: Shape,
    groups: usize,
    gamma: &[T],
    cache: &GroupNormCache<T>,
    dy: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let [n, c, h, w] = xs.0;
    let cpg = c / groups;
    let plane = h * w;
    let span = T::from(cpg * plane).unwrap();
    let mut dx = vec![T::zero(); dy.len()];
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for b in 0..n {
        for g in 0..groups {
            let o = (b * c + g * cpg) * plane;
            let is = cache.inv_std[b * groups + g];
            let mut sum_d = T::zero();
            let mut sum_dx = T::zero();
            for ci in 0..cpg {
                let ch = g * cpg + ci;
                for p in 0..plane {
                    let idx = o + ci * plane + p;
                    let xh = cache.xhat[idx];
                    dgamma[ch] = dgamma[ch] + dy[idx] * xh;
                    dbeta[ch] = dbeta[ch] + dy[idx];
                    let d = dy[idx] * gamma[ch];
                    sum_d = sum_d + d;
                    sum_dx = sum_dx + d * xh;
                }
            }
            for ci in 0..cpg {
                let ch = g * cpg + ci;
                for p in 0..plane {
                    let idx = o + ci * plane + p;
                    let d = dy[idx] * gamma[ch];
                    dx[idx] = is * (d - (sum_d + cache.xhat[idx] * sum_dx) / span);
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}
