//! Reverse-mode differentiation over a recorded tape.
//!
//! A [`Tape`] owns every value produced during a forward pass. Operations
//! append nodes whose parents always precede them, so the backward sweep is a
//! single reverse walk over the node list.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{shape_err, Error, Result};
use crate::kernels::{self, ConvGeom, GroupNormCache};
use crate::tensor::{Element, PaddingMode, Shape, Tensor};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    id: usize,
    tape: u64,
}

impl Var {
    pub fn index(&self) -> usize {
        self.id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Mean over the batch of the per-sample field-averaged relative L2 error.
    ScaledL2,
    Mse,
}

#[derive(Debug)]
enum Op<T> {
    Input,
    Variable,
    Param(usize),
    Conv2d { x: usize, w: usize, b: usize, geom: ConvGeom },
    ConvTranspose2d { x: usize, w: usize, b: usize, c_out: usize },
    MaxPool2 { x: usize, argmax: Vec<usize> },
    AvgPool2 { x: usize },
    Gelu { x: usize },
    GroupNorm { x: usize, gamma: usize, beta: usize, groups: usize, cache: GroupNormCache<T> },
    Concat { parts: Vec<usize> },
    Add { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { x: usize, factor: T },
    Sum { x: usize },
    Loss { pred: usize, grad: Vec<T> },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

#[derive(Debug)]
pub struct Tape<T: Element = f32> {
    id: u64,
    nodes: Vec<Node<T>>,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Tape { id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var { id: self.nodes.len() - 1, tape: self.id }
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.id >= self.nodes.len() {
            return Err(Error::ForeignVar);
        }
        Ok(v.id)
    }

    fn any_grad(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].needs_grad)
    }

    /// Constant leaf: no gradient is accumulated for it.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Input, false)
    }

    /// Differentiable leaf.
    pub fn variable(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Variable, true)
    }

    /// Differentiable leaf tagged with a model parameter index.
    pub fn param(&mut self, index: usize, t: Tensor<T>) -> Var {
        self.push(t, Op::Param(index), true)
    }

    pub fn value(&self, v: Var) -> Result<&Tensor<T>> {
        let i = self.check(v)?;
        Ok(&self.nodes[i].value)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: PaddingMode, groups: usize) -> Result<Var> {
        let (xi, wi, bi) = (self.check(x)?, self.check(w)?, self.check(b)?);
        let xs = self.nodes[xi].value.shape();
        let ws = self.nodes[wi].value.shape();
        let [c_out, cin_g, k, k2] = ws.0;
        if k != k2 {
            return Err(shape_err("conv2d", format!("non-square kernel {:?}", ws.0)));
        }
        if groups == 0 || !xs.c().is_multiple_of(groups) || c_out % groups != 0 {
            return Err(shape_err("conv2d", format!("{} channels not divisible into {groups} groups", xs.c())));
        }
        if cin_g * groups != xs.c() {
            return Err(shape_err(
                "conv2d",
                format!("input has {} channels, weight expects {}", xs.c(), cin_g * groups),
            ));
        }
        if self.nodes[bi].value.numel() != c_out {
            return Err(shape_err("conv2d", format!("bias length {} != {c_out}", self.nodes[bi].value.numel())));
        }
        match (stride, k) {
            (1, k) if k % 2 == 1 => {}
            (2, 2) => {
                if !xs.h().is_multiple_of(2) || !xs.w().is_multiple_of(2) {
                    return Err(shape_err("conv2d", format!("odd spatial size {}x{} under stride 2", xs.h(), xs.w())));
                }
            }
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "conv2d supports odd kernels at stride 1 or 2x2 at stride 2, got k={k} stride={stride}"
                )))
            }
        }
        let geom = ConvGeom { c_in: xs.c(), c_out, k, stride, groups, pad };
        let (ho, wo) = geom.out_hw(xs.h(), xs.w());
        let data = kernels::conv2d_forward(
            self.nodes[xi].value.data(),
            xs,
            self.nodes[wi].value.data(),
            self.nodes[bi].value.data(),
            &geom,
        );
        let value = Tensor::from_vec(Shape::new(xs.n(), c_out, ho, wo), data)?;
        let ng = self.any_grad(&[xi, wi, bi]);
        Ok(self.push(value, Op::Conv2d { x: xi, w: wi, b: bi, geom }, ng))
    }

    /// 2x2 stride-2 transposed convolution, weight `(c_in, c_out, 2, 2)`.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xi, wi, bi) = (self.check(x)?, self.check(w)?, self.check(b)?);
        let xs = self.nodes[xi].value.shape();
        let [c_in, c_out, kh, kw] = self.nodes[wi].value.shape().0;
        if (kh, kw) != (2, 2) {
            return Err(Error::InvalidArgument("conv_transpose2d requires a 2x2 kernel".into()));
        }
        if c_in != xs.c() {
            return Err(shape_err("conv_transpose2d", format!("input has {} channels, weight expects {c_in}", xs.c())));
        }
        if self.nodes[bi].value.numel() != c_out {
            return Err(shape_err("conv_transpose2d", "bias length"));
        }
        let data = kernels::conv_transpose2d_forward(
            self.nodes[xi].value.data(),
            xs,
            self.nodes[wi].value.data(),
            self.nodes[bi].value.data(),
            c_out,
        );
        let value = Tensor::from_vec(Shape::new(xs.n(), c_out, 2 * xs.h(), 2 * xs.w()), data)?;
        let ng = self.any_grad(&[xi, wi, bi]);
        Ok(self.push(value, Op::ConvTranspose2d { x: xi, w: wi, b: bi, c_out }, ng))
    }

    fn pool_shape(&self, xi: usize, op: &'static str) -> Result<Shape> {
        let xs = self.nodes[xi].value.shape();
        if !xs.h().is_multiple_of(2) || !xs.w().is_multiple_of(2) {
            return Err(shape_err(op, format!("odd spatial size {}x{}", xs.h(), xs.w())));
        }
        Ok(xs)
    }

    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let xi = self.check(x)?;
        let xs = self.pool_shape(xi, "max_pool2")?;
        let (data, argmax) = kernels::max_pool2_forward(self.nodes[xi].value.data(), xs);
        let value = Tensor::from_vec(Shape::new(xs.n(), xs.c(), xs.h() / 2, xs.w() / 2), data)?;
        let ng = self.any_grad(&[xi]);
        Ok(self.push(value, Op::MaxPool2 { x: xi, argmax }, ng))
    }

    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let xi = self.check(x)?;
        let xs = self.pool_shape(xi, "avg_pool2")?;
        let data = kernels::avg_pool2_forward(self.nodes[xi].value.data(), xs);
        let value = Tensor::from_vec(Shape::new(xs.n(), xs.c(), xs.h() / 2, xs.w() / 2), data)?;
        let ng = self.any_grad(&[xi]);
        Ok(self.push(value, Op::AvgPool2 { x: xi }, ng))
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let xi = self.check(x)?;
        let src = &self.nodes[xi].value;
        let value = Tensor::from_vec(src.shape(), src.data().iter().map(|&v| kernels::gelu(v)).collect())?;
        let ng = self.any_grad(&[xi]);
        Ok(self.push(value, Op::Gelu { x: xi }, ng))
    }

    pub fn group_norm(&mut self, x: Var, groups: usize, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (xi, gi, bi) = (self.check(x)?, self.check(gamma)?, self.check(beta)?);
        let xs = self.nodes[xi].value.shape();
        if groups == 0 || !xs.c().is_multiple_of(groups) {
            return Err(shape_err("group_norm", format!("{} channels not divisible into {groups} groups", xs.c())));
        }
        if self.nodes[gi].value.numel() != xs.c() || self.nodes[bi].value.numel() != xs.c() {
            return Err(shape_err("group_norm", "affine parameters must have one entry per channel"));
        }
        let (data, cache) = kernels::group_norm_forward(
            self.nodes[xi].value.data(),
            xs,
            groups,
            self.nodes[gi].value.data(),
            self.nodes[bi].value.data(),
            eps,
        );
        let value = Tensor::from_vec(xs, data)?;
        let ng = self.any_grad(&[xi, gi, bi]);
        Ok(self.push(value, Op::GroupNorm { x: xi, gamma: gi, beta: bi, groups, cache }, ng))
    }

    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::InvalidArgument("concat of zero tensors".into()));
        }
        let ids = xs.iter().map(|&v| self.check(v)).collect::<Result<Vec<_>>>()?;
        let s0 = self.nodes[ids[0]].value.shape();
        let mut c_total = 0;
        for &i in &ids {
            let s = self.nodes[i].value.shape();
            if s.n() != s0.n() || s.h() != s0.h() || s.w() != s0.w() {
                return Err(shape_err("concat_channels", format!("{:?} vs {:?}", s.0, s0.0)));
            }
            c_total += s.c();
        }
        let plane = s0.plane();
        let mut data = Vec::with_capacity(s0.n() * c_total * plane);
        for b in 0..s0.n() {
            for &i in &ids {
                let t = &self.nodes[i].value;
                let c = t.shape().c();
                data.extend_from_slice(&t.data()[b * c * plane..(b + 1) * c * plane]);
            }
        }
        let value = Tensor::from_vec(Shape::new(s0.n(), c_total, s0.h(), s0.w()), data)?;
        let ng = self.any_grad(&ids);
        Ok(self.push(value, Op::Concat { parts: ids }, ng))
    }

    fn same_shape(&self, a: usize, b: usize, op: &'static str) -> Result<()> {
        let (sa, sb) = (self.nodes[a].value.shape(), self.nodes[b].value.shape());
        if sa != sb {
            return Err(shape_err(op, format!("{:?} vs {:?}", sa.0, sb.0)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        self.same_shape(ai, bi, "add")?;
        let (ta, tb) = (&self.nodes[ai].value, &self.nodes[bi].value);
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| *x + *y).collect();
        let value = Tensor::from_vec(ta.shape(), data)?;
        let ng = self.any_grad(&[ai, bi]);
        Ok(self.push(value, Op::Add { a: ai, b: bi }, ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        self.same_shape(ai, bi, "mul")?;
        let (ta, tb) = (&self.nodes[ai].value, &self.nodes[bi].value);
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| *x * *y).collect();
        let value = Tensor::from_vec(ta.shape(), data)?;
        let ng = self.any_grad(&[ai, bi]);
        Ok(self.push(value, Op::Mul { a: ai, b: bi }, ng))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Result<Var> {
        let xi = self.check(x)?;
        let t = &self.nodes[xi].value;
        let value = Tensor::from_vec(t.shape(), t.data().iter().map(|v| *v * factor).collect())?;
        let ng = self.any_grad(&[xi]);
        Ok(self.push(value, Op::Scale { x: xi, factor }, ng))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let xi = self.check(x)?;
        let s = self.nodes[xi].value.data().iter().fold(T::zero(), |a, v| a + *v);
        let ng = self.any_grad(&[xi]);
        Ok(self.push(Tensor::scalar(s), Op::Sum { x: xi }, ng))
    }

    /// Scalar training loss of `pred` against a constant target.
    pub fn loss(&mut self, pred: Var, target: &Tensor<T>, kind: LossKind) -> Result<Var> {
        let pi = self.check(pred)?;
        let p = &self.nodes[pi].value;
        if p.shape() != target.shape() {
            return Err(shape_err("loss", format!("{:?} vs {:?}", p.shape().0, target.shape().0)));
        }
        let (value, grad) = match kind {
            LossKind::Mse => mse_with_grad(p.data(), target.data()),
            LossKind::ScaledL2 => scaled_l2_with_grad(p.data(), target.data(), p.shape())?,
        };
        let ng = self.any_grad(&[pi]);
        Ok(self.push(Tensor::scalar(value), Op::Loss { pred: pi, grad }, ng))
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        let ri = self.check(root)?;
        let rs = self.nodes[ri].value.shape();
        if rs.numel() != 1 {
            return Err(Error::NonScalarRoot(rs.0));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; ri + 1];
        grads[ri] = Some(vec![T::one()]);
        for i in (0..=ri).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let keep = matches!(node.op, Op::Variable | Op::Param(_));
            self.propagate(i, &g, &mut grads);
            if keep {
                grads[i] = Some(g);
            }
        }
        let mut params = Vec::new();
        let mut leaves = Vec::new();
        for (i, g) in grads.into_iter().enumerate() {
            let Some(g) = g else { continue };
            let t = Tensor::from_vec(self.nodes[i].value.shape(), g)?;
            match self.nodes[i].op {
                Op::Param(p) => params.push((p, t)),
                _ => leaves.push((i, t)),
            }
        }
        Ok(Gradients { tape: self.id, params, leaves })
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let mut acc = |j: usize, d: Vec<T>| {
            if !self.nodes[j].needs_grad {
                return;
            }
            match &mut grads[j] {
                Some(e) => e.iter_mut().zip(d).for_each(|(a, b)| *a = *a + b),
                slot @ None => *slot = Some(d),
            }
        };
        let val = |j: usize| &self.nodes[j].value;
        match &self.nodes[i].op {
            Op::Input | Op::Variable | Op::Param(_) => {}
            Op::Conv2d { x, w, b, geom } => {
                let (dx, dw, db) = kernels::conv2d_backward(val(*x).data(), val(*x).shape(), val(*w).data(), g, geom);
                acc(*x, dx);
                acc(*w, dw);
                acc(*b, db);
            }
            Op::ConvTranspose2d { x, w, b, c_out } => {
                let (dx, dw, db) =
                    kernels::conv_transpose2d_backward(val(*x).data(), val(*x).shape(), val(*w).data(), g, *c_out);
                acc(*x, dx);
                acc(*w, dw);
                acc(*b, db);
            }
            Op::MaxPool2 { x, argmax } => {
                acc(*x, kernels::max_pool2_backward(val(*x).numel(), argmax, g));
            }
            Op::AvgPool2 { x } => acc(*x, kernels::avg_pool2_backward(val(*x).shape(), g)),
            Op::Gelu { x } => {
                let d = val(*x).data().iter().zip(g).map(|(v, gi)| kernels::gelu_grad(*v) * *gi).collect();
                acc(*x, d);
            }
            Op::GroupNorm { x, gamma, beta, groups, cache } => {
                let (dx, dg, db) = kernels::group_norm_backward(val(*x).shape(), *groups, val(*gamma).data(), cache, g);
                acc(*x, dx);
                acc(*gamma, dg);
                acc(*beta, db);
            }
            Op::Concat { parts } => {
                let s = self.nodes[i].value.shape();
                let plane = s.plane();
                let mut offset = 0;
                for &p in parts {
                    let c = val(p).shape().c();
                    let mut d = Vec::with_capacity(val(p).numel());
                    for bidx in 0..s.n() {
                        let start = (bidx * s.c() + offset) * plane;
                        d.extend_from_slice(&g[start..start + c * plane]);
                    }
                    offset += c;
                    acc(p, d);
                }
            }
            Op::Add { a, b } => {
                acc(*a, g.to_vec());
                acc(*b, g.to_vec());
            }
            Op::Mul { a, b } => {
                let da = g.iter().zip(val(*b).data()).map(|(x, y)| *x * *y).collect();
                let db = g.iter().zip(val(*a).data()).map(|(x, y)| *x * *y).collect();
                acc(*a, da);
                acc(*b, db);
            }
            Op::Scale { x, factor } => acc(*x, g.iter().map(|v| *v * *factor).collect()),
            Op::Sum { x } => acc(*x, vec![g[0]; val(*x).numel()]),
            Op::Loss { pred, grad } => acc(*pred, grad.iter().map(|v| *v * g[0]).collect()),
        }
    }
}

fn mse_with_grad<T: Element>(p: &[T], t: &[T]) -> (T, Vec<T>) {
    let n = T::from(p.len()).unwrap();
    let two = T::from(2.0).unwrap();
    let mut s = T::zero();
    let grad = p
        .iter()
        .zip(t)
        .map(|(a, b)| {
            let d = *a - *b;
            s = s + d * d;
            two * d / n
        })
        .collect();
    (s / n, grad)
}

fn scaled_l2_with_grad<T: Element>(p: &[T], t: &[T], s: Shape) -> Result<(T, Vec<T>)> {
    let plane = s.plane();
    let denom = (s.n() * s.c()) as f64;
    let mut grad = vec![T::zero(); p.len()];
    let mut total = 0.0f64;
    for (chunk, (pc, tc)) in p.chunks(plane).zip(t.chunks(plane)).enumerate() {
        let tn = tc.iter().map(|v| v.to_f64().unwrap().powi(2)).sum::<f64>().sqrt();
        if tn == 0.0 {
            return Err(Error::DegenerateReference(format!("target field {chunk} has zero L2 norm")));
        }
        let dn =
            pc.iter().zip(tc).map(|(a, b)| (a.to_f64().unwrap() - b.to_f64().unwrap()).powi(2)).sum::<f64>().sqrt();
        total += dn / tn;
        if dn > 0.0 {
            let f = 1.0 / (denom * dn * tn);
            for (k, (a, b)) in pc.iter().zip(tc).enumerate() {
                grad[chunk * plane + k] = T::from((a.to_f64().unwrap() - b.to_f64().unwrap()) * f).unwrap();
            }
        }
    }
    Ok((T::from(total / denom).unwrap(), grad))
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T: Element = f32> {
    tape: u64,
    params: Vec<(usize, Tensor<T>)>,
    leaves: Vec<(usize, Tensor<T>)>,
}

impl<T: Element> Gradients<T> {
    /// Gradient of a differentiable leaf (`variable` or `param`).
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        if v.tape != self.tape {
            return None;
        }
        self.leaves.iter().find(|(i, _)| *i == v.id).map(|(_, t)| t)
    }

    /// Gradient for model parameter `index`, summed over every use.
    pub fn param(&self, index: usize) -> Option<&Tensor<T>> {
        self.params.iter().find(|(p, _)| *p == index).map(|(_, t)| t)
    }

    /// Parameter gradients densely indexed by parameter number.
    pub fn into_param_vec(self, count: usize) -> Vec<Option<Tensor<T>>> {
        let mut out: Vec<Option<Tensor<T>>> = (0..count).map(|_| None).collect();
        for (p, t) in self.params {
            if p < count {
                match &mut out[p] {
                    Some(e) => e.data_mut().iter_mut().zip(t.data()).for_each(|(a, b)| *a = *a + *b),
                    slot => *slot = Some(t),
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: [usize; 4], data: Vec<f32>) -> Tensor<f32> {
        Tensor::from_vec(Shape(shape), data).unwrap()
    }

    #[test]
    fn conv_zero_and_periodic_padding() {
        let mut tape = Tape::<f32>::new();
        let x = tape.input(Tensor::full(Shape::new(1, 1, 4, 4), 1.0));
        let w = tape.input(Tensor::full(Shape::new(1, 1, 3, 3), 1.0));
        let b = tape.input(Tensor::zeros(Shape::new(1, 1, 1, 1)));
        let z = tape.conv2d(x, w, b, 1, PaddingMode::Zero, 1).unwrap();
        #[rustfmt::skip]
        let want = [4., 6., 6., 4., 6., 9., 9., 6., 6., 9., 9., 6., 4., 6., 6., 4.];
        assert_eq!(tape.value(z).unwrap().data(), &want);
        let p = tape.conv2d(x, w, b, 1, PaddingMode::Periodic, 1).unwrap();
        assert!(tape.value(p).unwrap().data().iter().all(|&v| v == 9.0));
    }

    #[test]
    fn conv_rejects_bad_shapes() {
        let mut tape = Tape::<f32>::new();
        let x = tape.input(Tensor::zeros(Shape::new(1, 3, 4, 4)));
        let w = tape.input(Tensor::zeros(Shape::new(2, 2, 3, 3)));
        let b = tape.input(Tensor::zeros(Shape::new(2, 1, 1, 1)));
        assert!(matches!(tape.conv2d(x, w, b, 1, PaddingMode::Zero, 1), Err(Error::Shape { .. })));
        let x5 = tape.input(Tensor::zeros(Shape::new(1, 2, 5, 5)));
        let w2 = tape.input(Tensor::zeros(Shape::new(2, 2, 2, 2)));
        assert!(tape.conv2d(x5, w2, b, 2, PaddingMode::Zero, 1).is_err());
    }

    #[test]
    fn conv_transpose_places_blocks() {
        let mut tape = Tape::<f32>::new();
        let x = tape.input(t([1, 1, 2, 2], vec![1., 2., 3., 4.]));
        let w = tape.input(Tensor::full(Shape::new(1, 1, 2, 2), 1.0));
        let b = tape.input(Tensor::zeros(Shape::new(1, 1, 1, 1)));
        let y = tape.conv_transpose2d(x, w, b).unwrap();
        #[rustfmt::skip]
        let want = [1., 1., 2., 2., 1., 1., 2., 2., 3., 3., 4., 4., 3., 3., 4., 4.];
        assert_eq!(tape.value(y).unwrap().data(), &want);

        let z = tape.input(Tensor::zeros(Shape::new(1, 1, 2, 2)));
        let b2 = tape.input(Tensor::full(Shape::new(1, 1, 1, 1), 0.5));
        let y2 = tape.conv_transpose2d(z, w, b2).unwrap();
        assert!(tape.value(y2).unwrap().data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn pools_on_single_window_and_constants() {
        let mut tape = Tape::<f32>::new();
        let x = tape.input(t([1, 1, 2, 2], vec![1., 2., 3., 4.]));
        let m = tape.max_pool2(x).unwrap();
        let a = tape.avg_pool2(x).unwrap();
        assert_eq!(tape.value(m).unwrap().data(), &[4.0]);
        assert_eq!(tape.value(a).unwrap().data(), &[2.5]);
        let c = tape.input(Tensor::full(Shape::new(1, 2, 4, 4), 1.75));
        let m = tape.max_pool2(c).unwrap();
        let a = tape.avg_pool2(c).unwrap();
        assert!(tape.value(m).unwrap().data().iter().all(|&v| v == 1.75));
        assert!(tape.value(a).unwrap().data().iter().all(|&v| v == 1.75));
        let odd = tape.input(Tensor::zeros(Shape::new(1, 1, 3, 4)));
        assert!(tape.max_pool2(odd).is_err());
        assert!(tape.avg_pool2(odd).is_err());
    }

    #[test]
    fn group_norm_degenerate_inputs() {
        let mut tape = Tape::<f32>::new();
        let x = tape.input(Tensor::full(Shape::new(2, 4, 3, 3), 3.0));
        let one = tape.input(Tensor::full(Shape::new(4, 1, 1, 1), 1.0));
        let zero = tape.input(Tensor::zeros(Shape::new(4, 1, 1, 1)));
        let y = tape.group_norm(x, 2, one, zero, 1e-5).unwrap();
        assert!(tape.value(y).unwrap().data().iter().all(|&v| v == 0.0));

        let r = tape.input(t([1, 4, 1, 2], vec![1., -2., 3., 0.5, 7., 1., -1., 2.]));
        let b = tape.input(Tensor::full(Shape::new(4, 1, 1, 1), 0.25));
        let y = tape.group_norm(r, 2, zero, b, 1e-5).unwrap();
        assert!(tape.value(y).unwrap().data().iter().all(|&v| v == 0.25));
        assert!(tape.group_norm(r, 3, one, zero, 1e-5).is_err());
    }

    #[test]
    fn concat_shapes() {
        let mut tape = Tape::<f32>::new();
        let a = tape.input(Tensor::zeros(Shape::new(1, 2, 4, 4)));
        let b = tape.input(Tensor::zeros(Shape::new(1, 3, 4, 4)));
        let c = tape.concat_channels(&[a, b]).unwrap();
        assert_eq!(tape.value(c).unwrap().shape(), Shape::new(1, 5, 4, 4));
        let single = tape.concat_channels(&[a]).unwrap();
        assert_eq!(tape.value(single).unwrap(), tape.value(a).unwrap());
        let d = tape.input(Tensor::zeros(Shape::new(1, 3, 2, 4)));
        assert!(tape.concat_channels(&[a, d]).is_err());
    }

    #[test]
    fn add_identities() {
        let mut tape = Tape::<f32>::new();
        let x = t([1, 1, 1, 3], vec![1.5, -2.0, 0.25]);
        let neg = t([1, 1, 1, 3], vec![-1.5, 2.0, -0.25]);
        let xv = tape.input(x.clone());
        let zero = tape.input(Tensor::zeros(x.shape()));
        let nv = tape.input(neg);
        let s = tape.add(xv, zero).unwrap();
        assert_eq!(tape.value(s).unwrap(), &x);
        let s = tape.add(xv, nv).unwrap();
        assert!(tape.value(s).unwrap().data().iter().all(|&v| v == 0.0));
        let other = tape.input(Tensor::zeros(Shape::new(1, 1, 1, 2)));
        assert!(tape.add(xv, other).is_err());
    }

    #[test]
    fn backward_of_sums() {
        let mut tape = Tape::<f32>::new();
        let x0 = t([1, 2, 2, 2], (0..8).map(|v| v as f32 - 3.0).collect());
        let x = tape.variable(x0.clone());
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert!(g.wrt(x).unwrap().data().iter().all(|&v| v == 1.0));

        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq).unwrap();
        let half = tape.scale(s, 0.5).unwrap();
        let g = tape.backward(half).unwrap();
        assert_eq!(g.wrt(x).unwrap(), &x0);
    }

    #[test]
    fn backward_errors() {
        let mut tape = Tape::<f32>::new();
        let x = tape.variable(Tensor::zeros(Shape::new(1, 1, 2, 2)));
        assert!(matches!(tape.backward(x), Err(Error::NonScalarRoot(_))));
        let mut other = Tape::<f32>::new();
        let y = other.variable(Tensor::scalar(1.0));
        assert!(matches!(tape.backward(y), Err(Error::ForeignVar)));
    }

    #[test]
    fn loss_values() {
        let mut tape = Tape::<f32>::new();
        let u = t([1, 1, 2, 2], vec![1., 2., -1., 0.5]);
        let p = tape.variable(u.clone());
        let l = tape.loss(p, &u, LossKind::ScaledL2).unwrap();
        assert_eq!(tape.value(l).unwrap().data()[0], 0.0);
        let z = tape.variable(Tensor::zeros(u.shape()));
        let l = tape.loss(z, &u, LossKind::ScaledL2).unwrap();
        assert!((tape.value(l).unwrap().data()[0] - 1.0).abs() < 1e-7);
        let shifted = t([1, 1, 2, 2], u.data().iter().map(|v| v + 0.5).collect());
        let sv = tape.variable(shifted);
        let l = tape.loss(sv, &u, LossKind::Mse).unwrap();
        assert_eq!(tape.value(l).unwrap().data()[0], 0.25);
        assert!(tape.loss(sv, &Tensor::zeros(u.shape()), LossKind::ScaledL2).is_err());
    }
}
