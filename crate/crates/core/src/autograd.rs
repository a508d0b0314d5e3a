//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records every operation in execution order, so a single
//! reverse sweep over the tape is a valid topological order for backprop.
//! Several output seeds may be supplied at once (e.g. an adversarial logit
//! gradient and a reconstruction gradient on the generator output).

use crate::tensor::{col2im, im2col, ConvGeom, Scalar, Tensor};

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
        out_channels: usize,
    },
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Add(Var, Var),
    Concat(Var, Var),
    Upsample2x(Var),
}

pub struct Graph<F: Scalar = f32> {
    values: Vec<Tensor<F>>,
    ops: Vec<Op>,
    needs_grad: Vec<bool>,
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Graph {
            values: Vec::new(),
            ops: Vec::new(),
            needs_grad: Vec::new(),
            grads: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor<F>, op: Op, needs_grad: bool) -> Var {
        self.values.push(value);
        self.ops.push(op);
        self.needs_grad.push(needs_grad);
        self.grads.push(None);
        Var(self.values.len() - 1)
    }

    /// Constant input; no gradient is propagated into it.
    pub fn input(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Differentiable leaf (parameters, or inputs whose gradient is wanted).
    pub fn leaf(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.values[v.0]
    }

    pub fn take_value(&mut self, v: Var) -> Tensor<F> {
        std::mem::replace(&mut self.values[v.0], Tensor::zeros([0, 0, 0, 0]))
    }

    /// Gradient of a differentiable leaf after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&Tensor<F>> {
        self.grads[v.0].as_ref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Zero-padded 2-D convolution. `w` has shape (Cout, Cin, k, k) and `b` (1, Cout, 1, 1).
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let [n, c, h, wd] = self.values[x.0].shape();
        let [cout, cin, k, k2] = self.values[w.0].shape();
        assert_eq!(k, k2, "only square kernels are supported");
        assert_eq!(c, cin, "conv2d input has {c} channels, weight expects {cin}");
        assert_eq!(self.values[b.0].len(), cout, "bias length mismatch");
        let geom = ConvGeom::new(c, h, wd, k, stride, pad)
            .unwrap_or_else(|| panic!("conv2d kernel {k} does not fit input {h}x{wd} with pad {pad}"));
        let (rows, cols_n) = (geom.col_rows(), geom.col_cols());
        let mut out = Tensor::zeros([n, cout, geom.out_h, geom.out_w]);
        {
            let xv = &self.values[x.0];
            let wv = self.values[w.0].data();
            let bv = self.values[b.0].data();
            let mut cols = if geom.is_pointwise() {
                Vec::new()
            } else {
                vec![F::zero(); rows * cols_n]
            };
            let out_len = cout * cols_n;
            for i in 0..n {
                let dst = &mut out.data_mut()[i * out_len..(i + 1) * out_len];
                for (co, chunk) in dst.chunks_mut(cols_n).enumerate() {
                    chunk.fill(bv[co]);
                }
                let src: &[F] = if geom.is_pointwise() {
                    xv.sample(i)
                } else {
                    im2col(xv.sample(i), &geom, &mut cols);
                    &cols
                };
                F::gemm(
                    cout,
                    rows,
                    cols_n,
                    F::one(),
                    wv,
                    rows as isize,
                    1,
                    src,
                    cols_n as isize,
                    1,
                    F::one(),
                    dst,
                    cols_n as isize,
                    1,
                );
            }
        }
        let ng = self.needs_grad[x.0] || self.needs_grad[w.0] || self.needs_grad[b.0];
        self.push(
            out,
            Op::Conv2d {
                x,
                w,
                b,
                geom,
                out_channels: cout,
            },
            ng,
        )
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.values[x.0].map(|v| if v > F::zero() { v } else { F::zero() });
        let ng = self.needs_grad[x.0];
        self.push(out, Op::Relu(x), ng)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let s = F::of(slope);
        let out = self.values[x.0].map(|v| if v > F::zero() { v } else { v * s });
        let ng = self.needs_grad[x.0];
        self.push(out, Op::LeakyRelu(x, slope), ng)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.values[x.0].map(sigmoid);
        let ng = self.needs_grad[x.0];
        self.push(out, Op::Sigmoid(x), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.values[a.0].clone();
        out.add_assign(&self.values[b.0]);
        let ng = self.needs_grad[a.0] || self.needs_grad[b.0];
        self.push(out, Op::Add(a, b), ng)
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let out = Tensor::concat_channels(&self.values[a.0], &self.values[b.0]);
        let ng = self.needs_grad[a.0] || self.needs_grad[b.0];
        self.push(out, Op::Concat(a, b), ng)
    }

    /// Nearest-neighbour 2x spatial upsampling.
    pub fn upsample2x(&mut self, x: Var) -> Var {
        let src = &self.values[x.0];
        let [n, c, h, w] = src.shape();
        let mut out = Tensor::zeros([n, c, 2 * h, 2 * w]);
        let (ow, ohw) = (2 * w, 4 * h * w);
        for (p, dst) in out.data_mut().chunks_mut(ohw).enumerate() {
            let plane = &src.data()[p * h * w..(p + 1) * h * w];
            for y in 0..2 * h {
                for xx in 0..ow {
                    dst[y * ow + xx] = plane[(y / 2) * w + xx / 2];
                }
            }
        }
        let ng = self.needs_grad[x.0];
        self.push(out, Op::Upsample2x(x), ng)
    }

    fn accumulate(&mut self, v: Var, g: Tensor<F>) {
        if !self.needs_grad[v.0] {
            return;
        }
        match &mut self.grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Propagates the seed gradients back through the tape. Gradients of
    /// leaves remain available through [`Graph::grad`]; intermediate
    /// gradients are released as the sweep passes them.
    pub fn backward(&mut self, seeds: Vec<(Var, Tensor<F>)>) {
        let Some(top) = seeds.iter().map(|(v, _)| v.0).max() else {
            return;
        };
        for (v, g) in seeds {
            assert_eq!(self.values[v.0].shape(), g.shape(), "seed gradient shape mismatch");
            self.accumulate(v, g);
        }
        for i in (0..=top).rev() {
            if matches!(self.ops[i], Op::Leaf) {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            let op = self.ops[i].clone();
            match op {
                Op::Leaf => unreachable!(),
                Op::Relu(x) => {
                    if self.needs_grad[x.0] {
                        let mut gx = g;
                        for (d, &v) in gx.data_mut().iter_mut().zip(self.values[x.0].data()) {
                            if v <= F::zero() {
                                *d = F::zero();
                            }
                        }
                        self.accumulate(x, gx);
                    }
                }
                Op::LeakyRelu(x, slope) => {
                    if self.needs_grad[x.0] {
                        let s = F::of(slope);
                        let mut gx = g;
                        for (d, &v) in gx.data_mut().iter_mut().zip(self.values[x.0].data()) {
                            if v <= F::zero() {
                                *d = *d * s;
                            }
                        }
                        self.accumulate(x, gx);
                    }
                }
                Op::Sigmoid(x) => {
                    if self.needs_grad[x.0] {
                        let mut gx = g;
                        for (d, &y) in gx.data_mut().iter_mut().zip(self.values[i].data()) {
                            *d = *d * y * (F::one() - y);
                        }
                        self.accumulate(x, gx);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs_grad[b.0] {
                        self.accumulate(b, g.clone());
                    }
                    self.accumulate(a, g);
                }
                Op::Concat(a, b) => {
                    let ca = self.values[a.0].channels();
                    let [n, c, h, w] = g.shape();
                    let cb = c - ca;
                    let hw = h * w;
                    let mut ga = Vec::with_capacity(n * ca * hw);
                    let mut gb = Vec::with_capacity(n * cb * hw);
                    for s in 0..n {
                        let sample = g.sample(s);
                        ga.extend_from_slice(&sample[..ca * hw]);
                        gb.extend_from_slice(&sample[ca * hw..]);
                    }
                    self.accumulate(a, Tensor::from_vec([n, ca, h, w], ga));
                    self.accumulate(b, Tensor::from_vec([n, cb, h, w], gb));
                }
                Op::Upsample2x(x) => {
                    if self.needs_grad[x.0] {
                        let [n, c, h, w] = self.values[x.0].shape();
                        let mut gx = Tensor::zeros([n, c, h, w]);
                        let ow = 2 * w;
                        for (p, dst) in gx.data_mut().chunks_mut(h * w).enumerate() {
                            let src = &g.data()[p * 4 * h * w..(p + 1) * 4 * h * w];
                            for y in 0..2 * h {
                                for xx in 0..ow {
                                    dst[(y / 2) * w + xx / 2] += src[y * ow + xx];
                                }
                            }
                        }
                        self.accumulate(x, gx);
                    }
                }
                Op::Conv2d {
                    x,
                    w,
                    b,
                    geom,
                    out_channels,
                } => self.conv2d_backward(g, x, w, b, &geom, out_channels),
            }
        }
    }

    fn conv2d_backward(&mut self, g: Tensor<F>, x: Var, w: Var, b: Var, geom: &ConvGeom, cout: usize) {
        let n = g.batch();
        let (rows, cols_n) = (geom.col_rows(), geom.col_cols());
        let want_x = self.needs_grad[x.0];
        let want_w = self.needs_grad[w.0];
        let want_b = self.needs_grad[b.0];
        let mut gw = Tensor::zeros(self.values[w.0].shape());
        let mut gb = Tensor::zeros(self.values[b.0].shape());
        let mut gx = want_x.then(|| Tensor::zeros(self.values[x.0].shape()));
        {
            let xv = &self.values[x.0];
            let wv = self.values[w.0].data();
            let pointwise = geom.is_pointwise();
            let mut cols = if pointwise { Vec::new() } else { vec![F::zero(); rows * cols_n] };
            let mut dcols = if want_x && !pointwise { vec![F::zero(); rows * cols_n] } else { Vec::new() };
            for i in 0..n {
                let dy = g.sample(i);
                if want_b {
                    for (co, chunk) in dy.chunks(cols_n).enumerate() {
                        let mut s = F::zero();
                        for &v in chunk {
                            s += v;
                        }
                        gb.data_mut()[co] += s;
                    }
                }
                if want_w {
                    let src: &[F] = if pointwise {
                        xv.sample(i)
                    } else {
                        im2col(xv.sample(i), geom, &mut cols);
                        &cols
                    };
                    // dW (cout x rows) += dY (cout x P) * cols^T (P x rows)
                    F::gemm(
                        cout,
                        cols_n,
                        rows,
                        F::one(),
                        dy,
                        cols_n as isize,
                        1,
                        src,
                        1,
                        cols_n as isize,
                        F::one(),
                        gw.data_mut(),
                        rows as isize,
                        1,
                    );
                }
                if let Some(gx) = gx.as_mut() {
                    let sample_len = gx.sample_len();
                    let dst = &mut gx.data_mut()[i * sample_len..(i + 1) * sample_len];
                    // dcols (rows x P) = W^T (rows x cout) * dY (cout x P)
                    let (target, beta): (&mut [F], F) = if pointwise {
                        (dst, F::one())
                    } else {
                        (&mut dcols, F::zero())
                    };
                    F::gemm(
                        rows,
                        cout,
                        cols_n,
                        F::one(),
                        wv,
                        1,
                        rows as isize,
                        dy,
                        cols_n as isize,
                        1,
                        beta,
                        target,
                        cols_n as isize,
                        1,
                    );
                    if !pointwise {
                        col2im(&dcols, geom, dst);
                    }
                }
            }
        }
        if want_w {
            self.accumulate(w, gw);
        }
        if want_b {
            self.accumulate(b, gb);
        }
        if let Some(gx) = gx {
            self.accumulate(x, gx);
        }
    }
}

pub fn sigmoid<F: Scalar>(v: F) -> F {
    if v >= F::zero() {
        F::one() / (F::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (F::one() + e)
    }
}

/// Named trainable tensors of one model, with gradient buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<F: Scalar = f32> {
    names: Vec<String>,
    values: Vec<Tensor<F>>,
    grads: Vec<Tensor<F>>,
}

impl<F: Scalar> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
        }
    }

    /// Registers a tensor and returns its index.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<F>) -> usize {
        self.grads.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        self.names.push(name.into());
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total scalar parameter count.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor<F>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor<F>] {
        &mut self.values
    }

    pub fn grads(&self) -> &[Tensor<F>] {
        &self.grads
    }

    pub fn value_and_grad_mut(&mut self, i: usize) -> (&mut Tensor<F>, &Tensor<F>) {
        (&mut self.values[i], &self.grads[i])
    }

    /// Places every parameter on the tape as a differentiable leaf.
    pub fn bind(&self, g: &mut Graph<F>) -> Vec<Var> {
        self.values.iter().map(|v| g.leaf(v.clone())).collect()
    }

    /// Places every parameter on the tape as a constant (inference only).
    pub fn bind_constant(&self, g: &mut Graph<F>) -> Vec<Var> {
        self.values.iter().map(|v| g.input(v.clone())).collect()
    }

    /// Adds the tape gradients of bound parameters into the gradient buffers.
    pub fn accumulate_grads(&mut self, g: &Graph<F>, bound: &[Var]) {
        assert_eq!(bound.len(), self.values.len(), "binding does not match parameter store");
        for (acc, v) in self.grads.iter_mut().zip(bound) {
            if let Some(grad) = g.grad(*v) {
                acc.add_assign(grad);
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.data_mut().fill(F::zero());
        }
    }

    pub fn cast<G: Scalar>(&self) -> ParamStore<G> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
            grads: self.grads.iter().map(Tensor::cast).collect(),
        }
    }

    /// True when every value is bit-identical to `other`'s.
    pub fn bit_identical(&self, other: &Self) -> bool {
        self.names == other.names
            && self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| {
                a.shape() == b.shape()
                    && a.data().iter().zip(b.data()).all(|(x, y)| x.to_f64().unwrap().to_bits() == y.to_f64().unwrap().to_bits())
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(shape: [usize; 4], scale: f64, phase: f64) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|i| ((i as f64) * 0.7 + phase).sin() * scale).collect())
    }

    /// Scalar objective: sum of elementwise product with a fixed probe.
    fn objective(out: &Tensor<f64>, probe: &Tensor<f64>) -> f64 {
        out.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
    }

    fn build(g: &mut Graph<f64>, x: Var, w1: Var, b1: Var, w2: Var, b2: Var) -> Var {
        let h = g.conv2d(x, w1, b1, 2, 1);
        let h = g.leaky_relu(h, 0.2);
        let u = g.upsample2x(h);
        let c = g.concat(u, x);
        let o = g.conv2d(c, w2, b2, 1, 1);
        let s = g.sigmoid(o);
        let r = g.relu(o);
        g.add(s, r)
    }

    #[test]
    fn backward_matches_finite_differences() {
        let x0 = ramp([2, 2, 6, 6], 1.0, 0.3);
        let w10 = ramp([3, 2, 4, 4], 0.4, 1.1);
        let b10 = ramp([1, 3, 1, 1], 0.1, 0.2);
        let w20 = ramp([2, 5, 3, 3], 0.3, 2.0);
        let b20 = ramp([1, 2, 1, 1], 0.1, 0.9);
        let run = |x: &Tensor<f64>, w1: &Tensor<f64>, b1: &Tensor<f64>, w2: &Tensor<f64>, b2: &Tensor<f64>| {
            let mut g = Graph::new();
            let vars = [g.leaf(x.clone()), g.leaf(w1.clone()), g.leaf(b1.clone()), g.leaf(w2.clone()), g.leaf(b2.clone())];
            let out = build(&mut g, vars[0], vars[1], vars[2], vars[3], vars[4]);
            (g, vars, out)
        };
        let (mut g, vars, out) = run(&x0, &w10, &b10, &w20, &b20);
        let probe = ramp(g.value(out).shape(), 1.0, 0.5);
        g.backward(vec![(out, probe.clone())]);
        let analytic: Vec<Tensor<f64>> = vars.iter().map(|v| g.grad(*v).unwrap().clone()).collect();

        let base = [x0, w10, b10, w20, b20];
        let eps = 1e-6;
        for (which, grad) in analytic.iter().enumerate() {
            for idx in (0..grad.len()).step_by(7) {
                let mut plus = base.clone();
                plus[which].data_mut()[idx] += eps;
                let mut minus = base.clone();
                minus[which].data_mut()[idx] -= eps;
                let (gp, _, op) = run(&plus[0], &plus[1], &plus[2], &plus[3], &plus[4]);
                let (gm, _, om) = run(&minus[0], &minus[1], &minus[2], &minus[3], &minus[4]);
                let fd = (objective(gp.value(op), &probe) - objective(gm.value(om), &probe)) / (2.0 * eps);
                let a = grad.data()[idx];
                assert!((fd - a).abs() <= 1e-6 * (1.0 + a.abs()), "param {which} idx {idx}: fd {fd} vs {a}");
            }
        }
    }

    #[test]
    fn constant_inputs_receive_no_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.input(ramp([1, 1, 4, 4], 1.0, 0.0));
        let w = g.leaf(ramp([1, 1, 3, 3], 1.0, 0.1));
        let b = g.leaf(Tensor::zeros([1, 1, 1, 1]));
        let y = g.conv2d(x, w, b, 1, 1);
        let seed = Tensor::full(g.value(y).shape(), 1.0);
        g.backward(vec![(y, seed)]);
        assert!(g.grad(x).is_none());
        assert!(g.grad(w).is_some());
        assert_eq!(g.grad(b).unwrap().data(), &[16.0]);
    }
}
