use super::conv::{col2im_add, im2col, ConvGeom};
use super::{dims4, numel, ParamId, ParamStore, Tensor};
use crate::error::{contract, Result};
use crate::scalar::{Scalar, Strides};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchNormMode {
    /// Normalize by batch statistics and update the running moments.
    Train,
    /// Normalize by the running moments.
    Eval,
}

#[derive(Clone, Copy, Debug)]
enum Leaf {
    Constant,
    Input,
    Param { store: u64, id: usize },
}

#[derive(Clone, Copy, Debug)]
struct AxisTap<T> {
    lo: usize,
    hi: usize,
    frac: T,
}

enum Op<T> {
    Leaf(Leaf),
    Conv2d { x: Var, w: Var, b: Var, geom: ConvGeom, cols: Option<Vec<T>> },
    MaxPool { x: Var, argmax: Vec<u32> },
    Upsample2x { x: Var },
    Resize { x: Var, rows: Vec<AxisTap<T>>, cols: Vec<AxisTap<T>> },
    Relu { x: Var },
    Add { a: Var, b: Var },
    Concat { a: Var, b: Var },
    MseSum { a: Var, b: Var },
    Sum { x: Var },
    WeightedSum { terms: Vec<(Var, T)> },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, train: bool },
    Map { x: Var, deriv: Vec<T> },
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf(_) => Vec::new(),
            Op::Conv2d { x, w, b, .. } => vec![*x, *w, *b],
            Op::MaxPool { x, .. }
            | Op::Upsample2x { x }
            | Op::Resize { x, .. }
            | Op::Relu { x }
            | Op::Sum { x }
            | Op::Map { x, .. } => vec![*x],
            Op::Add { a, b } | Op::Concat { a, b } | Op::MseSum { a, b } => vec![*a, *b],
            Op::WeightedSum { terms } => terms.iter().map(|t| t.0).collect(),
            Op::BatchNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Op::Leaf(_) => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::MaxPool { .. } => "maxpool2d",
            Op::Upsample2x { .. } => "upsample_nearest2x",
            Op::Resize { .. } => "resize_bilinear",
            Op::Relu { .. } => "relu",
            Op::Add { .. } => "add",
            Op::Concat { .. } => "concat_channels",
            Op::MseSum { .. } => "mse_sum",
            Op::Sum { .. } => "sum",
            Op::WeightedSum { .. } => "weighted_sum",
            Op::BatchNorm { .. } => "batchnorm2d",
            Op::Map { .. } => "map",
        }
    }
}

struct Node<T> {
    value: Vec<T>,
    shape: Vec<usize>,
    op: Op<T>,
}

/// Define-by-run record of a forward computation.
///
/// Nodes are appended in execution order, so node indices form a
/// topological order and a reverse sweep visits each node once. The tape
/// keeps every forward value, which allows several backward sweeps from
/// different losses on the same recording.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Operation names in recording order.
    pub fn op_kinds(&self) -> Vec<&'static str> {
        self.nodes.iter().map(|n| n.op.kind()).collect()
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Value of a single-element node.
    pub fn item(&self, v: Var) -> T {
        self.nodes[v.0].value[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor<T> {
        let n = &self.nodes[v.0];
        Tensor { shape: n.shape.clone(), values: n.value.clone(), requires_grad: false, grad: None }
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<T>, op: Op<T>) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        self.nodes.push(Node { value, shape, op });
        Var(self.nodes.len() - 1)
    }

    /// Records a value that never receives gradient.
    pub fn constant(&mut self, t: &Tensor<T>) -> Var {
        self.push(t.shape.clone(), t.values.clone(), Op::Leaf(Leaf::Constant))
    }

    /// Records a free input. Gradients w.r.t. it are read with [`Tape::gradient`].
    pub fn input(&mut self, t: &Tensor<T>) -> Var {
        let leaf = if t.requires_grad { Leaf::Input } else { Leaf::Constant };
        self.push(t.shape.clone(), t.values.clone(), Op::Leaf(leaf))
    }

    /// Records a snapshot of a stored parameter.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let t = store.get(id);
        let leaf = if t.requires_grad { Leaf::Param { store: store.id(), id: id.0 } } else { Leaf::Constant };
        self.push(t.shape.clone(), t.values.clone(), Op::Leaf(leaf))
    }

    /// Copy of `v` that blocks gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let n = &self.nodes[v.0];
        let (shape, value) = (n.shape.clone(), n.value.clone());
        self.push(shape, value, Op::Leaf(Leaf::Constant))
    }

    /// Batched 2-D cross-correlation, `x: [B,Cin,H,W]`, `w: [Cout,Cin,kh,kw]`, `b: [Cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        contract!(self.shape(x).len() == 4, "conv2d input must be 4-D, got {:?}", self.shape(x));
        contract!(self.shape(w).len() == 4, "conv2d weight must be 4-D, got {:?}", self.shape(w));
        let [batch, c_in, h, wd] = dims4(self.shape(x));
        let [c_out, wc_in, kh, kw] = dims4(self.shape(w));
        contract!(c_in == wc_in, "conv2d input has {c_in} channels but weight expects {wc_in}");
        contract!(kh % 2 == 1 && kw % 2 == 1, "conv2d kernel {kh}x{kw} must be odd");
        contract!(stride >= 1, "conv2d stride must be positive");
        contract!(self.shape(b) == [c_out], "conv2d bias shape {:?} != [{c_out}]", self.shape(b));
        contract!(h + 2 * pad >= kh && wd + 2 * pad >= kw, "conv2d kernel larger than padded input");
        let geom = ConvGeom {
            batch,
            c_in,
            h,
            w: wd,
            c_out,
            kh,
            kw,
            stride,
            pad,
            oh: (h + 2 * pad - kh) / stride + 1,
            ow: (wd + 2 * pad - kw) / stride + 1,
        };
        let (k, p) = (geom.k(), geom.p());
        let xs = &self.nodes[x.0].value;
        let ws = &self.nodes[w.0].value;
        let bs = &self.nodes[b.0].value;
        let mut out = vec![T::zero(); batch * c_out * p];
        let cols = if geom.is_pointwise() {
            None
        } else {
            let mut cols = vec![T::zero(); batch * k * p];
            for n in 0..batch {
                im2col(&geom, &xs[n * c_in * h * wd..(n + 1) * c_in * h * wd], &mut cols[n * k * p..(n + 1) * k * p]);
            }
            Some(cols)
        };
        for n in 0..batch {
            let patch = match &cols {
                Some(c) => &c[n * k * p..(n + 1) * k * p],
                None => &xs[n * k * p..(n + 1) * k * p],
            };
            let dst = &mut out[n * c_out * p..(n + 1) * c_out * p];
            for (co, row) in dst.chunks_exact_mut(p).enumerate() {
                row.fill(bs[co]);
            }
            T::gemm(c_out, k, p, T::one(), ws, Strides::row_major(k), patch, Strides::row_major(p), T::one(), dst, Strides::row_major(p));
        }
        Ok(self.push(vec![batch, c_out, geom.oh, geom.ow], out, Op::Conv2d { x, w, b, geom, cols }))
    }

    /// Max pooling with window `k` and step `stride`; ties go to the first
    /// element in row-major order.
    pub fn maxpool2d(&mut self, x: Var, k: usize, stride: usize) -> Result<Var> {
        contract!(self.shape(x).len() == 4, "maxpool2d input must be 4-D");
        let [batch, ch, h, w] = dims4(self.shape(x));
        contract!(k >= 1 && stride >= 1, "maxpool2d window and stride must be positive");
        contract!(h % stride == 0 && w % stride == 0, "maxpool2d extents {h}x{w} not divisible by stride {stride}");
        contract!(h >= k && w >= k, "maxpool2d window larger than input");
        let (oh, ow) = ((h - k) / stride + 1, (w - k) / stride + 1);
        let xs = &self.nodes[x.0].value;
        let mut out = Vec::with_capacity(batch * ch * oh * ow);
        let mut argmax = Vec::with_capacity(batch * ch * oh * ow);
        for plane in 0..batch * ch {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * stride * w + ox * stride;
                    for dy in 0..k {
                        for dx in 0..k {
                            let idx = base + (oy * stride + dy) * w + ox * stride + dx;
                            if xs[idx] > xs[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(xs[best]);
                    argmax.push(best as u32);
                }
            }
        }
        Ok(self.push(vec![batch, ch, oh, ow], out, Op::MaxPool { x, argmax }))
    }

    pub fn upsample_nearest2x(&mut self, x: Var) -> Result<Var> {
        contract!(self.shape(x).len() == 4, "upsample input must be 4-D");
        let [batch, ch, h, w] = dims4(self.shape(x));
        let xs = &self.nodes[x.0].value;
        let mut out = vec![T::zero(); batch * ch * 4 * h * w];
        for plane in 0..batch * ch {
            let src = &xs[plane * h * w..(plane + 1) * h * w];
            let dst = &mut out[plane * 4 * h * w..(plane + 1) * 4 * h * w];
            for y in 0..2 * h {
                for xo in 0..2 * w {
                    dst[y * 2 * w + xo] = src[(y / 2) * w + xo / 2];
                }
            }
        }
        Ok(self.push(vec![batch, ch, 2 * h, 2 * w], out, Op::Upsample2x { x }))
    }

    /// Bilinear resampling to `oh x ow` with half-pixel centers and edge clamping.
    pub fn resize_bilinear(&mut self, x: Var, oh: usize, ow: usize) -> Result<Var> {
        contract!(self.shape(x).len() == 4, "resize input must be 4-D");
        contract!(oh > 0 && ow > 0, "resize target must be non-empty");
        let [batch, ch, h, w] = dims4(self.shape(x));
        let rows = axis_taps::<T>(h, oh);
        let cols = axis_taps::<T>(w, ow);
        let xs = &self.nodes[x.0].value;
        let mut out = vec![T::zero(); batch * ch * oh * ow];
        for plane in 0..batch * ch {
            let src = &xs[plane * h * w..(plane + 1) * h * w];
            for (oy, ry) in rows.iter().enumerate() {
                for (ox, rx) in cols.iter().enumerate() {
                    let top = src[ry.lo * w + rx.lo] * (T::one() - rx.frac) + src[ry.lo * w + rx.hi] * rx.frac;
                    let bot = src[ry.hi * w + rx.lo] * (T::one() - rx.frac) + src[ry.hi * w + rx.hi] * rx.frac;
                    out[(plane * oh + oy) * ow + ox] = top * (T::one() - ry.frac) + bot * ry.frac;
                }
            }
        }
        Ok(self.push(vec![batch, ch, oh, ow], out, Op::Resize { x, rows, cols }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.nodes[x.0].value.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
        let shape = self.nodes[x.0].shape.clone();
        self.push(shape, out, Op::Relu { x })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        contract!(self.shape(a) == self.shape(b), "add of {:?} and {:?}", self.shape(a), self.shape(b));
        let out = self.value(a).iter().zip(self.value(b)).map(|(&p, &q)| p + q).collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(shape, out, Op::Add { a, b }))
    }

    /// Concatenates two `[B,C,H,W]` tensors along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        contract!(self.shape(a).len() == 4 && self.shape(b).len() == 4, "concat_channels needs 4-D inputs");
        let [na, ca, ha, wa] = dims4(self.shape(a));
        let [nb, cb, hb, wb] = dims4(self.shape(b));
        contract!(na == nb && ha == hb && wa == wb, "concat_channels of {:?} and {:?}", self.shape(a), self.shape(b));
        let (sa, sb) = (ca * ha * wa, cb * ha * wa);
        let mut out = Vec::with_capacity(na * (sa + sb));
        for n in 0..na {
            out.extend_from_slice(&self.value(a)[n * sa..(n + 1) * sa]);
            out.extend_from_slice(&self.value(b)[n * sb..(n + 1) * sb]);
        }
        Ok(self.push(vec![na, ca + cb, ha, wa], out, Op::Concat { a, b }))
    }

    /// Sum of squared differences, returned as a scalar.
    pub fn mse_sum(&mut self, a: Var, b: Var) -> Result<Var> {
        contract!(self.shape(a) == self.shape(b), "mse_sum of {:?} and {:?}", self.shape(a), self.shape(b));
        let s: T = self.value(a).iter().zip(self.value(b)).map(|(&p, &q)| (p - q) * (p - q)).sum();
        Ok(self.push(Vec::new(), vec![s], Op::MseSum { a, b }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: T = self.value(x).iter().copied().sum();
        self.push(Vec::new(), vec![s], Op::Sum { x })
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        self.weighted_sum(&[(x, c)]).expect("single-term weighted sum")
    }

    /// `sum_i c_i * x_i` over equally shaped operands.
    pub fn weighted_sum(&mut self, terms: &[(Var, T)]) -> Result<Var> {
        contract!(!terms.is_empty(), "weighted_sum of no terms");
        let shape = self.nodes[terms[0].0 .0].shape.clone();
        contract!(terms.iter().all(|(v, _)| self.shape(*v) == shape.as_slice()), "weighted_sum of mismatched shapes");
        let mut out = vec![T::zero(); numel(&shape)];
        for &(v, c) in terms {
            out.iter_mut().zip(self.value(v)).for_each(|(o, &x)| *o += c * x);
        }
        Ok(self.push(shape, out, Op::WeightedSum { terms: terms.to_vec() }))
    }

    /// Elementwise `f` with derivative `df`, both evaluated during the forward pass.
    pub fn map(&mut self, x: Var, f: impl Fn(T) -> T, df: impl Fn(T) -> T) -> Var {
        let xs = &self.nodes[x.0].value;
        let out = xs.iter().map(|&v| f(v)).collect();
        let deriv = xs.iter().map(|&v| df(v)).collect();
        let shape = self.nodes[x.0].shape.clone();
        self.push(shape, out, Op::Map { x, deriv })
    }

    /// Per-channel batch normalization of `[B,C,H,W]`.
    ///
    /// In [`BatchNormMode::Train`] the batch moments normalize the input and
    /// the running moments are blended in with weight `momentum` (the running
    /// variance uses the unbiased estimate).
    #[allow(clippy::too_many_arguments)]
    pub fn batchnorm2d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &mut [T],
        running_var: &mut [T],
        mode: BatchNormMode,
        eps: T,
        momentum: T,
    ) -> Result<Var> {
        contract!(self.shape(x).len() == 4, "batchnorm2d input must be 4-D");
        let [batch, ch, h, w] = dims4(self.shape(x));
        contract!(self.shape(gamma) == [ch] && self.shape(beta) == [ch], "batchnorm2d affine shape mismatch");
        contract!(running_mean.len() == ch && running_var.len() == ch, "batchnorm2d running moment shape mismatch");
        let hw = h * w;
        let count = batch * hw;
        let train = mode == BatchNormMode::Train;
        contract!(!train || count >= 2, "batchnorm2d train mode needs at least 2 values per channel");
        let xs = &self.nodes[x.0].value;
        let gs = &self.nodes[gamma.0].value;
        let bs = &self.nodes[beta.0].value;
        let mut inv_std = vec![T::zero(); ch];
        let mut mean = vec![T::zero(); ch];
        let nf = T::of(count as f64);
        for c in 0..ch {
            if train {
                let mut s = T::zero();
                for n in 0..batch {
                    s += xs[(n * ch + c) * hw..(n * ch + c + 1) * hw].iter().copied().sum::<T>();
                }
                let m = s / nf;
                let mut ss = T::zero();
                for n in 0..batch {
                    for &v in &xs[(n * ch + c) * hw..(n * ch + c + 1) * hw] {
                        ss += (v - m) * (v - m);
                    }
                }
                let var = ss / nf;
                mean[c] = m;
                inv_std[c] = T::one() / (var + eps).sqrt();
                let unbiased = ss / T::of((count - 1) as f64);
                running_mean[c] = (T::one() - momentum) * running_mean[c] + momentum * m;
                running_var[c] = (T::one() - momentum) * running_var[c] + momentum * unbiased;
            } else {
                mean[c] = running_mean[c];
                inv_std[c] = T::one() / (running_var[c] + eps).sqrt();
            }
        }
        let mut xhat = vec![T::zero(); xs.len()];
        let mut out = vec![T::zero(); xs.len()];
        for n in 0..batch {
            for c in 0..ch {
                let range = (n * ch + c) * hw..(n * ch + c + 1) * hw;
                for i in range {
                    let z = (xs[i] - mean[c]) * inv_std[c];
                    xhat[i] = z;
                    out[i] = gs[c] * z + bs[c];
                }
            }
        }
        let shape = self.nodes[x.0].shape.clone();
        Ok(self.push(shape, out, Op::BatchNorm { x, gamma, beta, xhat, inv_std, train }))
    }

    /// Accumulates `d loss / d p` into every trainable parameter of `stores`
    /// that was recorded on this tape.
    pub fn backward(&self, loss: Var, stores: &mut [&mut ParamStore<T>]) -> Result<()> {
        self.backward_scaled(loss, T::one(), stores)
    }

    /// As [`Tape::backward`] for the loss `seed * loss`.
    pub fn backward_scaled(&self, loss: Var, seed: T, stores: &mut [&mut ParamStore<T>]) -> Result<()> {
        let ids: Vec<u64> = stores.iter().map(|s| s.id()).collect();
        let wanted = |node: &Node<T>| matches!(node.op, Op::Leaf(Leaf::Param { store, .. }) if ids.contains(&store));
        let grads = self.propagate(loss, seed, &wanted)?;
        for (i, g) in grads.into_iter().enumerate() {
            if let (Some(g), Op::Leaf(Leaf::Param { store, id })) = (g, &self.nodes[i].op) {
                let pos = ids.iter().position(|s| s == store).expect("store filtered above");
                stores[pos].get_mut(ParamId(*id)).accumulate_grad(&g);
            }
        }
        Ok(())
    }

    /// Gradient of `loss` w.r.t. each of `wrt` (zeros where unreachable).
    pub fn gradient(&self, loss: Var, wrt: &[Var]) -> Result<Vec<Vec<T>>> {
        let mut mark = vec![false; self.nodes.len()];
        for v in wrt {
            mark[v.0] = true;
        }
        let grads = self.propagate_marked(loss, T::one(), &mark)?;
        Ok(wrt
            .iter()
            .map(|v| grads[v.0].clone().unwrap_or_else(|| vec![T::zero(); self.nodes[v.0].value.len()]))
            .collect())
    }

    fn propagate(&self, loss: Var, seed: T, wanted: &dyn Fn(&Node<T>) -> bool) -> Result<Vec<Option<Vec<T>>>> {
        let mark: Vec<bool> = self.nodes.iter().map(wanted).collect();
        self.propagate_marked(loss, seed, &mark)
    }

    fn propagate_marked(&self, loss: Var, seed: T, wanted: &[bool]) -> Result<Vec<Option<Vec<T>>>> {
        contract!(loss.0 < self.nodes.len(), "loss is not on this tape");
        contract!(self.nodes[loss.0].value.len() == 1, "backward needs a scalar loss, got shape {:?}", self.shape(loss));
        // reach[i]: some wanted node depends on node i through the graph.
        let mut reach = wanted.to_vec();
        for i in 0..=loss.0 {
            if !reach[i] && self.nodes[i].op.inputs().iter().any(|v| reach[v.0]) {
                reach[i] = true;
            }
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !reach[loss.0] {
            return Ok(grads);
        }
        grads[loss.0] = Some(vec![seed]);
        let mut kept: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        for i in (0..=loss.0).rev() {
            if !reach[i] {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &reach, &mut grads);
            if wanted[i] {
                kept[i] = Some(g);
            }
        }
        Ok(kept)
    }

    fn backprop_node(&self, i: usize, g: &[T], reach: &[bool], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        macro_rules! slot {
            ($v:expr) => {
                grad_slot(grads, reach, self.nodes[$v.0].value.len(), $v)
            };
        }
        match &node.op {
            Op::Leaf(_) => {}
            Op::Conv2d { x, w, b, geom, cols } => {
                let (k, p, c_out) = (geom.k(), geom.p(), geom.c_out);
                let in_size = geom.c_in * geom.h * geom.w;
                if let Some(db) = slot!(*b) {
                    for n in 0..geom.batch {
                        for (co, row) in g[n * c_out * p..(n + 1) * c_out * p].chunks_exact(p).enumerate() {
                            db[co] += row.iter().copied().sum::<T>();
                        }
                    }
                }
                if let Some(dw) = slot!(*w) {
                    let xs = &self.nodes[x.0].value;
                    for n in 0..geom.batch {
                        let patch = match cols {
                            Some(c) => &c[n * k * p..(n + 1) * k * p],
                            None => &xs[n * k * p..(n + 1) * k * p],
                        };
                        T::gemm(c_out, p, k, T::one(), &g[n * c_out * p..(n + 1) * c_out * p], Strides::row_major(p), patch, Strides::transposed(p), T::one(), dw, Strides::row_major(k));
                    }
                }
                if let Some(dx) = slot!(*x) {
                    let ws = &self.nodes[w.0].value;
                    let mut dcol = if geom.is_pointwise() { Vec::new() } else { vec![T::zero(); k * p] };
                    for n in 0..geom.batch {
                        let gy = &g[n * c_out * p..(n + 1) * c_out * p];
                        let dxs = &mut dx[n * in_size..(n + 1) * in_size];
                        if geom.is_pointwise() {
                            T::gemm(k, c_out, p, T::one(), ws, Strides::transposed(k), gy, Strides::row_major(p), T::one(), dxs, Strides::row_major(p));
                        } else {
                            T::gemm(k, c_out, p, T::one(), ws, Strides::transposed(k), gy, Strides::row_major(p), T::zero(), &mut dcol, Strides::row_major(p));
                            col2im_add(geom, &dcol, dxs);
                        }
                    }
                }
            }
            Op::MaxPool { x, argmax } => {
                if let Some(dx) = slot!(*x) {
                    for (&src, &gv) in argmax.iter().zip(g) {
                        dx[src as usize] += gv;
                    }
                }
            }
            Op::Upsample2x { x } => {
                if let Some(dx) = slot!(*x) {
                    let [_, _, h, w] = dims4(&self.nodes[x.0].shape);
                    for (plane, gp) in g.chunks_exact(4 * h * w).enumerate() {
                        let dst = &mut dx[plane * h * w..(plane + 1) * h * w];
                        for y in 0..2 * h {
                            for xo in 0..2 * w {
                                dst[(y / 2) * w + xo / 2] += gp[y * 2 * w + xo];
                            }
                        }
                    }
                }
            }
            Op::Resize { x, rows, cols } => {
                if let Some(dx) = slot!(*x) {
                    let [_, _, h, w] = dims4(&self.nodes[x.0].shape);
                    let (oh, ow) = (rows.len(), cols.len());
                    for (plane, gp) in g.chunks_exact(oh * ow).enumerate() {
                        let dst = &mut dx[plane * h * w..(plane + 1) * h * w];
                        for (oy, ry) in rows.iter().enumerate() {
                            for (ox, rx) in cols.iter().enumerate() {
                                let v = gp[oy * ow + ox];
                                let (top, bot) = (v * (T::one() - ry.frac), v * ry.frac);
                                dst[ry.lo * w + rx.lo] += top * (T::one() - rx.frac);
                                dst[ry.lo * w + rx.hi] += top * rx.frac;
                                dst[ry.hi * w + rx.lo] += bot * (T::one() - rx.frac);
                                dst[ry.hi * w + rx.hi] += bot * rx.frac;
                            }
                        }
                    }
                }
            }
            Op::Relu { x } => {
                if let Some(dx) = slot!(*x) {
                    for ((d, &gv), &y) in dx.iter_mut().zip(g).zip(&node.value) {
                        if y > T::zero() {
                            *d += gv;
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                for v in [*a, *b] {
                    if let Some(d) = slot!(v) {
                        d.iter_mut().zip(g).for_each(|(d, &gv)| *d += gv);
                    }
                }
            }
            Op::Concat { a, b } => {
                let [n, ca, h, w] = dims4(&self.nodes[a.0].shape);
                let cb = self.nodes[b.0].shape[1];
                let (sa, sb) = (ca * h * w, cb * h * w);
                if let Some(da) = slot!(*a) {
                    for s in 0..n {
                        da[s * sa..(s + 1) * sa].iter_mut().zip(&g[s * (sa + sb)..s * (sa + sb) + sa]).for_each(|(d, &gv)| *d += gv);
                    }
                }
                if let Some(db) = slot!(*b) {
                    for s in 0..n {
                        db[s * sb..(s + 1) * sb].iter_mut().zip(&g[s * (sa + sb) + sa..(s + 1) * (sa + sb)]).for_each(|(d, &gv)| *d += gv);
                    }
                }
            }
            Op::MseSum { a, b } => {
                let two_g = g[0] + g[0];
                let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                if let Some(da) = slot!(*a) {
                    for ((d, &p), &q) in da.iter_mut().zip(va).zip(vb) {
                        *d += two_g * (p - q);
                    }
                }
                if let Some(db) = slot!(*b) {
                    for ((d, &p), &q) in db.iter_mut().zip(va).zip(vb) {
                        *d -= two_g * (p - q);
                    }
                }
            }
            Op::Sum { x } => {
                if let Some(dx) = slot!(*x) {
                    dx.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::WeightedSum { terms } => {
                for &(v, c) in terms {
                    if let Some(d) = slot!(v) {
                        d.iter_mut().zip(g).for_each(|(d, &gv)| *d += c * gv);
                    }
                }
            }
            Op::Map { x, deriv } => {
                if let Some(dx) = slot!(*x) {
                    for ((d, &gv), &dv) in dx.iter_mut().zip(g).zip(deriv) {
                        *d += gv * dv;
                    }
                }
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, train } => {
                let [batch, ch, h, w] = dims4(&node.shape);
                let hw = h * w;
                let mut sum_g = vec![T::zero(); ch];
                let mut sum_gx = vec![T::zero(); ch];
                for n in 0..batch {
                    for c in 0..ch {
                        let r = (n * ch + c) * hw..(n * ch + c + 1) * hw;
                        for (gv, z) in g[r.clone()].iter().zip(&xhat[r]) {
                            sum_g[c] += *gv;
                            sum_gx[c] += *gv * *z;
                        }
                    }
                }
                if let Some(dg) = slot!(*gamma) {
                    dg.iter_mut().zip(&sum_gx).for_each(|(d, &s)| *d += s);
                }
                if let Some(db) = slot!(*beta) {
                    db.iter_mut().zip(&sum_g).for_each(|(d, &s)| *d += s);
                }
                let gs = &self.nodes[gamma.0].value;
                if let Some(dx) = slot!(*x) {
                    let count = T::of((batch * hw) as f64);
                    for n in 0..batch {
                        for c in 0..ch {
                            let r = (n * ch + c) * hw..(n * ch + c + 1) * hw;
                            let scale = gs[c] * inv_std[c];
                            if *train {
                                let (mg, mgx) = (sum_g[c] / count, sum_gx[c] / count);
                                for ((d, &gv), &z) in dx[r.clone()].iter_mut().zip(&g[r.clone()]).zip(&xhat[r]) {
                                    *d += scale * (gv - mg - z * mgx);
                                }
                            } else {
                                for (d, &gv) in dx[r.clone()].iter_mut().zip(&g[r]) {
                                    *d += scale * gv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn grad_slot<'a, T: Scalar>(grads: &'a mut [Option<Vec<T>>], reach: &[bool], len: usize, v: Var) -> Option<&'a mut Vec<T>> {
    if !reach[v.0] {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); len]))
}

fn axis_taps<T: Scalar>(input: usize, output: usize) -> Vec<AxisTap<T>> {
    let ratio = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * ratio - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(input - 1);
            let hi = (lo + 1).min(input - 1);
            let frac = if hi == lo { 0.0 } else { src - lo as f64 };
            AxisTap { lo, hi, frac: T::of(frac) }
        })
        .collect()
}
