//! Parameterized building blocks. Each layer holds ids into the owning
//! network's [`ParamStore`].

use crate::error::Result;
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::{BatchNormMode, ParamId, ParamStore, Tape, Tensor, Var};

pub(crate) const BN_EPS: f64 = 1e-5;
pub(crate) const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Debug)]
pub(crate) struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv {
    /// He-initialized square convolution; padding keeps "same" extents at stride 1.
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        rng: &mut RngStream,
    ) -> Self {
        let fan_in = (c_in * k * k) as f64;
        let w = Tensor::randn(&[c_out, c_in, k, k], (2.0 / fan_in).sqrt(), rng).with_grad();
        let weight = store.insert(format!("{name}.weight"), w);
        let bias = store.insert(format!("{name}.bias"), Tensor::zeros(&[c_out]).with_grad());
        Conv { weight, bias, stride, pad: k / 2 }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        tape.conv2d(x, w, b, self.stride, self.pad)
    }

    pub fn in_channels<T: Scalar>(&self, store: &ParamStore<T>) -> usize {
        store.get(self.weight).shape()[1]
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub mean: ParamId,
    pub var: ParamId,
}

impl Norm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, ch: usize) -> Self {
        let gamma = store.insert(format!("{name}.gamma"), Tensor::full(&[ch], T::one()).with_grad());
        let beta = store.insert(format!("{name}.beta"), Tensor::zeros(&[ch]).with_grad());
        let mean = store.insert(format!("{name}.running_mean"), Tensor::zeros(&[ch]));
        let var = store.insert(format!("{name}.running_var"), Tensor::full(&[ch], T::one()));
        Norm { gamma, beta, mean, var }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &mut ParamStore<T>, x: Var, mode: BatchNormMode) -> Result<Var> {
        let g = tape.param(store, self.gamma);
        let b = tape.param(store, self.beta);
        let (m, v) = store.pair_mut(self.mean, self.var);
        tape.batchnorm2d(x, g, b, m.values_mut(), v.values_mut(), mode, T::of(BN_EPS), T::of(BN_MOMENTUM))
    }
}

/// Pre-activation bottleneck: three norm-relu-conv stages at half width in
/// the middle, plus a 1x1 projection on the skip path when widths differ.
#[derive(Clone, Debug)]
pub(crate) struct Residual {
    stages: [(Norm, Conv); 3],
    skip: Option<Conv>,
}

impl Residual {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, c_in: usize, c_out: usize, rng: &mut RngStream) -> Self {
        let mid = c_out / 2;
        let stages = [
            (Norm::new(store, &format!("{name}.bn1"), c_in), Conv::new(store, &format!("{name}.conv1"), c_in, mid, 1, 1, rng)),
            (Norm::new(store, &format!("{name}.bn2"), mid), Conv::new(store, &format!("{name}.conv2"), mid, mid, 3, 1, rng)),
            (Norm::new(store, &format!("{name}.bn3"), mid), Conv::new(store, &format!("{name}.conv3"), mid, c_out, 1, 1, rng)),
        ];
        let skip = (c_in != c_out).then(|| Conv::new(store, &format!("{name}.skip"), c_in, c_out, 1, 1, rng));
        Residual { stages, skip }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &mut ParamStore<T>, x: Var, mode: BatchNormMode) -> Result<Var> {
        let mut h = x;
        for (norm, conv) in &self.stages {
            h = norm.forward(tape, store, h, mode)?;
            h = tape.relu(h);
            h = conv.forward(tape, store, h)?;
        }
        let identity = match &self.skip {
            Some(p) => p.forward(tape, store, x)?,
            None => x,
        };
        tape.add(h, identity)
    }
}
