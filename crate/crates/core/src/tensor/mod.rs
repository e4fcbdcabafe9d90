//! Dense tensors, parameter stores and the define-by-run gradient tape.

mod conv;
pub mod gradcheck;
mod tape;

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{contract, Result};
use crate::rng::RngStream;
use crate::scalar::Scalar;

pub use tape::{BatchNormMode, Tape, Var};

/// Dense row-major array with an optional gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    values: Vec<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: &[usize], values: Vec<T>) -> Result<Self> {
        contract!(shape.iter().all(|&d| d > 0), "shape {shape:?} has a zero extent");
        contract!(
            numel(shape) == values.len(),
            "shape {shape:?} needs {} values, got {}",
            numel(shape),
            values.len()
        );
        Ok(Tensor { shape: shape.to_vec(), values, requires_grad: false, grad: None })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        Tensor { shape: shape.to_vec(), values: vec![v; numel(shape)], requires_grad: false, grad: None }
    }

    pub fn scalar(v: T) -> Self {
        Tensor { shape: Vec::new(), values: vec![v], requires_grad: false, grad: None }
    }

    /// Entries drawn i.i.d. from `N(0, std^2)`.
    pub fn randn(shape: &[usize], std: f64, rng: &mut RngStream) -> Self {
        let values = (0..numel(shape)).map(|_| T::of(rng.normal() * std)).collect();
        Tensor { shape: shape.to_vec(), values, requires_grad: false, grad: None }
    }

    /// Entries drawn uniformly from `[lo, hi)`.
    pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut RngStream) -> Self {
        let values = (0..numel(shape)).map(|_| T::of(rng.uniform(lo, hi))).collect();
        Tensor { shape: shape.to_vec(), values, requires_grad: false, grad: None }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, on: bool) {
        self.requires_grad = on;
        if !on {
            self.grad = None;
        }
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Removes and returns the gradient buffer.
    pub fn take_grad(&mut self) -> Option<Vec<T>> {
        self.grad.take()
    }

    /// Adds `g` into the gradient buffer. Ignored when gradients are off.
    pub fn accumulate_grad(&mut self, g: &[T]) {
        if !self.requires_grad {
            return;
        }
        debug_assert_eq!(g.len(), self.values.len());
        match &mut self.grad {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a += b),
            None => self.grad = Some(g.to_vec()),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        contract!(numel(shape) == self.values.len(), "cannot reshape {:?} to {shape:?}", self.shape);
        self.shape = shape.to_vec();
        if let Some(g) = &self.grad {
            debug_assert_eq!(g.len(), self.values.len());
        }
        Ok(self)
    }

    pub fn item(&self) -> T {
        self.values[0]
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Element at a 4-D NCHW index.
    pub fn at4(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        let [_, cs, hs, ws] = dims4(&self.shape);
        self.values[((n * cs + c) * hs + y) * ws + x]
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor<T>]) -> Result<Self> {
        contract!(!items.is_empty(), "stack of zero tensors");
        let inner = items[0].shape.clone();
        contract!(items.iter().all(|t| t.shape == inner), "stack of mismatched shapes");
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&inner);
        let mut values = Vec::with_capacity(numel(&shape));
        for t in items {
            values.extend_from_slice(&t.values);
        }
        Tensor::from_vec(&shape, values)
    }

    /// Slice `i` along the leading axis.
    pub fn index0(&self, i: usize) -> Result<Self> {
        contract!(!self.shape.is_empty() && i < self.shape[0], "index {i} out of range for {:?}", self.shape);
        let inner = &self.shape[1..];
        let n = numel(inner);
        let shape = if inner.is_empty() { vec![1] } else { inner.to_vec() };
        Tensor::from_vec(&shape, self.values[i * n..(i + 1) * n].to_vec())
    }
}

pub(crate) fn dims4(shape: &[usize]) -> [usize; 4] {
    assert_eq!(shape.len(), 4, "expected a 4-D tensor, got {shape:?}");
    [shape[0], shape[1], shape[2], shape[3]]
}

static NEXT_STORE: AtomicU64 = AtomicU64::new(1);

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named collection of tensors owned by one network.
///
/// Trainable parameters have `requires_grad` set; running statistics live in
/// the same store without gradients so that a checkpoint is one flat list.
#[derive(Debug)]
pub struct ParamStore<T> {
    id: u64,
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Clone for ParamStore<T> {
    fn clone(&self) -> Self {
        ParamStore { id: NEXT_STORE.fetch_add(1, Ordering::Relaxed), names: self.names.clone(), tensors: self.tensors.clone() }
    }
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { id: NEXT_STORE.fetch_add(1, Ordering::Relaxed), names: Vec::new(), tensors: Vec::new() }
    }

    pub(crate) fn id(&self) -> u64 {
        self.id
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<T>)> {
        self.tensors.iter().enumerate().map(|(i, t)| (ParamId(i), self.names[i].as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &str, &mut Tensor<T>)> {
        let names = &self.names;
        self.tensors.iter_mut().enumerate().map(move |(i, t)| (ParamId(i), names[i].as_str(), t))
    }

    pub fn zero_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Total element count of trainable tensors.
    pub fn trainable_count(&self) -> usize {
        self.tensors.iter().filter(|t| t.requires_grad).map(Tensor::len).sum()
    }

    /// Splits off the slot for the running statistics of a normalization layer.
    pub(crate) fn pair_mut(&mut self, a: ParamId, b: ParamId) -> (&mut Tensor<T>, &mut Tensor<T>) {
        assert!(a.0 < b.0, "pair_mut expects ascending ids");
        let (lo, hi) = self.tensors.split_at_mut(b.0);
        (&mut lo[a.0], &mut hi[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_values() {
        assert!(Tensor::<f64>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f64>::from_vec(&[2, 0], vec![]).is_err());
        let t = Tensor::<f64>::from_vec(&[2, 3], vec![0.0; 6]).unwrap();
        assert_eq!(t.len(), 6);
    }

    #[test]
    fn grad_is_dropped_without_requires_grad() {
        let mut t = Tensor::<f64>::zeros(&[3]);
        t.accumulate_grad(&[1.0, 1.0, 1.0]);
        assert!(t.grad().is_none());
        let mut t = t.with_grad();
        t.accumulate_grad(&[1.0, 2.0, 3.0]);
        t.accumulate_grad(&[1.0, 2.0, 3.0]);
        assert_eq!(t.grad().unwrap(), &[2.0, 4.0, 6.0]);
        t.set_requires_grad(false);
        assert!(t.grad().is_none());
    }

    #[test]
    fn stack_and_index_round_trip() {
        let a = Tensor::<f64>::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::<f64>::from_vec(&[2], vec![3.0, 4.0]).unwrap();
        let s = Tensor::stack(&[a.clone(), b]).unwrap();
        assert_eq!(s.shape(), &[2, 2]);
        assert_eq!(s.index0(0).unwrap(), a);
    }

    #[test]
    fn cloned_store_has_fresh_identity() {
        let mut s = ParamStore::<f64>::new();
        s.insert("w", Tensor::zeros(&[1]));
        let c = s.clone();
        assert_ne!(s.id(), c.id());
        assert_eq!(c.name(ParamId(0)), "w");
    }
}
