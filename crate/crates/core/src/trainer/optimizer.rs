use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::ParamStore;

/// One RMSprop update of `params` in place:
/// `acc <- rho*acc + (1-rho)*g^2`, `p <- p - lr*g/(sqrt(acc)+eps)`.
pub fn rmsprop_update<T: Scalar>(params: &mut [T], grads: &[T], acc: &mut [T], lr: T, rho: T, eps: T) {
    let keep = T::one() - rho;
    for ((p, &g), a) in params.iter_mut().zip(grads).zip(acc.iter_mut()) {
        *a = rho * *a + keep * g * g;
        *p -= lr * g / (a.sqrt() + eps);
    }
}

/// RMSprop over every trainable tensor of one parameter store.
#[derive(Clone, Debug)]
pub struct RmsProp<T> {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
    acc: Vec<Vec<T>>,
}

impl<T: Scalar> RmsProp<T> {
    pub fn new(store: &ParamStore<T>, lr: f64, rho: f64, eps: f64) -> Self {
        let acc = store.iter().map(|(_, _, t)| if t.requires_grad() { vec![T::zero(); t.len()] } else { Vec::new() }).collect();
        RmsProp { lr, rho, eps, acc }
    }

    /// Squared-gradient accumulators in store order (empty for frozen tensors).
    pub fn accumulators(&self) -> &[Vec<T>] {
        &self.acc
    }

    /// Applies and clears the accumulated gradients. Nothing is changed
    /// when any gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore<T>, iteration: u64) -> Result<()> {
        for (_, name, t) in store.iter() {
            if let Some(g) = t.grad() {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::TrainingFault { iteration, what: format!("non-finite gradient in {name}") });
                }
            }
        }
        let (lr, rho, eps) = (T::of(self.lr), T::of(self.rho), T::of(self.eps));
        for ((_, _, t), acc) in store.iter_mut().zip(self.acc.iter_mut()) {
            if let Some(g) = t.take_grad() {
                rmsprop_update(t.values_mut(), &g, acc, lr, rho, eps);
            }
        }
        Ok(())
    }
}
