//! Central finite-difference verification of tape gradients.

use super::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{contract, Result};
use crate::scalar::Scalar;

/// Worst relative disagreement between the tape gradient of `f` at `x` and a
/// central difference with step `h`, measured per element as
/// `|analytic - numeric| / max(1, |analytic|)`.
pub fn grad_check<T, F>(mut f: F, x: &Tensor<T>, h: f64) -> Result<f64>
where
    T: Scalar,
    F: FnMut(&mut Tape<T>, Var) -> Result<Var>,
{
    contract!((1e-6..=1e-3).contains(&h), "finite-difference step {h} outside [1e-6, 1e-3]");
    let probe = x.clone().with_grad();
    let mut tape = Tape::new();
    let xv = tape.input(&probe);
    let loss = f(&mut tape, xv)?;
    let analytic = tape.gradient(loss, &[xv])?.remove(0);

    let mut eval = |values: Vec<T>| -> Result<f64> {
        let t = Tensor::from_vec(x.shape(), values)?;
        let mut tape = Tape::new();
        let v = tape.input(&t);
        let out = f(&mut tape, v)?;
        Ok(tape.item(out).to_f64_lossy())
    };
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut plus = x.values().to_vec();
        let mut minus = x.values().to_vec();
        plus[i] += T::of(h);
        minus[i] -= T::of(h);
        // Divide by the step actually taken after rounding.
        let span = (plus[i] - minus[i]).to_f64_lossy();
        let numeric = (eval(plus)? - eval(minus)?) / span;
        worst = worst.max(relative_error(analytic[i].to_f64_lossy(), numeric));
    }
    Ok(worst)
}

/// Finite-difference check over trainable tensors of a store.
///
/// `select` chooses the tensors to probe and every `stride`-th element of a
/// chosen tensor is perturbed.
pub fn grad_check_store<T, F>(
    mut f: F,
    store: &mut ParamStore<T>,
    h: f64,
    select: &dyn Fn(ParamId, &str) -> bool,
    stride: usize,
) -> Result<f64>
where
    T: Scalar,
    F: FnMut(&mut Tape<T>, &mut ParamStore<T>) -> Result<Var>,
{
    contract!((1e-6..=1e-3).contains(&h), "finite-difference step {h} outside [1e-6, 1e-3]");
    contract!(stride >= 1, "stride must be positive");
    store.zero_grads();
    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    tape.backward(loss, &mut [&mut *store])?;
    let targets: Vec<ParamId> = store
        .iter()
        .filter(|(id, name, t)| t.requires_grad() && select(*id, name))
        .map(|(id, _, _)| id)
        .collect();
    let mut worst = 0.0f64;
    for id in targets {
        let analytic = store.get(id).grad().map(<[T]>::to_vec).unwrap_or_else(|| vec![T::zero(); store.get(id).len()]);
        for i in (0..analytic.len()).step_by(stride) {
            let orig = store.get(id).values()[i];
            let mut at = |v: T, store: &mut ParamStore<T>| -> Result<f64> {
                store.get_mut(id).values_mut()[i] = v;
                let mut tape = Tape::new();
                let out = f(&mut tape, store)?;
                Ok(tape.item(out).to_f64_lossy())
            };
            let (hi, lo) = (orig + T::of(h), orig - T::of(h));
            let up = at(hi, store)?;
            let down = at(lo, store)?;
            store.get_mut(id).values_mut()[i] = orig;
            let numeric = (up - down) / (hi - lo).to_f64_lossy();
            worst = worst.max(relative_error(analytic[i].to_f64_lossy(), numeric));
        }
    }
    store.zero_grads();
    Ok(worst)
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}
