//! Supervised and adversarial losses and the adaptive balance controller.
//!
//! All losses sum squared differences over joints and pixels and average
//! over the batch.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Tape, Var};

/// Balance term `k_t` and the weights that steer it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversarialState {
    pub k_t: f64,
    pub lambda_k: f64,
    pub gamma: f64,
    pub lambda_g: f64,
}

impl Default for AdversarialState {
    fn default() -> Self {
        AdversarialState { k_t: 0.0, lambda_k: 0.001, gamma: 0.5, lambda_g: 0.01 }
    }
}

impl AdversarialState {
    pub fn new(k0: f64, lambda_k: f64, gamma: f64, lambda_g: f64) -> Result<Self> {
        contract!((0.0..=1.0).contains(&k0), "k_0 must lie in [0,1], got {k0}");
        contract!(lambda_k > 0.0 && lambda_k.is_finite(), "lambda_k must be positive, got {lambda_k}");
        contract!(gamma > 0.0 && gamma <= 1.0, "gamma must lie in (0,1], got {gamma}");
        contract!(lambda_g >= 0.0 && lambda_g.is_finite(), "lambda_G must be non-negative, got {lambda_g}");
        Ok(AdversarialState { k_t: k0, lambda_k, gamma, lambda_g })
    }

    /// `k <- clamp(k + lambda_k * (gamma * L_real - L_fake), 0, 1)`.
    pub fn update_kt(&mut self, l_real: f64, l_fake: f64) -> Result<()> {
        if !l_real.is_finite() || !l_fake.is_finite() {
            return Err(Error::ControllerFault { real: l_real, fake: l_fake });
        }
        contract!(l_real >= 0.0 && l_fake >= 0.0, "controller losses must be non-negative");
        self.k_t = (self.k_t + self.lambda_k * (self.gamma * l_real - l_fake)).clamp(0.0, 1.0);
        Ok(())
    }
}

/// `L_real + |gamma * L_real - L_fake|`.
pub fn convergence_measure(l_real: f64, l_fake: f64, gamma: f64) -> f64 {
    l_real + (gamma * l_real - l_fake).abs()
}

/// Loss values of one iteration together with the `k_t` used for `L_D`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_mse: f64,
    pub l_adv: f64,
    pub l_g: f64,
    pub l_real: f64,
    pub l_fake: f64,
    pub l_d: f64,
    pub convergence: f64,
    pub k_t: f64,
}

impl LossReport {
    /// Fills in the derived totals from the four primary losses.
    pub fn new(l_mse: f64, l_adv: f64, l_real: f64, l_fake: f64, state: &AdversarialState) -> Self {
        LossReport {
            l_mse,
            l_adv,
            l_g: l_mse + state.lambda_g * l_adv,
            l_real,
            l_fake,
            l_d: l_real - state.k_t * l_fake,
            convergence: convergence_measure(l_real, l_fake, state.gamma),
            k_t: state.k_t,
        }
    }
}

fn inv_batch<T: Scalar>(tape: &Tape<T>, v: Var) -> Result<T> {
    let s = tape.shape(v);
    contract!(s.len() == 4, "losses take [B,M,r,r] heatmaps, got {s:?}");
    Ok(T::one() / T::of(s[0] as f64))
}

/// Squared error of every stack's prediction against the same target.
pub fn loss_mse<T: Scalar>(tape: &mut Tape<T>, preds: &[Var], target: Var) -> Result<Var> {
    contract!(!preds.is_empty(), "loss_mse needs at least one prediction");
    let w = inv_batch(tape, target)?;
    let mut terms = Vec::with_capacity(preds.len());
    for &p in preds {
        terms.push((tape.mse_sum(p, target)?, w));
    }
    tape.weighted_sum(&terms)
}

/// Squared error between heatmaps and their reconstruction by the
/// discriminator.
pub fn reconstruction_loss<T: Scalar>(tape: &mut Tape<T>, heatmaps: Var, reconstruction: Var) -> Result<Var> {
    let w = inv_batch(tape, heatmaps)?;
    let s = tape.mse_sum(heatmaps, reconstruction)?;
    Ok(tape.scale(s, w))
}

/// Generator-side adversarial loss on the last stack's heatmaps.
pub fn loss_adv<T: Scalar>(tape: &mut Tape<T>, last_pred: Var, reconstruction: Var) -> Result<Var> {
    reconstruction_loss(tape, last_pred, reconstruction)
}

/// Discriminator reconstruction error on ground-truth heatmaps.
pub fn loss_real<T: Scalar>(tape: &mut Tape<T>, target: Var, reconstruction: Var) -> Result<Var> {
    reconstruction_loss(tape, target, reconstruction)
}

/// Discriminator reconstruction error on generated heatmaps; the caller
/// detaches them from the generator.
pub fn loss_fake<T: Scalar>(tape: &mut Tape<T>, generated: Var, reconstruction: Var) -> Result<Var> {
    reconstruction_loss(tape, generated, reconstruction)
}

/// `L_MSE + lambda_G * L_adv`.
pub fn loss_generator_total<T: Scalar>(tape: &mut Tape<T>, l_mse: Var, l_adv: Var, state: &AdversarialState) -> Result<Var> {
    tape.weighted_sum(&[(l_mse, T::one()), (l_adv, T::of(state.lambda_g))])
}

/// `L_real - k_t * L_fake`.
pub fn loss_discriminator<T: Scalar>(tape: &mut Tape<T>, l_real: Var, l_fake: Var, state: &AdversarialState) -> Result<Var> {
    tape.weighted_sum(&[(l_real, T::one()), (l_fake, T::of(-state.k_t))])
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::rng::RngStream;
    use crate::tensor::Tensor;

    fn scalar_vars(tape: &mut Tape<f64>, a: f64, b: f64) -> (Var, Var) {
        (tape.input(&Tensor::scalar(a).with_grad()), tape.input(&Tensor::scalar(b).with_grad()))
    }

    fn elementwise_sq(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    #[test]
    fn mse_zero_and_small_example() {
        let mut tape = Tape::new();
        let t = Tensor::full(&[1, 1, 2, 2], 0.5);
        let tv = tape.constant(&t);
        let zero = loss_mse(&mut tape, &[tv, tv], tv).unwrap();
        assert_eq!(tape.item(zero), 0.0);
        let p = tape.constant(&Tensor::full(&[1, 1, 2, 2], 1.5));
        let l = loss_mse(&mut tape, &[p, p], tv).unwrap();
        assert_eq!(tape.item(l), 8.0);
    }

    #[test]
    fn mse_rejects_mismatch() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(&Tensor::zeros(&[1, 2, 4, 4]));
        let b = tape.constant(&Tensor::zeros(&[1, 2, 4, 2]));
        assert!(loss_mse(&mut tape, &[a], b).is_err());
        assert!(loss_adv(&mut tape, a, b).is_err());
        assert!(loss_mse(&mut tape, &[], a).is_err());
    }

    #[test]
    fn mse_matches_elementwise_oracle() {
        let mut rng = RngStream::new(4);
        let target = Tensor::<f64>::uniform(&[3, 2, 5, 5], 0.0, 1.0, &mut rng);
        let preds: Vec<_> = (0..3).map(|_| Tensor::<f64>::uniform(&[3, 2, 5, 5], -1.0, 1.0, &mut rng)).collect();
        let mut tape = Tape::new();
        let tv = tape.constant(&target);
        let pv: Vec<_> = preds.iter().map(|p| tape.constant(p)).collect();
        let l = loss_mse(&mut tape, &pv, tv).unwrap();
        let want: f64 = preds.iter().map(|p| elementwise_sq(p.values(), target.values())).sum::<f64>() / 3.0;
        assert!((tape.item(l) - want).abs() < 1e-12);
    }

    #[test]
    fn adv_zero_equals_fake_and_oracle() {
        let mut rng = RngStream::new(5);
        let a = Tensor::<f64>::uniform(&[2, 3, 4, 4], 0.0, 1.0, &mut rng);
        let b = Tensor::<f64>::uniform(&[2, 3, 4, 4], 0.0, 1.0, &mut rng);
        let mut tape = Tape::new();
        let (av, bv) = (tape.constant(&a), tape.constant(&b));
        let same = loss_adv(&mut tape, av, av).unwrap();
        assert_eq!(tape.item(same), 0.0);
        let adv = loss_adv(&mut tape, av, bv).unwrap();
        let fake = loss_fake(&mut tape, av, bv).unwrap();
        assert_eq!(tape.item(adv), tape.item(fake));
        assert!((tape.item(adv) - elementwise_sq(a.values(), b.values()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn totals_examples() {
        let mut tape = Tape::new();
        let (m, a) = scalar_vars(&mut tape, 2.0, 3.0);
        let st = AdversarialState { lambda_g: 0.0, ..Default::default() };
        let g = loss_generator_total(&mut tape, m, a, &st).unwrap();
        assert_eq!(tape.item(g), 2.0);
        let st = AdversarialState { lambda_g: 1.0, ..Default::default() };
        let g = loss_generator_total(&mut tape, m, a, &st).unwrap();
        assert_eq!(tape.item(g), 5.0);
        let d = loss_discriminator(&mut tape, m, a, &AdversarialState::default()).unwrap();
        assert_eq!(tape.item(d), 2.0);
        let st = AdversarialState { k_t: 1.0, ..Default::default() };
        let d = loss_discriminator(&mut tape, m, m, &st).unwrap();
        assert_eq!(tape.item(d), 0.0);
    }

    #[test]
    fn coupling_derivatives() {
        let mut tape = Tape::new();
        let (m, a) = scalar_vars(&mut tape, 0.7, 1.9);
        let st = AdversarialState { k_t: 0.3, lambda_g: 0.02, ..Default::default() };
        let g = loss_generator_total(&mut tape, m, a, &st).unwrap();
        let d = loss_discriminator(&mut tape, m, a, &st).unwrap();
        assert_eq!(tape.gradient(g, &[a]).unwrap()[0][0], 0.02);
        assert_eq!(tape.gradient(d, &[a]).unwrap()[0][0], -0.3);
    }

    #[test]
    fn adv_decreases_with_agreement() {
        let mut prev = f64::INFINITY;
        for gap in [1.0, 0.5, 0.25, 0.1, 0.0] {
            let mut tape = Tape::new();
            let a = tape.constant(&Tensor::full(&[1, 1, 1, 1], 0.8));
            let b = tape.constant(&Tensor::full(&[1, 1, 1, 1], 0.8 - gap));
            let l = loss_adv(&mut tape, a, b).unwrap();
            assert!(tape.item(l) < prev);
            prev = tape.item(l);
        }
    }

    #[test]
    fn update_examples() {
        let mut s = AdversarialState::default();
        s.update_kt(1.0, 0.2).unwrap();
        assert!((s.k_t - 0.0003).abs() < 1e-15);
        let mut s = AdversarialState { k_t: 1.0, ..Default::default() };
        s.update_kt(20.0, 0.0).unwrap();
        assert_eq!(s.k_t, 1.0);
        let mut s = AdversarialState::default();
        s.update_kt(0.0, 10.0).unwrap();
        assert_eq!(s.k_t, 0.0);
    }

    #[test]
    fn update_rejects_non_finite() {
        let mut s = AdversarialState::default();
        assert!(matches!(s.update_kt(f64::NAN, 1.0), Err(Error::ControllerFault { .. })));
        assert!(matches!(s.update_kt(1.0, f64::INFINITY), Err(Error::ControllerFault { .. })));
        assert!(s.update_kt(-1.0, 1.0).is_err());
        assert_eq!(s.k_t, 0.0);
    }

    #[test]
    fn state_validation() {
        assert!(AdversarialState::new(1.5, 0.001, 0.5, 0.01).is_err());
        assert!(AdversarialState::new(0.0, 0.0, 0.5, 0.01).is_err());
        assert!(AdversarialState::new(0.0, 0.001, 0.0, 0.01).is_err());
        assert!(AdversarialState::new(0.0, 0.001, 1.0, -1.0).is_err());
        assert_eq!(AdversarialState::new(0.0, 0.001, 0.5, 0.01).unwrap(), AdversarialState::default());
    }

    #[test]
    fn convergence_examples() {
        assert_eq!(convergence_measure(0.0, 0.0, 0.5), 0.0);
        assert_eq!(convergence_measure(3.0, 3.0, 1.0), 3.0);
    }

    proptest! {
        #[test]
        fn kt_stays_bounded(seed in any::<u64>(), lambda_k in 1e-4f64..1.0, gamma in 0.01f64..=1.0) {
            let mut rng = RngStream::new(seed);
            let mut s = AdversarialState::new(rng.uniform(0.0, 1.0), lambda_k, gamma, 0.01).unwrap();
            for _ in 0..10_000 {
                let scale = 10f64.powf(rng.uniform(-3.0, 3.0));
                s.update_kt(rng.uniform(0.0, scale), rng.uniform(0.0, scale)).unwrap();
                prop_assert!((0.0..=1.0).contains(&s.k_t));
            }
        }

        #[test]
        fn fixed_point_is_identity(k in 0.0f64..=1.0, real in 0.0f64..100.0, gamma in 0.01f64..=1.0) {
            let mut s = AdversarialState::new(k, 0.001, gamma, 0.01).unwrap();
            s.update_kt(real, gamma * real).unwrap();
            prop_assert!((s.k_t - k).abs() <= 1e-15);
        }

        #[test]
        fn report_invariants(m in 0.0f64..10.0, a in 0.0f64..10.0, r in 0.0f64..10.0, f in 0.0f64..10.0,
                             k in 0.0f64..=1.0, lg in 0.0f64..1.0, gamma in 0.01f64..=1.0) {
            let st = AdversarialState::new(k, 0.001, gamma, lg).unwrap();
            let rep = LossReport::new(m, a, r, f, &st);
            let mut tape = Tape::new();
            let (mv, av) = scalar_vars(&mut tape, m, a);
            let (rv, fv) = scalar_vars(&mut tape, r, f);
            let g = loss_generator_total(&mut tape, mv, av, &st).unwrap();
            let d = loss_discriminator(&mut tape, rv, fv, &st).unwrap();
            prop_assert!((tape.item(g) - (m + lg * a)).abs() <= 1e-12);
            prop_assert!((rep.l_g - tape.item(g)).abs() <= 1e-12);
            prop_assert!((tape.item(d) - (r - k * f)).abs() <= 1e-12);
            prop_assert!((rep.l_d - tape.item(d)).abs() <= 1e-12);
            prop_assert!((rep.convergence - (r + (gamma * r - f).abs())).abs() <= 1e-12);
            prop_assert!(rep.convergence >= 0.0);
        }
    }
}
