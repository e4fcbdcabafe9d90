use serde::{Deserialize, Serialize};

use crate::adversarial::AdversarialState;
use crate::error::{Error, Result};

/// Optimization, augmentation and scheduling settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_eps: f64,
    /// From this epoch (0-based) on the learning rate is scaled by
    /// `lr_decay_factor`.
    pub lr_decay_epoch: Option<usize>,
    pub lr_decay_factor: f64,
    pub flip_prob: f64,
    /// Rotations are drawn from `[-max_rotation, max_rotation]` degrees.
    pub max_rotation: f64,
    pub scale_range: [f64; 2],
    /// Gaussian width in heatmap pixels; derived from the heatmap size when unset.
    pub sigma: Option<f64>,
    pub seed: u64,
    /// Off: supervised loss only, no discriminator.
    pub adversarial: bool,
    pub update_discriminator: bool,
    pub freeze_kt: bool,
    pub k0: f64,
    pub lambda_k: f64,
    pub gamma: f64,
    pub lambda_g: f64,
    /// Stop after this many epochs without a held-out improvement.
    pub patience: Option<usize>,
    /// PCK threshold of the per-epoch held-out evaluation.
    pub eval_threshold: f64,
    /// Off: the `wall_ms` log column is written as 0 so reruns compare byte for byte.
    pub record_wall_clock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adv = AdversarialState::default();
        TrainConfig {
            batch_size: 6,
            epochs: 40,
            learning_rate: 2.5e-4,
            rmsprop_decay: 0.99,
            rmsprop_eps: 1e-8,
            lr_decay_epoch: Some(60),
            lr_decay_factor: 0.1,
            flip_prob: 0.5,
            max_rotation: 30.0,
            scale_range: [0.75, 1.25],
            sigma: None,
            seed: 0,
            adversarial: true,
            update_discriminator: true,
            freeze_kt: false,
            k0: adv.k_t,
            lambda_k: adv.lambda_k,
            gamma: adv.gamma,
            lambda_g: adv.lambda_g,
            patience: None,
            eval_threshold: 0.2,
            record_wall_clock: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1".into());
        }
        if self.epochs < 1 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be non-negative", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.rmsprop_decay) || !(self.rmsprop_eps >= 0.0) {
            return bad("rmsprop_decay must lie in [0,1) and rmsprop_eps must be non-negative".into());
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor.is_finite()) {
            return bad(format!("lr_decay_factor {} must be positive", self.lr_decay_factor));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return bad(format!("flip_prob {} must lie in [0,1]", self.flip_prob));
        }
        if !(0.0..=180.0).contains(&self.max_rotation) {
            return bad(format!("max_rotation {} must lie in [0,180]", self.max_rotation));
        }
        let [lo, hi] = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("scale_range {:?} must be positive and ordered", self.scale_range));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("sigma {s} must be positive"));
            }
        }
        if !(self.eval_threshold > 0.0 && self.eval_threshold <= 1.0) {
            return bad(format!("eval_threshold {} must lie in (0,1]", self.eval_threshold));
        }
        self.adversarial_state().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn adversarial_state(&self) -> Result<AdversarialState> {
        AdversarialState::new(self.k0, self.lambda_k, self.gamma, self.lambda_g)
    }

    /// Learning rate in effect during `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_decay_epoch {
            Some(e) if epoch >= e => self.learning_rate * self.lr_decay_factor,
            _ => self.learning_rate,
        }
    }
}
