use crate::adversarial::{loss_fake, loss_mse, loss_real, AdversarialState, LossReport};
use crate::error::{contract, Error, Result};
use crate::network::{build_discriminator, build_generator, HourglassNet, NetworkConfig};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::{BatchNormMode, Tape, Tensor, Var};

use super::{RmsProp, TrainConfig};

/// Instrumented stages of one training iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    ForwardDiscriminatorReal,
    DiscriminatorRealGrad,
    ForwardGenerator,
    GeneratorMseGrad,
    ForwardDiscriminatorFake,
    DiscriminatorFakeGrad,
    UpdateDiscriminator,
    GeneratorAdvGrad,
    UpdateGenerator,
    UpdateBalance,
}

/// The adversarial update order; the balance update follows it.
pub const ALGORITHM_STEPS: [Step; 9] = [
    Step::ForwardDiscriminatorReal,
    Step::DiscriminatorRealGrad,
    Step::ForwardGenerator,
    Step::GeneratorMseGrad,
    Step::ForwardDiscriminatorFake,
    Step::DiscriminatorFakeGrad,
    Step::UpdateDiscriminator,
    Step::GeneratorAdvGrad,
    Step::UpdateGenerator,
];

/// `[B,3,R,R]` crops with their `[B,M,r,r]` targets.
#[derive(Clone, Debug)]
pub struct Batch<T> {
    pub images: Tensor<T>,
    pub targets: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct IterationOutcome<T> {
    pub report: LossReport,
    pub steps: Vec<Step>,
    /// Discriminator gradients just before its update, when requested.
    pub discriminator_grads: Option<Vec<Vec<T>>>,
}

/// Generator, optional discriminator, their optimizers and the balance state.
#[derive(Clone, Debug)]
pub struct Trainer<T: Scalar> {
    pub generator: HourglassNet<T>,
    pub discriminator: Option<HourglassNet<T>>,
    pub state: AdversarialState,
    pub opt_g: RmsProp<T>,
    pub opt_d: Option<RmsProp<T>>,
    pub cfg: TrainConfig,
    pub net: NetworkConfig,
    /// Keep a copy of the discriminator gradients of each iteration.
    pub capture_discriminator_grads: bool,
    iteration: u64,
}

/// Stream tags under the master seed.
pub(crate) const TAG_GENERATOR: u64 = 1;
pub(crate) const TAG_DISCRIMINATOR: u64 = 2;

impl<T: Scalar> Trainer<T> {
    /// Fresh networks; the generator's weights depend only on the seed, so
    /// runs with and without a discriminator start from the same generator.
    pub fn new(net: &NetworkConfig, cfg: &TrainConfig) -> Result<Self> {
        net.validate()?;
        cfg.validate()?;
        let root = RngStream::new(cfg.seed);
        let generator = build_generator(net, &mut root.derive(&[TAG_GENERATOR]))?;
        let discriminator = if cfg.adversarial { Some(build_discriminator(net, &mut root.derive(&[TAG_DISCRIMINATOR]))?) } else { None };
        Self::from_networks(generator, discriminator, cfg)
    }

    pub fn from_networks(generator: HourglassNet<T>, discriminator: Option<HourglassNet<T>>, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        contract!(cfg.adversarial == discriminator.is_some(), "adversarial training needs exactly one discriminator");
        let opt = |net: &HourglassNet<T>| RmsProp::new(net.store(), cfg.learning_rate, cfg.rmsprop_decay, cfg.rmsprop_eps);
        Ok(Trainer {
            opt_g: opt(&generator),
            opt_d: discriminator.as_ref().map(opt),
            net: generator.config().clone(),
            generator,
            discriminator,
            state: cfg.adversarial_state()?,
            cfg: cfg.clone(),
            capture_discriminator_grads: false,
            iteration: 0,
        })
    }

    /// Iterations completed so far.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.opt_g.lr = lr;
        if let Some(o) = &mut self.opt_d {
            o.lr = lr;
        }
    }

    fn finite(&self, tape: &Tape<T>, v: Var, name: &str) -> Result<f64> {
        let x = tape.item(v).to_f64_lossy();
        if x.is_finite() {
            Ok(x)
        } else {
            Err(Error::TrainingFault { iteration: self.iteration, what: format!("{name} is {x}") })
        }
    }

    /// One update of both networks and of `k_t` on `batch`.
    pub fn train_iteration(&mut self, batch: &Batch<T>) -> Result<IterationOutcome<T>> {
        let outcome = if self.cfg.adversarial { self.adversarial_iteration(batch) } else { self.supervised_iteration(batch) };
        self.iteration += 1;
        outcome
    }

    fn supervised_iteration(&mut self, batch: &Batch<T>) -> Result<IterationOutcome<T>> {
        let mut steps = Vec::with_capacity(3);
        let mut tape = Tape::new();
        let x = tape.constant(&batch.images);
        let c = tape.constant(&batch.targets);
        steps.push(Step::ForwardGenerator);
        let preds = self.generator.forward_generator(&mut tape, x, BatchNormMode::Train)?;
        let l_mse = loss_mse(&mut tape, &preds, c)?;
        let mse = self.finite(&tape, l_mse, "L_MSE")?;
        steps.push(Step::GeneratorMseGrad);
        tape.backward(l_mse, &mut [self.generator.store_mut()])?;
        steps.push(Step::UpdateGenerator);
        self.opt_g.step(self.generator.store_mut(), self.iteration)?;
        let report = LossReport::new(mse, 0.0, 0.0, 0.0, &self.state);
        Ok(IterationOutcome { report, steps, discriminator_grads: None })
    }

    fn adversarial_iteration(&mut self, batch: &Batch<T>) -> Result<IterationOutcome<T>> {
        let iteration = self.iteration;
        let d = self.discriminator.as_mut().expect("adversarial trainer owns a discriminator");
        let conditional = d.config().conditional;
        let mut steps = Vec::with_capacity(10);
        let mut tape = Tape::new();
        let x = tape.constant(&batch.images);
        let c = tape.constant(&batch.targets);
        let cond = conditional.then_some(x);

        steps.push(Step::ForwardDiscriminatorReal);
        let rec_real = d.forward_discriminator(&mut tape, c, cond, BatchNormMode::Train)?;
        let l_real = loss_real(&mut tape, c, rec_real)?;
        let real = self.finite(&tape, l_real, "L_real")?;

        steps.push(Step::DiscriminatorRealGrad);
        let d = self.discriminator.as_mut().expect("present");
        tape.backward(l_real, &mut [d.store_mut()])?;

        steps.push(Step::ForwardGenerator);
        let preds = self.generator.forward_generator(&mut tape, x, BatchNormMode::Train)?;
        let l_mse = loss_mse(&mut tape, &preds, c)?;
        let mse = self.finite(&tape, l_mse, "L_MSE")?;

        steps.push(Step::GeneratorMseGrad);
        tape.backward(l_mse, &mut [self.generator.store_mut()])?;

        steps.push(Step::ForwardDiscriminatorFake);
        let last = *preds.last().expect("at least one stack");
        let d = self.discriminator.as_mut().expect("present");
        let rec_fake = d.forward_discriminator(&mut tape, last, cond, BatchNormMode::Train)?;
        // L_fake and L_adv share this one forward value; the two backward
        // passes below differ only in which network receives gradients.
        let l_fake = loss_fake(&mut tape, last, rec_fake)?;
        let fake = self.finite(&tape, l_fake, "L_fake")?;

        steps.push(Step::DiscriminatorFakeGrad);
        let k = T::of(self.state.k_t);
        let d = self.discriminator.as_mut().expect("present");
        tape.backward_scaled(l_fake, -k, &mut [d.store_mut()])?;
        let discriminator_grads = self.capture_discriminator_grads.then(|| {
            d.store()
                .iter()
                .filter(|(_, _, t)| t.requires_grad())
                .map(|(_, _, t)| t.grad().map_or_else(|| vec![T::zero(); t.len()], <[T]>::to_vec))
                .collect()
        });

        if self.cfg.update_discriminator {
            steps.push(Step::UpdateDiscriminator);
            self.opt_d.as_mut().expect("present").step(d.store_mut(), iteration)?;
        } else {
            d.store_mut().zero_grads();
        }

        steps.push(Step::GeneratorAdvGrad);
        tape.backward_scaled(l_fake, T::of(self.state.lambda_g), &mut [self.generator.store_mut()])?;

        steps.push(Step::UpdateGenerator);
        self.opt_g.step(self.generator.store_mut(), iteration)?;

        let report = LossReport::new(mse, fake, real, fake, &self.state);
        if !self.cfg.freeze_kt {
            steps.push(Step::UpdateBalance);
            self.state.update_kt(real, fake)?;
        }
        Ok(IterationOutcome { report, steps, discriminator_grads })
    }
}
