//! Finite-difference verification suite over every differentiable operation
//! and a small end-to-end generator/discriminator loss.

use serde::{Deserialize, Serialize};

use crate::adversarial::{loss_adv, loss_discriminator, loss_fake, loss_generator_total, loss_mse, loss_real, AdversarialState};
use crate::error::{contract, Result};
use crate::network::{build_discriminator, build_generator, HourglassNet, NetworkConfig};
use crate::rng::RngStream;
use crate::tensor::gradcheck::{grad_check, grad_check_store};
use crate::tensor::{BatchNormMode, ParamStore, Tape, Tensor, Var};

/// Settings of [`GradSuite::standard`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradSuiteConfig {
    pub seed: u64,
    /// Central-difference half step.
    pub step: f64,
    /// Joints of the end-to-end model.
    pub num_joints: usize,
    /// Side of the end-to-end input crop.
    pub input_res: usize,
    pub base_channels: usize,
    pub hourglass_depth: usize,
    /// Every `param_stride`-th element of each network tensor is probed.
    pub param_stride: usize,
}

impl Default for GradSuiteConfig {
    fn default() -> Self {
        GradSuiteConfig { seed: 0, step: 1e-6, num_joints: 4, input_res: 32, base_channels: 8, hourglass_depth: 1, param_stride: 1 }
    }
}

/// Worst relative error of one check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckOutcome {
    pub name: String,
    pub error: f64,
}

impl GradCheckOutcome {
    pub fn passes(&self, tol: f64) -> bool {
        self.error < tol
    }
}

type Case = Box<dyn FnMut() -> Result<f64>>;

/// Named finite-difference checks run in insertion order.
pub struct GradSuite {
    cases: Vec<(String, Case)>,
}

impl GradSuite {
    pub fn empty() -> Self {
        GradSuite { cases: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, case: impl FnMut() -> Result<f64> + 'static) {
        self.cases.push((name.into(), Box::new(case)));
    }

    pub fn names(&self) -> Vec<&str> {
        self.cases.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Per-operation checks followed by the end-to-end losses of both networks.
    pub fn standard(cfg: &GradSuiteConfig) -> Result<Self> {
        contract!(cfg.param_stride >= 1, "param_stride must be positive");
        let net = NetworkConfig {
            num_stacks: 1,
            num_joints: cfg.num_joints,
            input_res: cfg.input_res,
            heatmap_res: cfg.input_res / 4,
            base_channels: cfg.base_channels,
            hourglass_depth: cfg.hourglass_depth,
            conditional: true,
            discriminator_stacks: 1,
        };
        net.validate()?;
        let mut suite = GradSuite::empty();
        suite.add_operations(cfg.seed, cfg.step);
        suite.add_end_to_end(&net, cfg)?;
        Ok(suite)
    }

    pub fn run(self) -> Result<Vec<GradCheckOutcome>> {
        self.cases
            .into_iter()
            .map(|(name, mut case)| Ok(GradCheckOutcome { error: case()?, name }))
            .collect()
    }

    fn add_operations(&mut self, seed: u64, h: f64) {
        let rand = move |shape: &[usize], k: u64| Tensor::<f64>::uniform(shape, -1.0, 1.0, &mut RngStream::new(seed).derive(&[k]));
        let x = rand(&[2, 3, 6, 6], 1);
        let other = rand(&[2, 3, 6, 6], 2);
        let extra = rand(&[2, 2, 6, 6], 3);
        let w = rand(&[4, 3, 3, 3], 4);
        let b = rand(&[4], 5);
        let mix = move |tape: &mut Tape<f64>, y: Var| -> Result<Var> {
            let r = rand(tape.shape(y), 99);
            let rv = tape.constant(&r);
            let zero = tape.constant(&Tensor::zeros(tape.shape(y)));
            let s = tape.add(y, rv)?;
            tape.mse_sum(s, zero)
        };

        for (label, stride, pad) in [("conv2d", 1, 1), ("conv2d.strided", 2, 1)] {
            let (xc, wc, bc) = (x.clone(), w.clone(), b.clone());
            self.push(format!("{label}.input"), move || {
                grad_check(|t, v| { let (wv, bv) = (t.constant(&wc), t.constant(&bc)); let y = t.conv2d(v, wv, bv, stride, pad)?; mix(t, y) }, &xc, h)
            });
            let (xc, wc, bc) = (x.clone(), w.clone(), b.clone());
            self.push(format!("{label}.weight"), move || {
                grad_check(|t, v| { let (xv, bv) = (t.constant(&xc), t.constant(&bc)); let y = t.conv2d(xv, v, bv, stride, pad)?; mix(t, y) }, &wc, h)
            });
            let (xc, wc, bc) = (x.clone(), w.clone(), b.clone());
            self.push(format!("{label}.bias"), move || {
                grad_check(|t, v| { let (xv, wv) = (t.constant(&xc), t.constant(&wc)); let y = t.conv2d(xv, wv, v, stride, pad)?; mix(t, y) }, &bc, h)
            });
        }

        let unary: Vec<(&str, fn(&mut Tape<f64>, Var) -> Result<Var>)> = vec![
            ("relu", |t, v| Ok(t.relu(v))),
            ("maxpool2d", |t, v| t.maxpool2d(v, 2, 2)),
            ("upsample_nearest2x", |t, v| t.upsample_nearest2x(v)),
            ("resize_bilinear.down", |t, v| t.resize_bilinear(v, 4, 5)),
            ("resize_bilinear.up", |t, v| t.resize_bilinear(v, 9, 7)),
            ("sum", |t, v| { let s = t.sum(v); Ok(t.scale(s, 0.7)) }),
            ("scale", |t, v| Ok(t.scale(v, -1.3))),
        ];
        for (name, op) in unary {
            let xc = x.clone();
            self.push(name, move || grad_check(|t, v| { let y = op(t, v)?; mix(t, y) }, &xc, h));
        }

        let (xc, oc) = (x.clone(), other.clone());
        self.push("add", move || grad_check(|t, v| { let o = t.constant(&oc); let y = t.add(o, v)?; mix(t, y) }, &xc, h));
        let (xc, ec) = (x.clone(), extra.clone());
        self.push("concat_channels", move || {
            grad_check(|t, v| { let e = t.constant(&ec); let y = t.concat_channels(e, v)?; mix(t, y) }, &xc, h)
        });
        let (xc, oc) = (x.clone(), other.clone());
        self.push("mse_sum", move || grad_check(|t, v| { let o = t.constant(&oc); t.mse_sum(o, v) }, &xc, h));
        let (xc, oc) = (x.clone(), other.clone());
        self.push("weighted_sum", move || {
            grad_check(|t, v| { let o = t.constant(&oc); let y = t.weighted_sum(&[(v, 0.3), (o, -2.0), (v, 1.5)])?; mix(t, y) }, &xc, h)
        });

        let gamma = Tensor::<f64>::uniform(&[3], 0.5, 1.5, &mut RngStream::new(seed).derive(&[6]));
        let beta = rand(&[3], 7);
        let running_var = Tensor::<f64>::uniform(&[3], 0.5, 2.0, &mut RngStream::new(seed).derive(&[8])).into_values();
        let running_mean = rand(&[3], 9).into_values();
        for (mode, label) in [(BatchNormMode::Train, "train"), (BatchNormMode::Eval, "eval")] {
            let bn = {
                let (m, v) = (running_mean.clone(), running_var.clone());
                move |t: &mut Tape<f64>, xv: Var, gv: Var, bv: Var| -> Result<Var> {
                    let (mut m, mut v) = (m.clone(), v.clone());
                    let y = t.batchnorm2d(xv, gv, bv, &mut m, &mut v, mode, 1e-5, 0.1)?;
                    mix(t, y)
                }
            };
            let (xc, gc, bc, f) = (x.clone(), gamma.clone(), beta.clone(), bn.clone());
            self.push(format!("batchnorm2d.{label}.input"), move || {
                grad_check(|t, v| { let (g, b) = (t.constant(&gc), t.constant(&bc)); f(t, v, g, b) }, &xc, h)
            });
            let (xc, gc, bc, f) = (x.clone(), gamma.clone(), beta.clone(), bn.clone());
            self.push(format!("batchnorm2d.{label}.gamma"), move || {
                grad_check(|t, v| { let (xv, b) = (t.constant(&xc), t.constant(&bc)); f(t, xv, v, b) }, &gc, h)
            });
            let (xc, gc, bc, f) = (x.clone(), gamma.clone(), beta.clone(), bn);
            self.push(format!("batchnorm2d.{label}.beta"), move || {
                grad_check(|t, v| { let (xv, g) = (t.constant(&xc), t.constant(&gc)); f(t, xv, g, v) }, &bc, h)
            });
        }
    }

    fn add_end_to_end(&mut self, net: &NetworkConfig, cfg: &GradSuiteConfig) -> Result<()> {
        let root = RngStream::new(cfg.seed).derive(&[100]);
        let g: HourglassNet<f64> = build_generator(net, &mut root.derive(&[1]))?;
        let d: HourglassNet<f64> = build_discriminator(net, &mut root.derive(&[2]))?;
        let (m, r, res) = (net.num_joints, net.heatmap_res, net.input_res);
        let image = Tensor::<f64>::uniform(&[1, 3, res, res], 0.0, 1.0, &mut root.derive(&[3]));
        let target = Tensor::<f64>::uniform(&[1, m, r, r], 0.0, 1.0, &mut root.derive(&[4]));
        let state = AdversarialState::new(0.5, 0.001, 0.5, 1.0)?;
        let (h, stride) = (cfg.step, cfg.param_stride);

        let generator_loss = {
            let (image, target) = (image.clone(), target.clone());
            move |tape: &mut Tape<f64>, g: &mut HourglassNet<f64>, d: &mut HourglassNet<f64>, x: Var| -> Result<Var> {
                let c = tape.constant(&target);
                let preds = g.forward_generator(tape, x, BatchNormMode::Train)?;
                let l_mse = loss_mse(tape, &preds, c)?;
                let cond = tape.constant(&image);
                let last = *preds.last().expect("one stack");
                let rec = d.forward_discriminator(tape, last, Some(cond), BatchNormMode::Train)?;
                let l_adv = loss_adv(tape, last, rec)?;
                loss_generator_total(tape, l_mse, l_adv, &state)
            }
        };

        {
            let (mut g, mut d, f, image) = (g.clone(), d.clone(), generator_loss.clone(), image.clone());
            self.push("end_to_end.generator.params", move || {
                on_store(&mut g, |tape, g| { let x = tape.constant(&image); f(tape, g, &mut d, x) }, h, stride)
            });
        }
        {
            let (mut g, mut d, f, image) = (g.clone(), d.clone(), generator_loss, image.clone());
            self.push("end_to_end.generator.input", move || {
                grad_check(|tape, x| f(tape, &mut g, &mut d, x), &image, h)
            });
        }
        {
            let (mut g, mut d) = (g, d);
            let mut tape = Tape::new();
            let x = tape.constant(&image);
            let fake = {
                let preds = g.forward_generator(&mut tape, x, BatchNormMode::Train)?;
                tape.to_tensor(*preds.last().expect("one stack"))
            };
            self.push("end_to_end.discriminator.params", move || {
                on_store(
                    &mut d,
                    |tape, d| {
                        let (x, c, f) = (tape.constant(&image), tape.constant(&target), tape.constant(&fake));
                        let rr = d.forward_discriminator(tape, c, Some(x), BatchNormMode::Train)?;
                        let l_real = loss_real(tape, c, rr)?;
                        let rf = d.forward_discriminator(tape, f, Some(x), BatchNormMode::Train)?;
                        let l_fake = loss_fake(tape, f, rf)?;
                        loss_discriminator(tape, l_real, l_fake, &state)
                    },
                    h,
                    stride,
                )
            });
        }
        Ok(())
    }
}

/// Checks the trainable tensors of `net` against the loss built by `f`.
fn on_store(
    net: &mut HourglassNet<f64>,
    mut f: impl FnMut(&mut Tape<f64>, &mut HourglassNet<f64>) -> Result<Var>,
    h: f64,
    stride: usize,
) -> Result<f64> {
    let mut store: ParamStore<f64> = net.store().clone();
    grad_check_store(
        |tape, s| {
            std::mem::swap(net.store_mut(), s);
            let out = f(tape, net);
            std::mem::swap(net.store_mut(), s);
            out
        },
        &mut store,
        h,
        &|_, _| true,
        stride,
    )
}

/// True when every outcome is below `tol`.
pub fn all_pass(outcomes: &[GradCheckOutcome], tol: f64) -> bool {
    outcomes.iter().all(|o| o.passes(tol))
}
