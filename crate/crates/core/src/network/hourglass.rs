use super::config::NetworkConfig;
use super::layers::{Conv, Norm, Residual};
use crate::error::{contract, Result};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::{BatchNormMode, ParamStore, Tape, Tensor, Var};

/// Which side of the adversarial pair a network plays.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Image to heatmaps. The stem downsamples by 4.
    Generator,
    /// Heatmaps (and optionally the image) to reconstructed heatmaps. The
    /// stem has the generator's layers but keeps heatmap resolution.
    Discriminator,
}

/// One encoder-decoder level: a skip branch at the current resolution and a
/// pooled branch that recurses until `depth` reaches zero.
#[derive(Clone, Debug)]
struct Hourglass {
    up: Residual,
    down: Residual,
    inner: Box<Inner>,
    after: Residual,
}

#[derive(Clone, Debug)]
enum Inner {
    Nested(Hourglass),
    Bottom(Residual),
}

impl Hourglass {
    fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, depth: usize, ch: usize, rng: &mut RngStream) -> Self {
        let up = Residual::new(store, &format!("{name}.up"), ch, ch, rng);
        let down = Residual::new(store, &format!("{name}.down"), ch, ch, rng);
        let inner = if depth > 1 {
            Inner::Nested(Hourglass::new(store, &format!("{name}.inner"), depth - 1, ch, rng))
        } else {
            Inner::Bottom(Residual::new(store, &format!("{name}.bottom"), ch, ch, rng))
        };
        let after = Residual::new(store, &format!("{name}.after"), ch, ch, rng);
        Hourglass { up, down, inner: Box::new(inner), after }
    }

    fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &mut ParamStore<T>, x: Var, mode: BatchNormMode) -> Result<Var> {
        let skip = self.up.forward(tape, store, x, mode)?;
        let pooled = tape.maxpool2d(x, 2, 2)?;
        let low = self.down.forward(tape, store, pooled, mode)?;
        let low = match self.inner.as_ref() {
            Inner::Nested(hg) => hg.forward(tape, store, low, mode)?,
            Inner::Bottom(res) => res.forward(tape, store, low, mode)?,
        };
        let low = self.after.forward(tape, store, low, mode)?;
        let up = tape.upsample_nearest2x(low)?;
        tape.add(skip, up)
    }
}

/// Hourglass followed by the transition block that emits heatmaps and, for
/// all but the last stack, feeds features and heatmaps back into the trunk.
#[derive(Clone, Debug)]
struct Stack {
    hourglass: Hourglass,
    res: Residual,
    lin: Conv,
    lin_norm: Norm,
    heat: Conv,
    remap: Option<(Conv, Conv)>,
}

/// Stacked-hourglass network together with its parameters.
#[derive(Debug)]
pub struct HourglassNet<T> {
    cfg: NetworkConfig,
    role: Role,
    store: ParamStore<T>,
    stem_conv: Conv,
    stem_norm: Norm,
    stem_res: [Residual; 3],
    stacks: Vec<Stack>,
}

impl<T: Scalar> Clone for HourglassNet<T> {
    /// Deep copy; the copy's parameters are a distinct gradient target.
    fn clone(&self) -> Self {
        HourglassNet {
            cfg: self.cfg.clone(),
            role: self.role,
            store: self.store.clone(),
            stem_conv: self.stem_conv.clone(),
            stem_norm: self.stem_norm.clone(),
            stem_res: self.stem_res.clone(),
            stacks: self.stacks.clone(),
        }
    }
}

/// Generator: RGB input, `num_stacks` stacks, `num_joints` heatmaps each.
pub fn build_generator<T: Scalar>(cfg: &NetworkConfig, rng: &mut RngStream) -> Result<HourglassNet<T>> {
    HourglassNet::build(cfg, Role::Generator, rng)
}

/// Discriminator: heatmap input (plus the RGB crop when `cfg.conditional`)
/// and `discriminator_stacks` stacks.
pub fn build_discriminator<T: Scalar>(cfg: &NetworkConfig, rng: &mut RngStream) -> Result<HourglassNet<T>> {
    HourglassNet::build(cfg, Role::Discriminator, rng)
}

impl<T: Scalar> HourglassNet<T> {
    fn build(cfg: &NetworkConfig, role: Role, rng: &mut RngStream) -> Result<Self> {
        cfg.validate()?;
        let (in_ch, stride, n_stacks) = match role {
            Role::Generator => (3, 2, cfg.num_stacks),
            Role::Discriminator => (cfg.num_joints + if cfg.conditional { 3 } else { 0 }, 1, cfg.discriminator_stacks),
        };
        let c = cfg.base_channels;
        let m = cfg.num_joints;
        let mut store = ParamStore::new();
        let stem_conv = Conv::new(&mut store, "stem.conv", in_ch, c / 2, 7, stride, rng);
        let stem_norm = Norm::new(&mut store, "stem.bn", c / 2);
        let stem_res = [
            Residual::new(&mut store, "stem.res0", c / 2, c, rng),
            Residual::new(&mut store, "stem.res1", c, c, rng),
            Residual::new(&mut store, "stem.res2", c, c, rng),
        ];
        let mut stacks = Vec::with_capacity(n_stacks);
        for i in 0..n_stacks {
            let name = format!("stack{i}");
            let hourglass = Hourglass::new(&mut store, &format!("{name}.hg"), cfg.hourglass_depth, c, rng);
            let res = Residual::new(&mut store, &format!("{name}.res"), c, c, rng);
            let lin = Conv::new(&mut store, &format!("{name}.lin"), c, c, 1, 1, rng);
            let lin_norm = Norm::new(&mut store, &format!("{name}.lin_bn"), c);
            let heat = Conv::new(&mut store, &format!("{name}.heat"), c, m, 1, 1, rng);
            let remap = (i + 1 < n_stacks).then(|| {
                (
                    Conv::new(&mut store, &format!("{name}.remap_features"), c, c, 1, 1, rng),
                    Conv::new(&mut store, &format!("{name}.remap_heatmaps"), m, c, 1, 1, rng),
                )
            });
            stacks.push(Stack { hourglass, res, lin, lin_norm, heat, remap });
        }
        Ok(HourglassNet { cfg: cfg.clone(), role, store, stem_conv, stem_norm, stem_res, stacks })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn num_stacks(&self) -> usize {
        self.stacks.len()
    }

    /// Channel count the first convolution expects.
    pub fn input_channels(&self) -> usize {
        self.stem_conv.in_channels(&self.store)
    }

    /// Names and shapes of every trainable tensor, in construction order.
    pub fn layer_shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.store
            .iter()
            .filter(|(_, _, t)| t.requires_grad())
            .map(|(_, n, t)| (n.to_string(), t.shape().to_vec()))
            .collect()
    }

    fn trunk(&mut self, tape: &mut Tape<T>, x: Var, mode: BatchNormMode) -> Result<Vec<Var>> {
        let store = &mut self.store;
        let mut h = self.stem_conv.forward(tape, store, x)?;
        h = self.stem_norm.forward(tape, store, h, mode)?;
        h = tape.relu(h);
        h = self.stem_res[0].forward(tape, store, h, mode)?;
        if self.role == Role::Generator {
            h = tape.maxpool2d(h, 2, 2)?;
        }
        h = self.stem_res[1].forward(tape, store, h, mode)?;
        h = self.stem_res[2].forward(tape, store, h, mode)?;

        let mut outputs = Vec::with_capacity(self.stacks.len());
        for stack in &self.stacks {
            let mut f = stack.hourglass.forward(tape, store, h, mode)?;
            f = stack.res.forward(tape, store, f, mode)?;
            f = stack.lin.forward(tape, store, f)?;
            f = stack.lin_norm.forward(tape, store, f, mode)?;
            f = tape.relu(f);
            let heat = stack.heat.forward(tape, store, f)?;
            outputs.push(heat);
            if let Some((feat_map, heat_map)) = &stack.remap {
                let a = feat_map.forward(tape, store, f)?;
                let b = heat_map.forward(tape, store, heat)?;
                let ab = tape.add(a, b)?;
                h = tape.add(h, ab)?;
            }
        }
        Ok(outputs)
    }

    /// Heatmaps after every stack for an image batch `[B,3,R,R]`.
    pub fn forward_generator(&mut self, tape: &mut Tape<T>, image: Var, mode: BatchNormMode) -> Result<Vec<Var>> {
        contract!(self.role == Role::Generator, "forward_generator called on a discriminator");
        let r = self.cfg.input_res;
        let s = tape.shape(image);
        contract!(s.len() == 4 && s[1] == 3 && s[2] == r && s[3] == r, "generator expects [B,3,{r},{r}], got {s:?}");
        self.trunk(tape, image, mode)
    }

    /// Reconstruction `D(heatmaps, image)` with the shape of `heatmaps`.
    ///
    /// The image, required exactly when the network is conditional, is
    /// bilinearly resized to heatmap resolution and appended after the
    /// heatmap channels.
    pub fn forward_discriminator(
        &mut self,
        tape: &mut Tape<T>,
        heatmaps: Var,
        image: Option<Var>,
        mode: BatchNormMode,
    ) -> Result<Var> {
        contract!(self.role == Role::Discriminator, "forward_discriminator called on a generator");
        let (m, r) = (self.cfg.num_joints, self.cfg.heatmap_res);
        let s = tape.shape(heatmaps).to_vec();
        contract!(s.len() == 4 && s[1] == m && s[2] == r && s[3] == r, "discriminator expects [B,{m},{r},{r}] heatmaps, got {s:?}");
        let input = match (self.cfg.conditional, image) {
            (true, Some(img)) => {
                let si = tape.shape(img);
                contract!(si.len() == 4 && si[0] == s[0] && si[1] == 3, "conditioning image shape {si:?} does not match batch {}", s[0]);
                let small = tape.resize_bilinear(img, r, r)?;
                tape.concat_channels(heatmaps, small)?
            }
            (false, None) => heatmaps,
            (true, None) => return Err(crate::Error::Contract("conditional discriminator needs the image".into())),
            (false, Some(_)) => return Err(crate::Error::Contract("unconditional discriminator does not take an image".into())),
        };
        let outs = self.trunk(tape, input, mode)?;
        Ok(*outs.last().expect("at least one stack"))
    }
}

/// Anything that maps an image batch to per-joint heatmaps.
pub trait HeatmapModel<T: Scalar> {
    /// `[B,3,R,R]` images to `[B,M,r,r]` heatmaps of the final stage.
    fn predict(&mut self, images: &Tensor<T>) -> Result<Tensor<T>>;
}

impl<T: Scalar> HeatmapModel<T> for HourglassNet<T> {
    fn predict(&mut self, images: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let x = tape.constant(images);
        let outs = self.forward_generator(&mut tape, x, BatchNormMode::Eval)?;
        Ok(tape.to_tensor(*outs.last().expect("at least one stack")))
    }
}
