use crate::codec::{default_sigma, render_targets, CropTransform, FlipPairs, KeypointSet, PersonDescriptor};
use crate::error::{contract, Result};
use crate::network::NetworkConfig;
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::TrainConfig;

/// Random perturbation applied to one training sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Augmentation {
    pub flip: bool,
    pub rotation_deg: f64,
    pub scale: f64,
}

impl Augmentation {
    pub const NONE: Augmentation = Augmentation { flip: false, rotation_deg: 0.0, scale: 1.0 };
}

/// A network input with its heatmap targets.
#[derive(Clone, Debug)]
pub struct Prepared<T> {
    /// `[3,R,R]` crop.
    pub input: Tensor<T>,
    /// `[M,r,r]` targets.
    pub target: Tensor<T>,
    pub transform: CropTransform,
}

/// Turns annotated images into augmented crops and targets.
#[derive(Clone, Debug)]
pub struct Augmenter {
    pub input_res: usize,
    pub heatmap_res: usize,
    pub sigma: f64,
    pub pairs: FlipPairs,
    pub flip_prob: f64,
    pub max_rotation: f64,
    pub scale_range: [f64; 2],
}

impl Augmenter {
    pub fn new(net: &NetworkConfig, cfg: &TrainConfig, pairs: FlipPairs) -> Result<Self> {
        pairs.check(net.num_joints)?;
        Ok(Augmenter {
            input_res: net.input_res,
            heatmap_res: net.heatmap_res,
            sigma: cfg.sigma.unwrap_or_else(|| default_sigma(net.heatmap_res)),
            pairs,
            flip_prob: cfg.flip_prob,
            max_rotation: cfg.max_rotation,
            scale_range: cfg.scale_range,
        })
    }

    /// Draws flip, then rotation, then scale.
    pub fn sample(&self, rng: &mut RngStream) -> Augmentation {
        let flip = rng.bernoulli(self.flip_prob);
        let rotation_deg = rng.uniform(-self.max_rotation, self.max_rotation);
        let scale = rng.uniform(self.scale_range[0], self.scale_range[1]);
        Augmentation { flip, rotation_deg, scale }
    }

    /// Crops `image` under `aug` and renders targets. A flip mirrors the
    /// crop and exchanges left and right joints so labels keep their meaning.
    pub fn apply<T: Scalar>(&self, image: &Tensor<T>, kps: &KeypointSet, person: &PersonDescriptor, aug: Augmentation) -> Result<Prepared<T>> {
        let s = image.shape();
        contract!(s.len() == 3 && s[0] == 3, "image must be [3,H,W], got {s:?}");
        let transform = CropTransform::new(person, (s[2], s[1]), self.input_res, self.heatmap_res, aug.rotation_deg, aug.scale, aug.flip)?;
        let mut mapped = transform.keypoints_to_heatmap(kps);
        if aug.flip {
            let joints = (0..mapped.len()).map(|j| *mapped.get(self.pairs.partner(j))).collect();
            mapped = KeypointSet::new(joints, mapped.space())?;
        }
        let target = render_targets(&mapped, kps.len(), self.heatmap_res, self.sigma)?;
        Ok(Prepared { input: transform.crop(image)?, target, transform })
    }

    pub fn augment_sample<T: Scalar>(&self, image: &Tensor<T>, kps: &KeypointSet, person: &PersonDescriptor, rng: &mut RngStream) -> Result<Prepared<T>> {
        let aug = self.sample(rng);
        self.apply(image, kps, person, aug)
    }
}
