//! Keypoints, crop transforms, heatmap targets and inference decoding.

mod heatmap;
mod keypoints;
mod transform;

pub use heatmap::{decode_argmax, default_sigma, flip_average, mirror_and_swap, refine_quarter_offset, render_targets};
pub use keypoints::{FlipPairs, JointSchema, Keypoint, KeypointSet, PersonDescriptor, Space, GROUP_NAMES};
pub use transform::{crop_input, heatmap_to_image_coords, Affine2, CropTransform};

#[cfg(test)]
mod tests;
