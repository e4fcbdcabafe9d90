use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters shared by the generator and discriminator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// Hourglass stacks in the generator.
    pub num_stacks: usize,
    /// Heatmaps per stack (one per joint).
    pub num_joints: usize,
    /// Side of the square input crop.
    pub input_res: usize,
    /// Side of the square heatmaps; a quarter of `input_res`.
    pub heatmap_res: usize,
    /// Feature width of the trunk.
    pub base_channels: usize,
    /// Pooling levels inside one hourglass.
    pub hourglass_depth: usize,
    /// The discriminator also sees the RGB crop.
    pub conditional: bool,
    /// Hourglass stacks in the discriminator.
    #[serde(default = "one")]
    pub discriminator_stacks: usize,
}

fn one() -> usize {
    1
}

impl NetworkConfig {
    /// Full-size setting: 256 input, 64x64 heatmaps, 4 stacks of width 256.
    pub fn full_scale(num_joints: usize) -> Self {
        NetworkConfig {
            num_stacks: 4,
            num_joints,
            input_res: 256,
            heatmap_res: 64,
            base_channels: 256,
            hourglass_depth: 4,
            conditional: true,
            discriminator_stacks: 1,
        }
    }

    /// Desk-scale setting: 64 input, 16x16 heatmaps, one stack of width 32.
    pub fn desk(num_joints: usize) -> Self {
        NetworkConfig {
            num_stacks: 1,
            num_joints,
            input_res: 64,
            heatmap_res: 16,
            base_channels: 32,
            hourglass_depth: 2,
            conditional: true,
            discriminator_stacks: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Contract(format!("network config: {m}")));
        if self.num_stacks == 0 || self.discriminator_stacks == 0 {
            return fail("stack counts must be positive".into());
        }
        if self.num_joints == 0 {
            return fail("num_joints must be positive".into());
        }
        if self.base_channels < 4 || self.base_channels % 4 != 0 {
            return fail(format!("base_channels {} must be a positive multiple of 4", self.base_channels));
        }
        if self.heatmap_res == 0 || self.heatmap_res * 4 != self.input_res {
            return fail(format!("heatmap_res {} must be input_res {} / 4", self.heatmap_res, self.input_res));
        }
        let cell = 1usize.checked_shl(self.hourglass_depth as u32).unwrap_or(0);
        if self.hourglass_depth == 0 || cell == 0 || self.heatmap_res % cell != 0 {
            return fail(format!(
                "heatmap_res {} must be divisible by 2^hourglass_depth ({})",
                self.heatmap_res, self.hourglass_depth
            ));
        }
        Ok(())
    }
}
