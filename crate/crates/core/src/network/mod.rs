//! Stacked-hourglass generator and discriminator.

mod checkpoint;
mod config;
mod hourglass;
mod layers;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::NetworkConfig;
pub use hourglass::{build_discriminator, build_generator, HeatmapModel, HourglassNet, Role};
