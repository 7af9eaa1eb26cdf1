//! Generator and discriminator networks.

mod discriminator;
mod generator;
pub mod layers;
mod params;

pub use discriminator::{mbstd_group_size, minibatch_stddev, Discriminator, MBSTD_GROUP};
pub use generator::{Generator, NoiseMaps, NoiseMode, SynthesisTrace, MAPPING_LR_MUL};
pub use layers::{modulate_demodulate, modulated_conv, pixel_norm};
pub use params::{Bound, Init, ParamSet, ParamSpec};

use crate::config::ModelConfig;
use crate::error::Result;

/// Trainable scalars in the generator and the discriminator together.
pub fn count_params(cfg: &ModelConfig) -> Result<usize> {
    let count = |specs: Vec<ParamSpec>| specs.iter().map(|s| s.shape.iter().product::<usize>()).sum::<usize>();
    Ok(count(Generator::new(cfg)?.specs()) + count(Discriminator::new(cfg)?.specs()))
}
