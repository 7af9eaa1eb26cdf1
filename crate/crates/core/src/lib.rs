//! Style-based 3D GAN toolkit: networks, training, latent projection,
//! evaluation metrics and volume/checkpoint formats.

pub mod config;
pub mod error;
pub mod io;
pub mod metrics;
pub mod nets;
pub mod projection;
pub mod rng;
pub mod training;

pub use config::ModelConfig;
pub use error::{Error, Result};
