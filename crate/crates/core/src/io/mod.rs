//! File formats and the procedural phantom dataset.

pub mod checkpoint;
pub mod latent;
#[cfg(feature = "nifti")]
pub mod nifti;
pub mod pgm;
pub mod phantom;
pub mod volume;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint};
pub use pgm::{encode_pgm, export_slice_image};
pub use volume::{decode_volume, encode_volume, normalize_intensity, read_volume, read_volume_dir, stack, unstack, write_volume, Volume};
pub use latent::{decode_latent, encode_latent, read_latent, write_latent, LatentRecord};
