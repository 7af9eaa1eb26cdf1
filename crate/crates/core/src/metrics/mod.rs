//! Evaluation of generated volume sets: batch MMD², MS-SSIM diversity and
//! slice-wise Fréchet distance.

mod frechet;
mod mmd;
mod report;
mod slices;
mod ssim;

pub use frechet::{frechet_distance, mean_cov};
pub use mmd::bmmd2;
pub use report::{bmmd2_repeated, evaluate, parse_metrics, EvalOptions, Metric, MetricsReport};
pub use slices::{extract_middle_slice, slice_fd, FeatureExtractor, Plane, RandProj, Slice, RANDPROJ_DIM, RANDPROJ_NAME};
pub use ssim::{diversity_msssim, ms_ssim3d, msssim_scales, ssim3d, SsimOptions, MSSSIM_WEIGHTS};
