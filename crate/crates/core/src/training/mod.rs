//! Losses, optimizer, weight averaging, regularization and the training loop.

pub mod adam;
pub mod ema;
pub mod losses;
pub mod path_length;
pub mod trainer;

pub use adam::{Adam, AdamConfig};
pub use ema::{ema_beta, ema_update};
pub use losses::{d_loss_logistic, g_loss_nonsat};
pub use path_length::{lazy_regularize, path_length_penalty, path_lengths, penalty_from_lengths, projection_noise, PathLengthState};
pub use trainer::{StepStats, TrainSchedule, TrainState, Trainer, LOSS_HEADER};
