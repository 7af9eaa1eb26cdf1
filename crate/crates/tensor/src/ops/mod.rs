mod conv;
mod elementwise;
mod linear;
mod resample;
mod shape;

pub use conv::{conv3d, conv3d_input_grad, conv3d_weight_grad, ConvGeometry};
pub use elementwise::softplus_scalar;
pub use linear::{dense, equalized_scale};
pub use resample::{avgpool3d, upsample_nearest3d};
pub use shape::offset_of;
