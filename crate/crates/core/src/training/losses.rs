use voxstyle_tensor::{Scalar, Tensor};

use crate::error::Result;

/// Non-saturating generator loss: `mean softplus(−fake)`.
pub fn g_loss_nonsat<T: Scalar>(fake_logits: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(fake_logits.neg()?.softplus()?.mean()?)
}

/// Logistic discriminator loss: `mean softplus(−real) + mean softplus(fake)`.
pub fn d_loss_logistic<T: Scalar>(real_logits: &Tensor<T>, fake_logits: &Tensor<T>) -> Result<Tensor<T>> {
    let real = real_logits.neg()?.softplus()?.mean()?;
    Ok(real.add(&fake_logits.softplus()?.mean()?)?)
}
