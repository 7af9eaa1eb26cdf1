use crate::error::{Error, Result};
use crate::io::Volume;

fn check_batches(x: &[Volume], y: &[Volume]) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Metric("bmmd2 needs non-empty batches".into()));
    }
    let dims = x[0].dims();
    if let Some(v) = x.iter().chain(y).find(|v| v.dims() != dims) {
        return Err(Error::Shape(format!("bmmd2 batches mix dims {dims:?} and {:?}", v.dims())));
    }
    Ok(())
}

fn dot(a: &Volume, b: &Volume) -> f64 {
    a.data().iter().zip(b.data()).map(|(&p, &q)| p as f64 * q as f64).sum()
}

fn mean_kernel(a: &[Volume], b: &[Volume]) -> f64 {
    let mut s = 0.0;
    for p in a {
        for q in b {
            s += dot(p, q);
        }
    }
    s / (a.len() * b.len()) as f64
}

/// Squared maximum mean discrepancy with the linear kernel `⟨vec a, vec b⟩`,
/// as the biased V-statistic (identical batches score 0).
pub fn bmmd2(x: &[Volume], y: &[Volume]) -> Result<f64> {
    check_batches(x, y)?;
    let v = mean_kernel(x, x) + mean_kernel(y, y) - 2.0 * mean_kernel(x, y);
    Ok(v.max(0.0))
}
