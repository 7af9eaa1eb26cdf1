use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const PSD_TOLERANCE: f64 = 1e-10;

/// Eigen-decomposition of the symmetric part of `m` with eigenvalues in
/// [−tol, 0) clamped to 0; more negative eigenvalues are an error.
fn psd_eigen(m: &DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let sym = (m + m.transpose()) * 0.5;
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(Error::Metric(format!("{what} has non-finite entries")));
    }
    let mut eig = SymmetricEigen::try_new(sym, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Metric(format!("eigen-decomposition of {what} did not converge")))?;
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    for v in eig.eigenvalues.iter_mut() {
        if *v < -PSD_TOLERANCE * scale {
            return Err(Error::Metric(format!("{what} is not positive semi-definite (eigenvalue {v})")));
        }
        *v = v.max(0.0);
    }
    Ok(eig)
}

fn sqrtm(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let eig = psd_eigen(m, what)?;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Fréchet distance between N(mu1, s1) and N(mu2, s2):
/// ‖mu1 − mu2‖² + tr(s1 + s2 − 2·(s1^½ s2 s1^½)^½), clamped at 0.
pub fn frechet_distance(mu1: &DVector<f64>, s1: &DMatrix<f64>, mu2: &DVector<f64>, s2: &DMatrix<f64>) -> Result<f64> {
    let n = mu1.len();
    if mu2.len() != n || s1.shape() != (n, n) || s2.shape() != (n, n) {
        return Err(Error::Shape(format!(
            "Fréchet distance of means {}/{} and covariances {:?}/{:?}",
            n,
            mu2.len(),
            s1.shape(),
            s2.shape()
        )));
    }
    let root = sqrtm(s1, "first covariance")?;
    let s2sym = (s2 + s2.transpose()) * 0.5;
    psd_eigen(&s2sym, "second covariance")?;
    let inner = &root * s2sym * &root;
    let cross: f64 = psd_eigen(&inner, "covariance product")?.eigenvalues.iter().map(|v| v.sqrt()).sum();
    let d = (mu1 - mu2).norm_squared() + s1.trace() + s2.trace() - 2.0 * cross;
    Ok(d.max(0.0))
}

/// Mean and unbiased covariance of the rows of `features` (zero covariance
/// for a single row).
pub fn mean_cov(features: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = features.len();
    if n == 0 {
        return Err(Error::Metric("no feature vectors".into()));
    }
    let f = features[0].len();
    if features.iter().any(|r| r.len() != f) {
        return Err(Error::Shape("feature vectors of differing length".into()));
    }
    let x = DMatrix::from_fn(n, f, |i, j| features[i][j]);
    let mu = DVector::from_fn(f, |j, _| x.column(j).sum() / n as f64);
    let mut c = x.clone();
    for j in 0..f {
        c.column_mut(j).add_scalar_mut(-mu[j]);
    }
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    Ok((mu, c.transpose() * c / denom))
}
