use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mmd::bmmd2;
use super::slices::{slice_fd, FeatureExtractor, Plane};
use super::ssim::{diversity_msssim, mean_std};
use crate::error::{Error, Result};
use crate::io::Volume;
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Bmmd2,
    Msssim,
    Fid,
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bmmd2" => Ok(Metric::Bmmd2),
            "msssim" => Ok(Metric::Msssim),
            "fid" => Ok(Metric::Fid),
            _ => Err(Error::InvalidArgument(format!("unknown metric {s:?} (bmmd2, msssim, fid)"))),
        }
    }
}

/// Parses a comma-separated metric list such as `bmmd2,msssim,fid`.
pub fn parse_metrics(list: &str) -> Result<Vec<Metric>> {
    let mut out = Vec::new();
    for m in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m: Metric = m.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("no metrics requested".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub metrics: Vec<Metric>,
    pub planes: Vec<Plane>,
    pub seed: u64,
    /// Volumes per bMMD² batch (capped at the set sizes).
    pub bmmd2_batch: usize,
    pub bmmd2_repeats: usize,
    pub msssim_pairs: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            metrics: vec![Metric::Bmmd2, Metric::Msssim, Metric::Fid],
            planes: Plane::ALL.to_vec(),
            seed: 0,
            bmmd2_batch: 16,
            bmmd2_repeats: 10,
            msssim_pairs: 100,
        }
    }
}

/// Evaluation summary; statistics that were not requested are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub bmmd2_mean: Option<f64>,
    pub bmmd2_std: Option<f64>,
    pub msssim_mean: Option<f64>,
    pub msssim_std: Option<f64>,
    pub fd_sagittal: Option<f64>,
    pub fd_axial: Option<f64>,
    pub fd_coronal: Option<f64>,
    pub extractor: String,
    pub seed: u64,
    pub n_gen: usize,
    pub n_real: usize,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// bMMD² over `repeats` batch draws. Draw r takes indices from the stream
/// (seed, r) for both sets, so equal-sized identical sets score 0.
pub fn bmmd2_repeated(gen: &[Volume], real: &[Volume], batch: usize, repeats: usize, seed: u64) -> Result<(f64, f64)> {
    if gen.is_empty() || real.is_empty() {
        return Err(Error::Metric("bmmd2 needs non-empty sets".into()));
    }
    if batch == 0 || repeats == 0 {
        return Err(Error::Metric("bmmd2 batch size and repeats must be ≥ 1".into()));
    }
    let draw = |set: &[Volume], r: usize| -> Vec<Volume> {
        let mut rng = stream(seed, Purpose::Metrics, 1 + r as u64);
        (0..batch.min(set.len())).map(|_| set[rng.gen_range(0..set.len())].clone()).collect()
    };
    let vals = (0..repeats)
        .map(|r| bmmd2(&draw(gen, r), &draw(real, r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_std(&vals))
}

pub fn evaluate(gen: &[Volume], real: &[Volume], opts: &EvalOptions, extractor: &dyn FeatureExtractor) -> Result<MetricsReport> {
    let mut report = MetricsReport {
        bmmd2_mean: None,
        bmmd2_std: None,
        msssim_mean: None,
        msssim_std: None,
        fd_sagittal: None,
        fd_axial: None,
        fd_coronal: None,
        extractor: extractor.name().to_string(),
        seed: opts.seed,
        n_gen: gen.len(),
        n_real: real.len(),
    };
    if gen.is_empty() {
        return Err(Error::Metric("no generated volumes to evaluate".into()));
    }
    let needs_real = opts.metrics.iter().any(|m| *m != Metric::Msssim);
    if needs_real && real.is_empty() {
        return Err(Error::Metric("bmmd2 and fid need real volumes".into()));
    }
    if let (Some(g), Some(r)) = (gen.first(), real.first()) {
        if g.dims() != r.dims() {
            return Err(Error::Shape(format!("generated volumes are {:?}, real volumes {:?}", g.dims(), r.dims())));
        }
    }
    for m in &opts.metrics {
        match m {
            Metric::Bmmd2 => {
                let (mean, std) = bmmd2_repeated(gen, real, opts.bmmd2_batch, opts.bmmd2_repeats, opts.seed)?;
                report.bmmd2_mean = Some(mean);
                report.bmmd2_std = Some(std);
            }
            Metric::Msssim => {
                let (mean, std) = diversity_msssim(gen, opts.msssim_pairs, opts.seed)?;
                report.msssim_mean = Some(mean);
                report.msssim_std = Some(std);
            }
            Metric::Fid => {
                for &p in &opts.planes {
                    let fd = Some(slice_fd(gen, real, p, extractor)?);
                    match p {
                        Plane::Sagittal => report.fd_sagittal = fd,
                        Plane::Axial => report.fd_axial = fd,
                        Plane::Coronal => report.fd_coronal = fd,
                    }
                }
            }
        }
    }
    let stats = [
        report.bmmd2_mean,
        report.bmmd2_std,
        report.msssim_mean,
        report.msssim_std,
        report.fd_sagittal,
        report.fd_axial,
        report.fd_coronal,
    ];
    if stats.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("metrics report".into()));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_list_parsing() {
        assert_eq!(parse_metrics("bmmd2, fid,bmmd2").unwrap(), vec![Metric::Bmmd2, Metric::Fid]);
        assert!(matches!(parse_metrics("bmmd2,lpips"), Err(Error::InvalidArgument(_))));
        assert!(parse_metrics("").is_err());
    }

    #[test]
    fn report_has_fixed_keys() {
        let r = MetricsReport {
            bmmd2_mean: Some(1.0),
            bmmd2_std: Some(0.0),
            msssim_mean: None,
            msssim_std: None,
            fd_sagittal: None,
            fd_axial: None,
            fd_coronal: None,
            extractor: "randproj-v1".into(),
            seed: 3,
            n_gen: 2,
            n_real: 2,
        };
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "bmmd2_mean", "bmmd2_std", "extractor", "fd_axial", "fd_coronal", "fd_sagittal", "msssim_mean",
                "msssim_std", "n_gen", "n_real", "seed"
            ]
        );
    }
}
