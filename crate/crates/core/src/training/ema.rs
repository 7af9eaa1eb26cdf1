use crate::error::{Error, Result};
use crate::nets::ParamSet;

/// Decay per update: `0.5^(batch / halflife)`; an infinite halflife gives 1.
pub fn ema_beta(batch: usize, halflife_images: f64) -> f64 {
    0.5f64.powf(batch as f64 / halflife_images)
}

/// `ema ← beta·ema + (1 − beta)·params`, written as `ema + (params − ema)(1 − beta)`.
pub fn ema_update(ema: &mut ParamSet<f32>, params: &ParamSet<f32>, halflife_images: f64, batch: usize) -> Result<()> {
    if !(halflife_images > 0.0) {
        return Err(Error::InvalidArgument(format!("EMA halflife must be > 0, got {halflife_images}")));
    }
    if ema.names() != params.names() {
        return Err(Error::InvalidArgument("EMA and parameter sets differ".into()));
    }
    let w = 1.0 - ema_beta(batch, halflife_images);
    for i in 0..params.len() {
        let src = params.values()[i].clone();
        for (e, &p) in ema.value_mut(i).data_mut().iter_mut().zip(src.data()) {
            *e = (*e as f64 + (p as f64 - *e as f64) * w) as f32;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{Init, ParamSpec};

    fn set(v: f64) -> ParamSet<f32> {
        ParamSet::init(&[ParamSpec::new("a", &[3], Init::Const(v))], 0, 0)
    }

    #[test]
    fn beta_definition() {
        assert_eq!(ema_beta(32, 32.0), 0.5);
        assert_eq!(ema_beta(4, f64::INFINITY), 1.0);
    }

    #[test]
    fn converges_to_frozen_params() {
        let (mut ema, p) = (set(0.0), set(0.8));
        for _ in 0..200 {
            ema_update(&mut ema, &p, 10.0, 4).unwrap();
        }
        assert!(ema.get("a").unwrap().data().iter().all(|v| (v - 0.8).abs() < 1e-6));
    }

    #[test]
    fn infinite_halflife_freezes() {
        let (mut ema, p) = (set(0.3), set(0.8));
        ema_update(&mut ema, &p, f64::INFINITY, 4).unwrap();
        assert_eq!(ema, set(0.3));
        assert!(ema_update(&mut ema, &p, 0.0, 4).is_err());
    }
}
