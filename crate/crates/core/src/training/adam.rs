use voxstyle_tensor::Array;

use crate::error::{Error, Result};
use crate::nets::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-3,
            beta1: 0.0,
            beta2: 0.99,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam with moment buffers mirroring a parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: ParamSet<f32>,
    pub v: ParamSet<f32>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamSet<f32>) -> Self {
        let zeros = params.map(|a| Array::zeros(a.shape()));
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn update(&mut self, params: &mut ParamSet<f32>, grads: &[Array<f32>]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::InvalidArgument(format!("{} gradients for {} parameters", grads.len(), params.len())));
        }
        for (name, g) in params.names().iter().zip(grads) {
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
        for (i, g) in grads.iter().enumerate() {
            let m = self.m.value_mut(i).data_mut();
            for (mi, &gi) in m.iter_mut().zip(g.data()) {
                *mi = (beta1 * *mi as f64 + (1.0 - beta1) * gi as f64) as f32;
            }
            let v = self.v.value_mut(i).data_mut();
            for (vi, &gi) in v.iter_mut().zip(g.data()) {
                let gi = gi as f64;
                *vi = (beta2 * *vi as f64 + (1.0 - beta2) * gi * gi) as f32;
            }
            let (m, v) = (self.m.values()[i].data(), self.v.values()[i].data());
            let p = params.value_mut(i).data_mut();
            for ((pi, &mi), &vi) in p.iter_mut().zip(m).zip(v) {
                let delta = lr * (mi as f64 / c1) / ((vi as f64 / c2).sqrt() + eps);
                *pi = (*pi as f64 - delta) as f32;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{Init, ParamSpec};

    fn scalar_param(v: f32) -> ParamSet<f32> {
        let mut p = ParamSet::init(&[ParamSpec::new("x", &[1], Init::Const(0.0))], 0, 0);
        p.get_mut("x").unwrap().data_mut()[0] = v;
        p
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut p = scalar_param(1.25);
        let mut adam = Adam::new(AdamConfig::default(), &p);
        adam.update(&mut p, &[Array::zeros(&[1])]).unwrap();
        assert_eq!(p.get("x").unwrap().data(), &[1.25]);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn first_step_has_magnitude_lr() {
        let mut p = scalar_param(0.0);
        let cfg = AdamConfig {
            lr: 0.1,
            ..Default::default()
        };
        let mut adam = Adam::new(cfg, &p);
        adam.update(&mut p, &[Array::ones(&[1])]).unwrap();
        assert!((p.get("x").unwrap().data()[0] + 0.1).abs() < 1e-6);
        adam.update(&mut p, &[Array::ones(&[1])]).unwrap();
        assert!((p.get("x").unwrap().data()[0] + 0.2).abs() < 1e-6);
    }

    #[test]
    fn zero_learning_rate_is_exact() {
        let mut p = scalar_param(0.7);
        let mut adam = Adam::new(AdamConfig { lr: 0.0, ..Default::default() }, &p);
        for _ in 0..5 {
            adam.update(&mut p, &[Array::full(&[1], 3.0)]).unwrap();
        }
        assert_eq!(p.get("x").unwrap().data(), &[0.7]);
    }

    #[test]
    fn rejects_non_finite_gradients() {
        let mut p = scalar_param(0.0);
        let mut adam = Adam::new(AdamConfig::default(), &p);
        assert!(adam.update(&mut p, &[Array::full(&[1], f32::NAN)]).is_err());
        assert_eq!(adam.step, 0);
    }
}
