use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ParamSet, Scalar, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    /// Decoupled (AdamW) decay; zero gives plain Adam.
    pub weight_decay: f64,
}

impl AdamConfig {
    pub const fn adam(lr: f64, betas: (f64, f64)) -> Self {
        Self {
            lr,
            betas,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }

    pub const fn adamw(lr: f64, betas: (f64, f64), weight_decay: f64) -> Self {
        Self {
            lr,
            betas,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// Bias-corrected Adam with per-parameter first and second moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamSet<T>) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Self {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// Rebuilds an optimizer from saved moments, checked against `params`.
    pub fn from_state(
        config: AdamConfig,
        params: &ParamSet<T>,
        m: Vec<Tensor<T>>,
        v: Vec<Tensor<T>>,
        t: u64,
    ) -> Result<Self> {
        let ok = m.len() == params.len()
            && v.len() == params.len()
            && params
                .iter()
                .zip(m.iter().zip(&v))
                .all(|(p, (a, b))| a.shape() == p.value.shape() && b.shape() == p.value.shape());
        if !ok {
            return Err(Error::shape("adam state", "moment buffers do not match parameters"));
        }
        Ok(Self { config, m, v, t })
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn moments(&self) -> (&[Tensor<T>], &[Tensor<T>]) {
        (&self.m, &self.v)
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// One update of every trainable parameter that has a gradient.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &[Option<Tensor<T>>]) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::shape(
                "adam_step",
                format!("{} parameters, {} gradients", params.len(), grads.len()),
            ));
        }
        if grads.iter().all(Option::is_none) {
            return Err(Error::EmptyGradients);
        }
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (T::of(c.betas.0), T::of(c.betas.1));
        let bc1 = T::of(1.0 - libm::pow(c.betas.0, self.t as f64));
        let bc2 = T::of(1.0 - libm::pow(c.betas.1, self.t as f64));
        let (lr, eps) = (T::of(c.lr), T::of(c.eps));
        let decay = T::one() - T::of(c.lr * c.weight_decay);
        for (((p, g), m), v) in params
            .params_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            let Some(g) = g.as_ref().filter(|_| p.trainable) else {
                continue;
            };
            if g.shape() != p.value.shape() {
                return Err(Error::shape(
                    "adam_step",
                    format!("{}: grad {:?} vs {:?}", p.name, g.shape(), p.value.shape()),
                ));
            }
            for (((w, &gi), mi), vi) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                if c.weight_decay > 0.0 {
                    *w = *w * decay;
                }
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                *w = *w - lr * (*mi / bc1) / ((*vi / bc2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;
    use alloc::vec;

    fn single(v: f64) -> ParamSet<f64> {
        let mut ps = ParamSet::new();
        ps.add("theta", Tensor::new(&[1], vec![v]).unwrap(), true).unwrap();
        ps
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [1e-3, 0.5, 40.0, -2.0] {
            let mut ps = single(1.0);
            let mut opt = Adam::new(AdamConfig::adam(0.01, (0.5, 0.999)), &ps);
            opt.step(&mut ps, &[Some(Tensor::full(&[1], g))]).unwrap();
            let moved = 1.0 - ps.params()[0].value.data()[0];
            assert!((moved.abs() - 0.01).abs() < 1e-6, "g={g} moved {moved}");
            assert_eq!(moved.signum(), g.signum());
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut ps = single(0.7);
        let mut opt = Adam::new(AdamConfig::adam(0.1, (0.9, 0.999)), &ps);
        for _ in 0..5 {
            opt.step(&mut ps, &[Some(Tensor::zeros(&[1]))]).unwrap();
        }
        assert_eq!(ps.params()[0].value.data(), &[0.7]);
        assert_eq!(opt.step(&mut ps, &[None]), Err(Error::EmptyGradients));
    }

    #[test]
    fn decoupled_decay_applies_before_update() {
        let mut ps = single(2.0);
        let mut opt = Adam::new(AdamConfig::adamw(0.1, (0.9, 0.999), 0.5), &ps);
        opt.step(&mut ps, &[Some(Tensor::zeros(&[1]))]).unwrap();
        assert!((ps.params()[0].value.data()[0] - 2.0 * (1.0 - 0.05)).abs() < 1e-12);
    }

    #[test]
    fn quadratic_converges_like_scalar_simulation() {
        // Independent scalar Adam on f(θ) = θ².
        let (lr, b1, b2, eps) = (0.1f64, 0.9f64, 0.999f64, 1e-8f64);
        let (mut th, mut m, mut v) = (1.0f64, 0.0, 0.0);
        for t in 1..=100 {
            let g = 2.0 * th;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            th -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        }
        assert!(th.abs() < 0.05);

        let mut ps = single(1.0);
        let mut opt = Adam::new(AdamConfig::adam(lr, (b1, b2)), &ps);
        for _ in 0..100 {
            let mut tape = Tape::new();
            let vars = ps.bind(&mut tape).unwrap();
            let sq = tape.mul(vars[0], vars[0]).unwrap();
            let loss = tape.sum(sq).unwrap();
            let mut g = tape.backward(loss).unwrap();
            let grads = ps.collect_grads(&mut g, &vars);
            opt.step(&mut ps, &grads).unwrap();
        }
        let got = ps.params()[0].value.data()[0];
        assert!(got.abs() < 0.05);
        assert!((got - th).abs() < 1e-12);
    }
}
