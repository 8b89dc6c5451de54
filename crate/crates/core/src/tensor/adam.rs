use serde::{Deserialize, Serialize};

use super::{ParamGrads, ParamSet, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Added to the root of the second moment.
    pub delta: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            delta: 1e-8,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("non-finite gradient for parameter {name}")]
pub struct NonFiniteGradient {
    pub name: String,
}

/// Bias-corrected Adam with per-parameter moment buffers.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &ParamSet<T>, config: AdamConfig) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|(_, _, v)| Tensor::zeros(v.rows(), v.cols()))
                .collect::<Vec<_>>()
        };
        Self {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    /// Applies one update. Rejects the whole step, leaving parameters and
    /// moments untouched, if any gradient is non-finite.
    pub fn step(
        &mut self,
        params: &mut ParamSet<T>,
        grads: &ParamGrads<T>,
    ) -> Result<(), NonFiniteGradient> {
        assert_eq!(params.len(), grads.len(), "gradient/parameter count mismatch");
        if let Some((id, _)) = grads.iter().find(|(_, g)| !g.is_finite()) {
            return Err(NonFiniteGradient {
                name: params.name(id).to_string(),
            });
        }
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let bias1 = T::lit(1.0 - c.beta1.powi(self.step as i32));
        let bias2 = T::lit(1.0 - c.beta2.powi(self.step as i32));
        let (lr, delta) = (T::lit(c.learning_rate), T::lit(c.delta));
        for (id, g) in grads.iter() {
            let i = id.index();
            let theta = params.get_mut(id).data_mut();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for k in 0..theta.len() {
                let gk = g.data()[k];
                m[k] = b1 * m[k] + (T::one() - b1) * gk;
                v[k] = b2 * v[k] + (T::one() - b2) * gk * gk;
                let m_hat = m[k] / bias1;
                let v_hat = v[k] / bias2;
                theta[k] = theta[k] - lr * m_hat / (v_hat.sqrt() + delta);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    fn scalar_param(x: f64) -> ParamSet<f64> {
        let mut p = ParamSet::new();
        p.insert("theta", Tensor::scalar(x));
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = scalar_param(1.5);
        let mut adam = Adam::new(&p, AdamConfig::default());
        let g = ParamGrads::zeros_like(&p);
        adam.step(&mut p, &g).unwrap();
        assert_eq!(p.by_name("theta").unwrap().item(), 1.5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g = 1, v̂ = g² = 1 after bias correction, so Δ = lr / (1 + δ).
        let mut p = scalar_param(0.0);
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(&p, cfg);
        let mut tape = Tape::new();
        let id = p.id("theta").unwrap();
        let th = tape.param(&p, id);
        let loss = tape.sum(th);
        let grads = tape.backward(loss).unwrap();
        let g = p.collect_grads(&tape, &grads);
        adam.step(&mut p, &g).unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((p.get(id).item() - expected).abs() < 1e-15);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut p = scalar_param(1.0);
        let id = p.id("theta").unwrap();
        let mut adam = Adam::new(
            &p,
            AdamConfig {
                learning_rate: 0.05,
                ..AdamConfig::default()
            },
        );
        for _ in 0..200 {
            let mut tape = Tape::new();
            let th = tape.param(&p, id);
            let sq = tape.mul(th, th).unwrap();
            let loss = tape.sum(sq);
            let grads = tape.backward(loss).unwrap();
            let g = p.collect_grads(&tape, &grads);
            adam.step(&mut p, &g).unwrap();
        }
        assert!(p.get(id).item().abs() < 1e-2, "theta = {}", p.get(id).item());
    }

    #[test]
    fn non_finite_gradient_is_named() {
        let mut p = scalar_param(0.0);
        let mut adam = Adam::new(&p, AdamConfig::default());
        let mut p2 = p.clone();
        let id = p2.id("theta").unwrap();
        p2.get_mut(id).data_mut()[0] = f64::NAN;
        let mut tape = Tape::new();
        let th = tape.param(&p2, id);
        let loss = tape.sum(th);
        let grads = tape.backward(loss).unwrap();
        let mut g = p2.collect_grads(&tape, &grads);
        let mut bad = ParamGrads::zeros_like(&p);
        bad.accumulate(&g, f64::NAN);
        g = bad;
        let err = adam.step(&mut p, &g).unwrap_err();
        assert_eq!(err.name, "theta");
        assert_eq!(p.get(id).item(), 0.0);
    }
}
