//! AdamW with decoupled weight decay.
//!
//! Decay multiplies matrix parameters by `1 - lr * wd` before the moment
//! update; vectors (biases, norm gains) are never decayed. Moments are
//! bias-corrected, so the very first step already moves at full scale.

use super::tensor::{real, Real, Tensor};
use super::ModelParams;

#[derive(Debug, Clone)]
pub struct AdamWState<F> {
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
    step: u64,
}

pub const ADAM_EPS: f64 = 1e-8;

impl<F: Real> AdamWState<F> {
    pub fn new(params: &ModelParams<F>) -> Self {
        let m = params.tensors().iter().map(|t| vec![F::zero(); t.numel()]).collect();
        let v = params.tensors().iter().map(|t| vec![F::zero(); t.numel()]).collect();
        Self { m, v, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update. `grads` must mirror `params` structurally.
    pub fn step(
        &mut self,
        params: &mut ModelParams<F>,
        grads: &ModelParams<F>,
        lr: f64,
        betas: (f64, f64),
        weight_decay: f64,
    ) {
        self.step += 1;
        let t = self.step as i32;
        let b1 = real::<F>(betas.0);
        let b2 = real::<F>(betas.1);
        let one = F::one();
        let bc1 = one - b1.powi(t);
        let bc2 = one - b2.powi(t);
        let lr_f = real::<F>(lr);
        let eps = real::<F>(ADAM_EPS);
        let decay_mul = real::<F>(1.0 - lr * weight_decay);

        let grad_tensors: Vec<&Tensor<F>> = grads.tensors();
        for ((param, grad), (m, v)) in params
            .tensors_mut()
            .into_iter()
            .zip(grad_tensors)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let decay = param.is_decayable() && weight_decay != 0.0;
            for i in 0..param.data.len() {
                if decay {
                    param.data[i] *= decay_mul;
                }
                let g = grad.data[i];
                m[i] = b1 * m[i] + (one - b1) * g;
                v[i] = b2 * v[i] + (one - b2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                param.data[i] -= lr_f * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Backbone, ModelConfig};

    fn one_param_model(value: f64) -> (ModelParams<f64>, ModelConfig) {
        // Smallest valid transformer; we poke a single scalar weight.
        let cfg = ModelConfig {
            backbone: Backbone::Transformer,
            d_model: 2,
            n_layers: 1,
            n_heads: 1,
            d_state: 1,
            max_seq_len: 4,
            vocab_size: 3,
            dropout_rate: 0.0,
        };
        let mut params = ModelParams::<f64>::init(&cfg, 0).unwrap();
        for t in params.tensors_mut() {
            t.zero();
        }
        if let ModelParams::Transformer(p) = &mut params {
            p.tok_emb.data[0] = value;
        }
        (params, cfg)
    }

    #[test]
    fn hand_computed_first_step() {
        // w = 1, g = 1, lr = 0.1, betas (0.9, 0.999), wd = 0:
        // m_hat = v_hat = 1, so w' = 1 - 0.1 / (1 + 1e-8).
        let (mut params, _) = one_param_model(1.0);
        let mut grads = params.zeros_like();
        if let ModelParams::Transformer(g) = &mut grads {
            g.tok_emb.data[0] = 1.0;
        }
        let mut state = AdamWState::new(&params);
        state.step(&mut params, &grads, 0.1, (0.9, 0.999), 0.0);
        let w = match &params {
            ModelParams::Transformer(p) => p.tok_emb.data[0],
            _ => unreachable!(),
        };
        let expect = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8));
        assert!((w - expect).abs() < 1e-15, "w = {w}, expect = {expect}");
        assert!((w - 0.9).abs() < 1e-7);
    }

    #[test]
    fn pure_decay_shrinks_geometrically() {
        let (mut params, _) = one_param_model(1.0);
        let grads = params.zeros_like();
        let mut state = AdamWState::new(&params);
        let lr = 0.05;
        let wd = 1e-4;
        for _ in 0..10 {
            state.step(&mut params, &grads, lr, (0.9, 0.999), wd);
        }
        let w = match &params {
            ModelParams::Transformer(p) => p.tok_emb.data[0],
            _ => unreachable!(),
        };
        let expect = (1.0 - lr * wd).powi(10);
        assert!((w - expect).abs() < 1e-12, "w = {w}, expect = {expect}");
    }

    #[test]
    fn identical_calls_produce_identical_state() {
        let run = || {
            let (mut params, _) = one_param_model(0.5);
            let mut grads = params.zeros_like();
            if let ModelParams::Transformer(g) = &mut grads {
                g.tok_emb.data[0] = -0.3;
                g.tok_emb.data[1] = 0.7;
            }
            let mut state = AdamWState::new(&params);
            for _ in 0..5 {
                state.step(&mut params, &grads, 3e-4, (0.9, 0.999), 1e-4);
            }
            match params {
                ModelParams::Transformer(p) => p.tok_emb.data.clone(),
                _ => unreachable!(),
            }
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn biases_are_not_decayed() {
        let (mut params, _) = one_param_model(0.0);
        if let ModelParams::Transformer(p) = &mut params {
            p.layers[0].bq.data[0] = 1.0;
        }
        let grads = params.zeros_like();
        let mut state = AdamWState::new(&params);
        state.step(&mut params, &grads, 0.1, (0.9, 0.999), 0.5);
        if let ModelParams::Transformer(p) = &params {
            assert_eq!(p.layers[0].bq.data[0], 1.0);
        }
    }
}
