//! From-scratch autoregressive backbones over the shared vocabulary.
//!
//! Two interchangeable next-token models: a causal Transformer with trained
//! absolute positional embeddings, and a linear selective state-space model.
//! Both run in either f32 or f64 and come with hand-written reverse-mode
//! gradients, a modality-weighted loss, AdamW, and greedy decoding.

pub mod adamw;
pub mod checkpoint;
pub mod generate;
pub mod loss;
pub mod ssm;
pub mod tensor;
pub mod train;
pub mod transformer;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vocab::Token;

pub use adamw::AdamWState;
pub use generate::generate_greedy;
pub use loss::{loss_backward, modality_weighted_loss, LossBreakdown, LossWeights};
pub use ssm::SsmParams;
pub use tensor::{real, Real, Tensor};
pub use train::{train, EpochStats, TrainConfig, TrainResult};
pub use transformer::TransformerParams;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("sequence length {len} exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("checkpoint error at {path}: {message}")]
    Checkpoint { path: std::path::PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    Transformer,
    Ssm,
}

impl Backbone {
    pub fn name(self) -> &'static str {
        match self {
            Backbone::Transformer => "transformer",
            Backbone::Ssm => "ssm",
        }
    }
}

/// Architecture hyperparameters shared by both backbones. `n_heads` only
/// applies to the transformer and `d_state` only to the SSM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone: Backbone,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_state: usize,
    pub max_seq_len: usize,
    pub vocab_size: usize,
    pub dropout_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            backbone: Backbone::Transformer,
            d_model: 128,
            n_layers: 4,
            n_heads: 4,
            d_state: 16,
            max_seq_len: 1024,
            vocab_size: 0,
            dropout_rate: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::InvalidConfig(m));
        if self.d_model == 0 || self.n_layers == 0 || self.vocab_size == 0 || self.max_seq_len == 0
        {
            return err("dimensions must be positive".into());
        }
        if self.backbone == Backbone::Transformer {
            if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
                return err(format!(
                    "d_model {} not divisible by n_heads {}",
                    self.d_model, self.n_heads
                ));
            }
        } else if self.d_state == 0 {
            return err("d_state must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return err(format!("dropout_rate {} out of range", self.dropout_rate));
        }
        Ok(())
    }
}

/// All trainable tensors of one backbone, plus its configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams<F> {
    Transformer(TransformerParams<F>),
    Ssm(SsmParams<F>),
}

/// Forward activations kept for the backward pass.
pub enum ForwardCache<F> {
    Transformer(transformer::TfCache<F>),
    Ssm(ssm::SsmCache<F>),
}

/// Incremental decoding state (KV cache or recurrent state).
pub enum DecodeState<F> {
    Transformer(transformer::TfDecodeState<F>),
    Ssm(ssm::SsmDecodeState<F>),
}

impl<F: Real> ModelParams<F> {
    /// Fresh random initialization for the given config.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        Ok(match config.backbone {
            Backbone::Transformer => {
                ModelParams::Transformer(TransformerParams::init(config, seed))
            }
            Backbone::Ssm => ModelParams::Ssm(SsmParams::init(config, seed)),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        match self {
            ModelParams::Transformer(p) => &p.config,
            ModelParams::Ssm(p) => &p.config,
        }
    }

    pub fn backbone(&self) -> Backbone {
        self.config().backbone
    }

    /// Same structure, all tensors zeroed; holds gradients.
    pub fn zeros_like(&self) -> Self {
        match self {
            ModelParams::Transformer(p) => ModelParams::Transformer(p.zeros_like()),
            ModelParams::Ssm(p) => ModelParams::Ssm(p.zeros_like()),
        }
    }

    /// All parameter tensors in declaration order.
    pub fn tensors(&self) -> Vec<&Tensor<F>> {
        match self {
            ModelParams::Transformer(p) => p.tensors(),
            ModelParams::Ssm(p) => p.tensors(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<F>> {
        match self {
            ModelParams::Transformer(p) => p.tensors_mut(),
            ModelParams::Ssm(p) => p.tensors_mut(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    /// Logits for every position; strictly causal for both backbones.
    pub fn forward(&self, tokens: &[Token]) -> Result<Vec<F>, ModelError> {
        Ok(self.forward_train(tokens, None)?.0)
    }

    /// Forward pass that also returns the activation cache. A dropout stream
    /// enables dropout at the configured rate; masks are cached so the
    /// backward pass differentiates the sampled network exactly.
    pub fn forward_train(
        &self,
        tokens: &[Token],
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<(Vec<F>, ForwardCache<F>), ModelError> {
        let max = self.config().max_seq_len;
        if tokens.len() > max {
            return Err(ModelError::SequenceTooLong { len: tokens.len(), max });
        }
        match self {
            ModelParams::Transformer(p) => {
                let (logits, cache) = p.forward(tokens, dropout);
                Ok((logits, ForwardCache::Transformer(cache)))
            }
            ModelParams::Ssm(p) => {
                let (logits, cache) = p.forward(tokens, dropout);
                Ok((logits, ForwardCache::Ssm(cache)))
            }
        }
    }

    /// Accumulate exact gradients of the scalar loss into `grads`, given the
    /// upstream gradient w.r.t. the logits.
    pub fn backward(
        &self,
        tokens: &[Token],
        cache: &ForwardCache<F>,
        dlogits: &[F],
        grads: &mut ModelParams<F>,
    ) {
        match (self, cache, grads) {
            (ModelParams::Transformer(p), ForwardCache::Transformer(c), ModelParams::Transformer(g)) => {
                p.backward(tokens, c, dlogits, g)
            }
            (ModelParams::Ssm(p), ForwardCache::Ssm(c), ModelParams::Ssm(g)) => {
                p.backward(tokens, c, dlogits, g)
            }
            _ => panic!("mismatched params/cache/grads backbones"),
        }
    }

    pub fn decode_state(&self) -> DecodeState<F> {
        match self {
            ModelParams::Transformer(p) => DecodeState::Transformer(p.decode_state()),
            ModelParams::Ssm(p) => DecodeState::Ssm(p.decode_state()),
        }
    }

    /// Advance the decode state by one token and return that position's
    /// logits.
    pub fn decode_step(
        &self,
        state: &mut DecodeState<F>,
        token: Token,
    ) -> Result<Vec<F>, ModelError> {
        match (self, state) {
            (ModelParams::Transformer(p), DecodeState::Transformer(s)) => p.step(s, token),
            (ModelParams::Ssm(p), DecodeState::Ssm(s)) => Ok(p.step(s, token)),
            _ => panic!("mismatched params/state backbones"),
        }
    }
}
