//! Rough training-throughput probe: times forward+backward for both
//! backbones at the desk-scale model size over a realistic sequence length.
//!
//! Run with `cargo run --release -p mmasr-core --example throughput`.

use std::time::Instant;

use mmasr_core::assembly::SequenceLayout;
use mmasr_core::model::{
    loss_backward, modality_weighted_loss, Backbone, LossWeights, ModelConfig, ModelParams, Real,
};
use mmasr_core::vocab::{build_vocab, Modality, Token};

fn layout(len: usize) -> SequenceLayout {
    let tokens: Vec<Token> = (0..len).map(|i| (i % 90) as Token).collect();
    let cut = len * 2 / 3;
    SequenceLayout {
        spans: vec![(Modality::Audio, 0, cut), (Modality::Text, cut, len)],
        target_mask: (0..len).map(|t| t + 1 < len).collect(),
        text_start: cut + 1,
        tokens,
    }
}

fn bench<F: Real>(backbone: Backbone, len: usize, label: &str) {
    let vocab = build_vocab();
    let cfg = ModelConfig {
        backbone,
        d_model: 128,
        n_layers: 2,
        n_heads: 4,
        d_state: 16,
        max_seq_len: 1024,
        vocab_size: vocab.size(),
        dropout_rate: 0.0,
    };
    let params = ModelParams::<F>::init(&cfg, 1).unwrap();
    let seq = layout(len);
    let weights = LossWeights::default();
    let mut grads = params.zeros_like();

    // Warm up, then time.
    for _ in 0..2 {
        let (logits, cache) = params.forward_train(&seq.tokens, None).unwrap();
        let d = loss_backward(&logits, cfg.vocab_size, &seq, &weights, 1.0);
        params.backward(&seq.tokens, &cache, &d, &mut grads);
    }
    let reps = 10;
    let start = Instant::now();
    let mut sink = 0.0;
    for _ in 0..reps {
        let (logits, cache) = params.forward_train(&seq.tokens, None).unwrap();
        sink += modality_weighted_loss(&logits, cfg.vocab_size, &seq, &weights).total;
        let d = loss_backward(&logits, cfg.vocab_size, &seq, &weights, 1.0);
        params.backward(&seq.tokens, &cache, &d, &mut grads);
    }
    let per = start.elapsed().as_secs_f64() / reps as f64;
    println!("{label:18} T={len:4}  fwd+bwd {:7.2} ms/seq  ({sink:.3})", per * 1e3);
}

fn main() {
    for &len in &[200, 300, 450, 800] {
        bench::<f32>(Backbone::Transformer, len, "transformer f32");
    }
    for &len in &[200, 300, 450, 800] {
        bench::<f32>(Backbone::Ssm, len, "ssm f32");
    }
    bench::<f64>(Backbone::Transformer, 300, "transformer f64");
    bench::<f64>(Backbone::Ssm, 300, "ssm f64");
}
