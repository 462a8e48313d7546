//! Desk-scale multimodal speech recognition testbed.
//!
//! The crate covers the full experimental loop on a synthetic corpus:
//!
//! * [`corpus`] — deterministic generation of the three-equations corpus with
//!   audio, lip, image, OCR, and raster token streams, plus an SNR-driven
//!   noise channel.
//! * [`vocab`] / [`assembly`] — a partitioned token vocabulary and the packing
//!   of per-modality streams into a single decoder input sequence.
//! * [`model`] — from-scratch causal Transformer and selective state-space
//!   backbones with hand-written backprop, modality-weighted loss, AdamW,
//!   early stopping, and greedy decoding.
//! * [`metrics`] / [`eval`] — text normalization, word-level alignment, WER,
//!   relative benefit, perceptual score, and reshuffle significance windows.

pub mod assembly;
pub mod corpus;
pub mod eval;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod vocab;
