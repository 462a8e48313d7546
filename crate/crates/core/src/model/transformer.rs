//! Causal Transformer with trained absolute positional embeddings.
//!
//! Pre-norm blocks: `x += Attn(LN(x))`, `x += MLP(LN(x))`, with a final
//! layer norm before the output projection. Positional embeddings are added
//! element-wise to the token embeddings. Attention only ever sums over
//! positions `j <= i`, so causality is exact rather than masked-by-minus-inf.

use rand_chacha::ChaCha8Rng;

use super::tensor::{
    axpy, dot, layernorm_backward, layernorm_forward, linear_backward, linear_forward, real,
    softmax_inplace, Real, Tensor,
};
use super::{ModelConfig, ModelError};
use crate::rng::stream;
use crate::vocab::Token;

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerLayer<F> {
    pub ln1_gain: Tensor<F>,
    pub ln1_bias: Tensor<F>,
    pub wq: Tensor<F>,
    pub bq: Tensor<F>,
    pub wk: Tensor<F>,
    pub bk: Tensor<F>,
    pub wv: Tensor<F>,
    pub bv: Tensor<F>,
    pub wo: Tensor<F>,
    pub bo: Tensor<F>,
    pub ln2_gain: Tensor<F>,
    pub ln2_bias: Tensor<F>,
    pub w_up: Tensor<F>,
    pub b_up: Tensor<F>,
    pub w_down: Tensor<F>,
    pub b_down: Tensor<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerParams<F> {
    pub config: ModelConfig,
    pub tok_emb: Tensor<F>,
    pub pos_emb: Tensor<F>,
    pub layers: Vec<TransformerLayer<F>>,
    pub lnf_gain: Tensor<F>,
    pub lnf_bias: Tensor<F>,
    pub w_head: Tensor<F>,
}

pub struct TfLayerCache<F> {
    x_in: Vec<F>,
    ln1_out: Vec<F>,
    ln1_stats: Vec<(F, F)>,
    q: Vec<F>,
    k: Vec<F>,
    v: Vec<F>,
    /// Per head, attention weights flattened over the lower triangle:
    /// row `i` occupies `[i(i+1)/2, i(i+1)/2 + i + 1)`.
    att: Vec<Vec<F>>,
    ho: Vec<F>,
    attn_mask: Option<Vec<F>>,
    x_mid: Vec<F>,
    ln2_out: Vec<F>,
    ln2_stats: Vec<(F, F)>,
    h_pre: Vec<F>,
    h_act: Vec<F>,
    mlp_mask: Option<Vec<F>>,
}

pub struct TfCache<F> {
    layers: Vec<TfLayerCache<F>>,
    x_final: Vec<F>,
    lnf_out: Vec<F>,
    lnf_stats: Vec<(F, F)>,
}

/// Growing key/value cache for incremental decoding.
pub struct TfDecodeState<F> {
    k: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
    len: usize,
}

pub(crate) fn dropout_mask<F: Real>(len: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<F> {
    use rand::Rng;
    let keep = real::<F>(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| if rng.gen::<f64>() < rate { F::zero() } else { keep })
        .collect()
}

impl<F: Real> TransformerParams<F> {
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let d = config.d_model;
        let h = 4 * d;
        let v = config.vocab_size;
        let mut rng = stream(seed);
        let base = 0.02;
        // Residual-branch projections start smaller, scaled by depth.
        let resid = base / (2.0 * config.n_layers as f64).sqrt();
        let tok_emb = Tensor::randn(&[v, d], base, &mut rng);
        let pos_emb = Tensor::randn(&[config.max_seq_len, d], base, &mut rng);
        let layers = (0..config.n_layers)
            .map(|_| TransformerLayer {
                ln1_gain: Tensor::filled(&[d], F::one()),
                ln1_bias: Tensor::zeros(&[d]),
                wq: Tensor::randn(&[d, d], base, &mut rng),
                bq: Tensor::zeros(&[d]),
                wk: Tensor::randn(&[d, d], base, &mut rng),
                bk: Tensor::zeros(&[d]),
                wv: Tensor::randn(&[d, d], base, &mut rng),
                bv: Tensor::zeros(&[d]),
                wo: Tensor::randn(&[d, d], resid, &mut rng),
                bo: Tensor::zeros(&[d]),
                ln2_gain: Tensor::filled(&[d], F::one()),
                ln2_bias: Tensor::zeros(&[d]),
                w_up: Tensor::randn(&[h, d], base, &mut rng),
                b_up: Tensor::zeros(&[h]),
                w_down: Tensor::randn(&[d, h], resid, &mut rng),
                b_down: Tensor::zeros(&[d]),
            })
            .collect();
        Self {
            config: config.clone(),
            tok_emb,
            pos_emb,
            layers,
            lnf_gain: Tensor::filled(&[d], F::one()),
            lnf_bias: Tensor::zeros(&[d]),
            w_head: Tensor::randn(&[v, d], base, &mut rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let zero = |t: &Tensor<F>| Tensor::zeros(&t.shape);
        Self {
            config: self.config.clone(),
            tok_emb: zero(&self.tok_emb),
            pos_emb: zero(&self.pos_emb),
            layers: self
                .layers
                .iter()
                .map(|l| TransformerLayer {
                    ln1_gain: zero(&l.ln1_gain),
                    ln1_bias: zero(&l.ln1_bias),
                    wq: zero(&l.wq),
                    bq: zero(&l.bq),
                    wk: zero(&l.wk),
                    bk: zero(&l.bk),
                    wv: zero(&l.wv),
                    bv: zero(&l.bv),
                    wo: zero(&l.wo),
                    bo: zero(&l.bo),
                    ln2_gain: zero(&l.ln2_gain),
                    ln2_bias: zero(&l.ln2_bias),
                    w_up: zero(&l.w_up),
                    b_up: zero(&l.b_up),
                    w_down: zero(&l.w_down),
                    b_down: zero(&l.b_down),
                })
                .collect(),
            lnf_gain: zero(&self.lnf_gain),
            lnf_bias: zero(&self.lnf_bias),
            w_head: zero(&self.w_head),
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor<F>> {
        let mut out = vec![&self.tok_emb, &self.pos_emb];
        for l in &self.layers {
            out.extend([
                &l.ln1_gain, &l.ln1_bias, &l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo,
                &l.bo, &l.ln2_gain, &l.ln2_bias, &l.w_up, &l.b_up, &l.w_down, &l.b_down,
            ]);
        }
        out.extend([&self.lnf_gain, &self.lnf_bias, &self.w_head]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out: Vec<&mut Tensor<F>> = vec![&mut self.tok_emb, &mut self.pos_emb];
        for l in &mut self.layers {
            out.push(&mut l.ln1_gain);
            out.push(&mut l.ln1_bias);
            out.push(&mut l.wq);
            out.push(&mut l.bq);
            out.push(&mut l.wk);
            out.push(&mut l.bk);
            out.push(&mut l.wv);
            out.push(&mut l.bv);
            out.push(&mut l.wo);
            out.push(&mut l.bo);
            out.push(&mut l.ln2_gain);
            out.push(&mut l.ln2_bias);
            out.push(&mut l.w_up);
            out.push(&mut l.b_up);
            out.push(&mut l.w_down);
            out.push(&mut l.b_down);
        }
        out.push(&mut self.lnf_gain);
        out.push(&mut self.lnf_bias);
        out.push(&mut self.w_head);
        out
    }

    fn embed(&self, tokens: &[Token]) -> Vec<F> {
        let d = self.config.d_model;
        let mut x = Vec::with_capacity(tokens.len() * d);
        for (pos, &t) in tokens.iter().enumerate() {
            let te = self.tok_emb.row(t as usize);
            let pe = self.pos_emb.row(pos);
            x.extend(te.iter().zip(pe).map(|(&a, &b)| a + b));
        }
        x
    }

    pub fn forward(
        &self,
        tokens: &[Token],
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> (Vec<F>, TfCache<F>) {
        let t_len = tokens.len();
        let d = self.config.d_model;
        let heads = self.config.n_heads;
        let hd = d / heads;
        let scale = real::<F>(1.0 / (hd as f64).sqrt());
        let rate = self.config.dropout_rate;

        let mut x = self.embed(tokens);
        let mut layer_caches = Vec::with_capacity(self.layers.len());

        for layer in &self.layers {
            let x_in = x.clone();

            // Attention branch.
            let mut ln1_out = vec![F::zero(); t_len * d];
            let mut ln1_stats = Vec::with_capacity(t_len);
            for t in 0..t_len {
                let stats = layernorm_forward(
                    &x_in[t * d..(t + 1) * d],
                    &layer.ln1_gain.data,
                    &layer.ln1_bias.data,
                    &mut ln1_out[t * d..(t + 1) * d],
                );
                ln1_stats.push(stats);
            }
            let mut q = Vec::new();
            let mut k = Vec::new();
            let mut v = Vec::new();
            linear_forward(&ln1_out, t_len, &layer.wq, Some(&layer.bq), &mut q);
            linear_forward(&ln1_out, t_len, &layer.wk, Some(&layer.bk), &mut k);
            linear_forward(&ln1_out, t_len, &layer.wv, Some(&layer.bv), &mut v);

            let tri = t_len * (t_len + 1) / 2;
            let mut att: Vec<Vec<F>> = vec![vec![F::zero(); tri]; heads];
            let mut ho = vec![F::zero(); t_len * d];
            for h in 0..heads {
                let off = h * hd;
                let att_h = &mut att[h];
                for i in 0..t_len {
                    let qi = &q[i * d + off..i * d + off + hd];
                    let row = &mut att_h[i * (i + 1) / 2..i * (i + 1) / 2 + i + 1];
                    for (j, slot) in row.iter_mut().enumerate() {
                        *slot = dot(qi, &k[j * d + off..j * d + off + hd]) * scale;
                    }
                    softmax_inplace(row);
                    let out = &mut ho[i * d + off..i * d + off + hd];
                    for (j, &a) in row.iter().enumerate() {
                        axpy(a, &v[j * d + off..j * d + off + hd], out);
                    }
                }
            }
            let mut attn_out = Vec::new();
            linear_forward(&ho, t_len, &layer.wo, Some(&layer.bo), &mut attn_out);
            let attn_mask = match (&mut dropout, rate > 0.0) {
                (Some(rng), true) => {
                    let mask = dropout_mask::<F>(t_len * d, rate, rng);
                    for (o, m) in attn_out.iter_mut().zip(&mask) {
                        *o *= *m;
                    }
                    Some(mask)
                }
                _ => None,
            };
            for (xi, &a) in x.iter_mut().zip(&attn_out) {
                *xi += a;
            }
            let x_mid = x.clone();

            // MLP branch.
            let mut ln2_out = vec![F::zero(); t_len * d];
            let mut ln2_stats = Vec::with_capacity(t_len);
            for t in 0..t_len {
                let stats = layernorm_forward(
                    &x_mid[t * d..(t + 1) * d],
                    &layer.ln2_gain.data,
                    &layer.ln2_bias.data,
                    &mut ln2_out[t * d..(t + 1) * d],
                );
                ln2_stats.push(stats);
            }
            let mut h_pre = Vec::new();
            linear_forward(&ln2_out, t_len, &layer.w_up, Some(&layer.b_up), &mut h_pre);
            let h_act: Vec<F> = h_pre.iter().map(|&z| z.max(F::zero())).collect();
            let mut mlp_out = Vec::new();
            linear_forward(&h_act, t_len, &layer.w_down, Some(&layer.b_down), &mut mlp_out);
            let mlp_mask = match (&mut dropout, rate > 0.0) {
                (Some(rng), true) => {
                    let mask = dropout_mask::<F>(t_len * d, rate, rng);
                    for (o, m) in mlp_out.iter_mut().zip(&mask) {
                        *o *= *m;
                    }
                    Some(mask)
                }
                _ => None,
            };
            for (xi, &m) in x.iter_mut().zip(&mlp_out) {
                *xi += m;
            }

            layer_caches.push(TfLayerCache {
                x_in,
                ln1_out,
                ln1_stats,
                q,
                k,
                v,
                att,
                ho,
                attn_mask,
                x_mid,
                ln2_out,
                ln2_stats,
                h_pre,
                h_act,
                mlp_mask,
            });
        }

        let mut lnf_out = vec![F::zero(); t_len * d];
        let mut lnf_stats = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let stats = layernorm_forward(
                &x[t * d..(t + 1) * d],
                &self.lnf_gain.data,
                &self.lnf_bias.data,
                &mut lnf_out[t * d..(t + 1) * d],
            );
            lnf_stats.push(stats);
        }
        let mut logits = Vec::new();
        linear_forward(&lnf_out, t_len, &self.w_head, None, &mut logits);

        (
            logits,
            TfCache {
                layers: layer_caches,
                x_final: x,
                lnf_out,
                lnf_stats,
            },
        )
    }

    pub fn backward(
        &self,
        tokens: &[Token],
        cache: &TfCache<F>,
        dlogits: &[F],
        grads: &mut Self,
    ) {
        let t_len = tokens.len();
        let d = self.config.d_model;
        let heads = self.config.n_heads;
        let hd = d / heads;
        let scale = real::<F>(1.0 / (hd as f64).sqrt());

        // Head projection.
        let mut d_lnf = vec![F::zero(); t_len * d];
        linear_backward(
            &cache.lnf_out,
            t_len,
            &self.w_head,
            dlogits,
            &mut d_lnf,
            &mut grads.w_head,
            None,
        );

        // Final layer norm. `dx` carries dL/dx for the running residual
        // stream as we walk backwards.
        let mut dx = vec![F::zero(); t_len * d];
        let x_final = &cache.x_final;
        for t in 0..t_len {
            let (mean, rstd) = cache.lnf_stats[t];
            layernorm_backward(
                &x_final[t * d..(t + 1) * d],
                &self.lnf_gain.data,
                mean,
                rstd,
                &d_lnf[t * d..(t + 1) * d],
                &mut dx[t * d..(t + 1) * d],
                &mut grads.lnf_gain.data,
                &mut grads.lnf_bias.data,
            );
        }

        for (layer, (lc, gl)) in self
            .layers
            .iter()
            .zip(cache.layers.iter().zip(grads.layers.iter_mut()))
            .rev()
        {
            // MLP branch backward: x_out = x_mid + drop(mlp_out).
            let mut d_mlp = dx.clone();
            if let Some(mask) = &lc.mlp_mask {
                for (g, &m) in d_mlp.iter_mut().zip(mask) {
                    *g *= m;
                }
            }
            let mut d_hact = vec![F::zero(); t_len * 4 * d];
            linear_backward(
                &lc.h_act,
                t_len,
                &layer.w_down,
                &d_mlp,
                &mut d_hact,
                &mut gl.w_down,
                Some(&mut gl.b_down),
            );
            for (g, &z) in d_hact.iter_mut().zip(&lc.h_pre) {
                if z <= F::zero() {
                    *g = F::zero();
                }
            }
            let mut d_ln2 = vec![F::zero(); t_len * d];
            linear_backward(
                &lc.ln2_out,
                t_len,
                &layer.w_up,
                &d_hact,
                &mut d_ln2,
                &mut gl.w_up,
                Some(&mut gl.b_up),
            );
            for t in 0..t_len {
                let (mean, rstd) = lc.ln2_stats[t];
                layernorm_backward(
                    &lc.x_mid[t * d..(t + 1) * d],
                    &layer.ln2_gain.data,
                    mean,
                    rstd,
                    &d_ln2[t * d..(t + 1) * d],
                    &mut dx[t * d..(t + 1) * d],
                    &mut gl.ln2_gain.data,
                    &mut gl.ln2_bias.data,
                );
            }

            // Attention branch backward: x_mid = x_in + drop(attn_out).
            let mut d_attn = dx.clone();
            if let Some(mask) = &lc.attn_mask {
                for (g, &m) in d_attn.iter_mut().zip(mask) {
                    *g *= m;
                }
            }
            let mut d_ho = vec![F::zero(); t_len * d];
            linear_backward(
                &lc.ho,
                t_len,
                &layer.wo,
                &d_attn,
                &mut d_ho,
                &mut gl.wo,
                Some(&mut gl.bo),
            );

            let mut dq = vec![F::zero(); t_len * d];
            let mut dk = vec![F::zero(); t_len * d];
            let mut dv = vec![F::zero(); t_len * d];
            for h in 0..heads {
                let off = h * hd;
                let att_h = &lc.att[h];
                for i in 0..t_len {
                    let row = &att_h[i * (i + 1) / 2..i * (i + 1) / 2 + i + 1];
                    let dho_i = &d_ho[i * d + off..i * d + off + hd];
                    // da_j = v_j . dho_i ; dv_j += a_j dho_i
                    let mut da = vec![F::zero(); i + 1];
                    for j in 0..=i {
                        da[j] = dot(&lc.v[j * d + off..j * d + off + hd], dho_i);
                        axpy(row[j], dho_i, &mut dv[j * d + off..j * d + off + hd]);
                    }
                    // Softmax backward: ds_j = a_j (da_j - sum_k a_k da_k).
                    let inner: F = row.iter().zip(&da).map(|(&a, &g)| a * g).sum();
                    let qi = &lc.q[i * d + off..i * d + off + hd];
                    let dqi = &mut dq[i * d + off..i * d + off + hd];
                    for j in 0..=i {
                        let ds = row[j] * (da[j] - inner) * scale;
                        if ds != F::zero() {
                            axpy(ds, &lc.k[j * d + off..j * d + off + hd], dqi);
                            axpy(ds, qi, &mut dk[j * d + off..j * d + off + hd]);
                        }
                    }
                }
            }

            let mut d_ln1 = vec![F::zero(); t_len * d];
            linear_backward(&lc.ln1_out, t_len, &layer.wq, &dq, &mut d_ln1, &mut gl.wq, Some(&mut gl.bq));
            linear_backward(&lc.ln1_out, t_len, &layer.wk, &dk, &mut d_ln1, &mut gl.wk, Some(&mut gl.bk));
            linear_backward(&lc.ln1_out, t_len, &layer.wv, &dv, &mut d_ln1, &mut gl.wv, Some(&mut gl.bv));
            for t in 0..t_len {
                let (mean, rstd) = lc.ln1_stats[t];
                layernorm_backward(
                    &lc.x_in[t * d..(t + 1) * d],
                    &layer.ln1_gain.data,
                    mean,
                    rstd,
                    &d_ln1[t * d..(t + 1) * d],
                    &mut dx[t * d..(t + 1) * d],
                    &mut gl.ln1_gain.data,
                    &mut gl.ln1_bias.data,
                );
            }
        }

        // Embeddings.
        for (pos, &t) in tokens.iter().enumerate() {
            let g = &dx[pos * d..(pos + 1) * d];
            axpy(F::one(), g, grads.tok_emb.row_mut(t as usize));
            axpy(F::one(), g, grads.pos_emb.row_mut(pos));
        }
    }

    pub fn decode_state(&self) -> TfDecodeState<F> {
        TfDecodeState {
            k: vec![Vec::new(); self.layers.len()],
            v: vec![Vec::new(); self.layers.len()],
            len: 0,
        }
    }

    /// One incremental decode step; returns the logits for this position.
    pub fn step(&self, state: &mut TfDecodeState<F>, token: Token) -> Result<Vec<F>, ModelError> {
        let d = self.config.d_model;
        let heads = self.config.n_heads;
        let hd = d / heads;
        let scale = real::<F>(1.0 / (hd as f64).sqrt());
        let pos = state.len;
        if pos >= self.config.max_seq_len {
            return Err(ModelError::SequenceTooLong {
                len: pos + 1,
                max: self.config.max_seq_len,
            });
        }

        let mut x: Vec<F> = self
            .tok_emb
            .row(token as usize)
            .iter()
            .zip(self.pos_emb.row(pos))
            .map(|(&a, &b)| a + b)
            .collect();

        let mut buf = vec![F::zero(); d];
        for (li, layer) in self.layers.iter().enumerate() {
            layernorm_forward(&x, &layer.ln1_gain.data, &layer.ln1_bias.data, &mut buf);
            let mut q = vec![F::zero(); d];
            let mut krow = vec![F::zero(); d];
            let mut vrow = vec![F::zero(); d];
            for o in 0..d {
                q[o] = dot(&buf, layer.wq.row(o)) + layer.bq.data[o];
                krow[o] = dot(&buf, layer.wk.row(o)) + layer.bk.data[o];
                vrow[o] = dot(&buf, layer.wv.row(o)) + layer.bv.data[o];
            }
            state.k[li].extend_from_slice(&krow);
            state.v[li].extend_from_slice(&vrow);
            let t_all = pos + 1;

            let mut ho = vec![F::zero(); d];
            let keys = &state.k[li];
            let vals = &state.v[li];
            for h in 0..heads {
                let off = h * hd;
                let qh = &q[off..off + hd];
                let mut weights = vec![F::zero(); t_all];
                for (j, w) in weights.iter_mut().enumerate() {
                    *w = dot(qh, &keys[j * d + off..j * d + off + hd]) * scale;
                }
                softmax_inplace(&mut weights);
                let out = &mut ho[off..off + hd];
                for (j, &a) in weights.iter().enumerate() {
                    axpy(a, &vals[j * d + off..j * d + off + hd], out);
                }
            }
            for o in 0..d {
                x[o] += dot(&ho, layer.wo.row(o)) + layer.bo.data[o];
            }

            layernorm_forward(&x, &layer.ln2_gain.data, &layer.ln2_bias.data, &mut buf);
            let h_dim = 4 * d;
            let mut h_act = vec![F::zero(); h_dim];
            for (o, slot) in h_act.iter_mut().enumerate() {
                *slot = (dot(&buf, layer.w_up.row(o)) + layer.b_up.data[o]).max(F::zero());
            }
            for o in 0..d {
                x[o] += dot(&h_act, layer.w_down.row(o)) + layer.b_down.data[o];
            }
        }

        layernorm_forward(&x, &self.lnf_gain.data, &self.lnf_bias.data, &mut buf);
        let v_size = self.config.vocab_size;
        let mut logits = vec![F::zero(); v_size];
        for (o, slot) in logits.iter_mut().enumerate() {
            *slot = dot(&buf, self.w_head.row(o));
        }
        state.len += 1;
        Ok(logits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Backbone, ModelParams};
    use crate::vocab::build_vocab;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            backbone: Backbone::Transformer,
            d_model: 16,
            n_layers: 2,
            n_heads: 2,
            d_state: 4,
            max_seq_len: 32,
            vocab_size: build_vocab().size(),
            dropout_rate: 0.0,
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = tiny_config();
        let model = ModelParams::<f64>::init(&cfg, 3).unwrap();
        let tokens: Vec<Token> = vec![1, 5, 9, 2, 8];
        let a = model.forward(&tokens).unwrap();
        let b = model.forward(&tokens).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn decode_steps_match_full_forward() {
        let cfg = tiny_config();
        let model = ModelParams::<f64>::init(&cfg, 4).unwrap();
        let tokens: Vec<Token> = vec![3, 1, 4, 1, 5, 9, 2, 6];
        let logits = model.forward(&tokens).unwrap();
        let v = cfg.vocab_size;
        let mut state = model.decode_state();
        for (t, &tok) in tokens.iter().enumerate() {
            let row = model.decode_step(&mut state, tok).unwrap();
            for o in 0..v {
                let diff = (row[o] - logits[t * v + o]).abs();
                assert!(diff < 1e-9, "t={t} o={o} diff={diff}");
            }
        }
    }

    #[test]
    fn sequence_length_is_enforced() {
        let cfg = tiny_config();
        let model = ModelParams::<f64>::init(&cfg, 5).unwrap();
        let tokens: Vec<Token> = vec![0; cfg.max_seq_len + 1];
        assert!(matches!(
            model.forward(&tokens),
            Err(ModelError::SequenceTooLong { .. })
        ));
    }
}
