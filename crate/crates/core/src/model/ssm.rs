//! Minimal selective state-space backbone.
//!
//! Each layer projects the normalized stream into an inner signal `u` and a
//! gate `z`, derives input-dependent `delta`, `B`, and `C` from `u`, and runs
//! a diagonal-state recurrence per channel:
//!
//! ```text
//! h[i, :] = exp(delta_i * A[i, :]) .* h[i, :] + delta_i * B * u_i
//! y_i     = C . h[i, :] + D_i * u_i
//! ```
//!
//! The gated result `y * silu(z)` is projected back and added to the
//! residual stream. The scan walks positions strictly left to right, so the
//! model is causal by construction. `A = -exp(a_log)` keeps every decay in
//! (0, 1).

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{
    dot, layernorm_backward, layernorm_forward, linear_backward, linear_forward, real, sigmoid,
    softplus, Real, Tensor,
};
use super::transformer::dropout_mask;
use super::ModelConfig;
use crate::rng::stream;
use crate::vocab::Token;

#[derive(Debug, Clone, PartialEq)]
pub struct SsmLayer<F> {
    pub ln_gain: Tensor<F>,
    pub ln_bias: Tensor<F>,
    /// Projects the stream to `(u, z)`: `[2d, d]`.
    pub w_in: Tensor<F>,
    pub b_in: Tensor<F>,
    /// Delta projection `[d, d]` plus bias initialized for small step sizes.
    pub w_dt: Tensor<F>,
    pub b_dt: Tensor<F>,
    /// Input-dependent state matrices: `[n, d]` each.
    pub w_b: Tensor<F>,
    pub w_c: Tensor<F>,
    /// State transition log-magnitudes `[d, n]`; `A = -exp(a_log)`.
    pub a_log: Tensor<F>,
    /// Skip connection weight per channel.
    pub d_skip: Tensor<F>,
    pub w_out: Tensor<F>,
    pub b_out: Tensor<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsmParams<F> {
    pub config: ModelConfig,
    pub tok_emb: Tensor<F>,
    pub layers: Vec<SsmLayer<F>>,
    pub lnf_gain: Tensor<F>,
    pub lnf_bias: Tensor<F>,
    pub w_head: Tensor<F>,
}

pub struct SsmLayerCache<F> {
    x_in: Vec<F>,
    ln_out: Vec<F>,
    ln_stats: Vec<(F, F)>,
    u: Vec<F>,
    z: Vec<F>,
    dt_pre: Vec<F>,
    delta: Vec<F>,
    bmat: Vec<F>,
    cmat: Vec<F>,
    /// `[T, d, n]` decays and post-update states for the backward scan.
    decay: Vec<F>,
    h_seq: Vec<F>,
    y: Vec<F>,
    gated: Vec<F>,
    out_mask: Option<Vec<F>>,
}

pub struct SsmCache<F> {
    layers: Vec<SsmLayerCache<F>>,
    x_final: Vec<F>,
    lnf_out: Vec<F>,
    lnf_stats: Vec<(F, F)>,
}

/// Recurrent state per layer: `[d, n]`.
pub struct SsmDecodeState<F> {
    h: Vec<Vec<F>>,
}

impl<F: Real> SsmParams<F> {
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let d = config.d_model;
        let n = config.d_state;
        let v = config.vocab_size;
        let mut rng = stream(seed);
        let base = 0.02;
        let resid = base / (2.0 * config.n_layers as f64).sqrt();
        let tok_emb = Tensor::randn(&[v, d], base, &mut rng);
        let layers = (0..config.n_layers)
            .map(|_| {
                let mut a_log = Tensor::zeros(&[d, n]);
                for i in 0..d {
                    for j in 0..n {
                        a_log.data[i * n + j] = real(((j + 1) as f64).ln());
                    }
                }
                // Step sizes start log-uniform in [1e-3, 1e-1].
                let mut b_dt = Tensor::zeros(&[d]);
                for slot in &mut b_dt.data {
                    let log_dt = rng.gen_range(-3.0f64..-1.0) * std::f64::consts::LN_10;
                    let dt = log_dt.exp();
                    *slot = real((dt.exp_m1()).ln());
                }
                SsmLayer {
                    ln_gain: Tensor::filled(&[d], F::one()),
                    ln_bias: Tensor::zeros(&[d]),
                    w_in: Tensor::randn(&[2 * d, d], base, &mut rng),
                    b_in: Tensor::zeros(&[2 * d]),
                    w_dt: Tensor::randn(&[d, d], base, &mut rng),
                    b_dt,
                    w_b: Tensor::randn(&[n, d], base, &mut rng),
                    w_c: Tensor::randn(&[n, d], base, &mut rng),
                    a_log,
                    d_skip: Tensor::filled(&[d], F::one()),
                    w_out: Tensor::randn(&[d, d], resid, &mut rng),
                    b_out: Tensor::zeros(&[d]),
                }
            })
            .collect();
        Self {
            config: config.clone(),
            tok_emb,
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
            layers: self
                .layers
                .iter()
                .map(|l| SsmLayer {
                    ln_gain: zero(&l.ln_gain),
                    ln_bias: zero(&l.ln_bias),
                    w_in: zero(&l.w_in),
                    b_in: zero(&l.b_in),
                    w_dt: zero(&l.w_dt),
                    b_dt: zero(&l.b_dt),
                    w_b: zero(&l.w_b),
                    w_c: zero(&l.w_c),
                    a_log: zero(&l.a_log),
                    d_skip: zero(&l.d_skip),
                    w_out: zero(&l.w_out),
                    b_out: zero(&l.b_out),
                })
                .collect(),
            lnf_gain: zero(&self.lnf_gain),
            lnf_bias: zero(&self.lnf_bias),
            w_head: zero(&self.w_head),
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor<F>> {
        let mut out = vec![&self.tok_emb];
        for l in &self.layers {
            out.extend([
                &l.ln_gain, &l.ln_bias, &l.w_in, &l.b_in, &l.w_dt, &l.b_dt, &l.w_b, &l.w_c,
                &l.a_log, &l.d_skip, &l.w_out, &l.b_out,
            ]);
        }
        out.extend([&self.lnf_gain, &self.lnf_bias, &self.w_head]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out: Vec<&mut Tensor<F>> = vec![&mut self.tok_emb];
        for l in &mut self.layers {
            out.push(&mut l.ln_gain);
            out.push(&mut l.ln_bias);
            out.push(&mut l.w_in);
            out.push(&mut l.b_in);
            out.push(&mut l.w_dt);
            out.push(&mut l.b_dt);
            out.push(&mut l.w_b);
            out.push(&mut l.w_c);
            out.push(&mut l.a_log);
            out.push(&mut l.d_skip);
            out.push(&mut l.w_out);
            out.push(&mut l.b_out);
        }
        out.push(&mut self.lnf_gain);
        out.push(&mut self.lnf_bias);
        out.push(&mut self.w_head);
        out
    }

    pub fn forward(
        &self,
        tokens: &[Token],
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> (Vec<F>, SsmCache<F>) {
        let t_len = tokens.len();
        let d = self.config.d_model;
        let n = self.config.d_state;
        let rate = self.config.dropout_rate;

        let mut x: Vec<F> = Vec::with_capacity(t_len * d);
        for &t in tokens {
            x.extend_from_slice(self.tok_emb.row(t as usize));
        }
        let mut layer_caches = Vec::with_capacity(self.layers.len());

        for layer in &self.layers {
            let x_in = x.clone();
            let mut ln_out = vec![F::zero(); t_len * d];
            let mut ln_stats = Vec::with_capacity(t_len);
            for t in 0..t_len {
                let stats = layernorm_forward(
                    &x_in[t * d..(t + 1) * d],
                    &layer.ln_gain.data,
                    &layer.ln_bias.data,
                    &mut ln_out[t * d..(t + 1) * d],
                );
                ln_stats.push(stats);
            }

            let mut uz = Vec::new();
            linear_forward(&ln_out, t_len, &layer.w_in, Some(&layer.b_in), &mut uz);
            let mut u = vec![F::zero(); t_len * d];
            let mut z = vec![F::zero(); t_len * d];
            for t in 0..t_len {
                u[t * d..(t + 1) * d].copy_from_slice(&uz[t * 2 * d..t * 2 * d + d]);
                z[t * d..(t + 1) * d].copy_from_slice(&uz[t * 2 * d + d..(t + 1) * 2 * d]);
            }

            let mut dt_pre = Vec::new();
            linear_forward(&u, t_len, &layer.w_dt, Some(&layer.b_dt), &mut dt_pre);
            let delta: Vec<F> = dt_pre.iter().map(|&s| softplus(s)).collect();
            let mut bmat = Vec::new();
            linear_forward(&u, t_len, &layer.w_b, None, &mut bmat);
            let mut cmat = Vec::new();
            linear_forward(&u, t_len, &layer.w_c, None, &mut cmat);

            // The scan. a = -exp(a_log) is recomputed per forward pass.
            let a: Vec<F> = layer.a_log.data.iter().map(|&l| -l.exp()).collect();
            let mut h = vec![F::zero(); d * n];
            let mut decay = vec![F::zero(); t_len * d * n];
            let mut h_seq = vec![F::zero(); t_len * d * n];
            let mut y = vec![F::zero(); t_len * d];
            for t in 0..t_len {
                let bt = &bmat[t * n..(t + 1) * n];
                let ct = &cmat[t * n..(t + 1) * n];
                for i in 0..d {
                    let dlt = delta[t * d + i];
                    let ui = u[t * d + i];
                    let scale = dlt * ui;
                    let h_i = &mut h[i * n..(i + 1) * n];
                    let a_i = &a[i * n..(i + 1) * n];
                    let dec_i = &mut decay[t * d * n + i * n..t * d * n + (i + 1) * n];
                    let mut acc = F::zero();
                    for j in 0..n {
                        let dec = (dlt * a_i[j]).exp();
                        dec_i[j] = dec;
                        h_i[j] = dec * h_i[j] + scale * bt[j];
                        acc += ct[j] * h_i[j];
                    }
                    y[t * d + i] = acc + layer.d_skip.data[i] * ui;
                }
                h_seq[t * d * n..(t + 1) * d * n].copy_from_slice(&h);
            }

            let gated: Vec<F> = y
                .iter()
                .zip(&z)
                .map(|(&yi, &zi)| yi * zi * sigmoid(zi))
                .collect();
            let mut out = Vec::new();
            linear_forward(&gated, t_len, &layer.w_out, Some(&layer.b_out), &mut out);
            let out_mask = match (&mut dropout, rate > 0.0) {
                (Some(rng), true) => {
                    let mask = dropout_mask::<F>(t_len * d, rate, rng);
                    for (o, m) in out.iter_mut().zip(&mask) {
                        *o *= *m;
                    }
                    Some(mask)
                }
                _ => None,
            };
            for (xi, &o) in x.iter_mut().zip(&out) {
                *xi += o;
            }

            layer_caches.push(SsmLayerCache {
                x_in,
                ln_out,
                ln_stats,
                u,
                z,
                dt_pre,
                delta,
                bmat,
                cmat,
                decay,
                h_seq,
                y,
                gated,
                out_mask,
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
            SsmCache {
                layers: layer_caches,
                x_final: x,
                lnf_out,
                lnf_stats,
            },
        )
    }

    pub fn backward(&self, tokens: &[Token], cache: &SsmCache<F>, dlogits: &[F], grads: &mut Self) {
        let t_len = tokens.len();
        let d = self.config.d_model;
        let n = self.config.d_state;

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
        let mut dx = vec![F::zero(); t_len * d];
        for t in 0..t_len {
            let (mean, rstd) = cache.lnf_stats[t];
            layernorm_backward(
                &cache.x_final[t * d..(t + 1) * d],
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
            let mut d_out = dx.clone();
            if let Some(mask) = &lc.out_mask {
                for (g, &m) in d_out.iter_mut().zip(mask) {
                    *g *= m;
                }
            }
            let mut d_gated = vec![F::zero(); t_len * d];
            linear_backward(
                &lc.gated,
                t_len,
                &layer.w_out,
                &d_out,
                &mut d_gated,
                &mut gl.w_out,
                Some(&mut gl.b_out),
            );

            // Gate: gated = y * silu(z).
            let mut d_y = vec![F::zero(); t_len * d];
            let mut d_z = vec![F::zero(); t_len * d];
            for idx in 0..t_len * d {
                let zi = lc.z[idx];
                let s = sigmoid(zi);
                let silu = zi * s;
                d_y[idx] = d_gated[idx] * silu;
                d_z[idx] = d_gated[idx] * lc.y[idx] * (s + zi * s * (F::one() - s));
            }

            // Reverse scan.
            let a: Vec<F> = layer.a_log.data.iter().map(|&l| -l.exp()).collect();
            let mut d_u = vec![F::zero(); t_len * d];
            let mut d_delta = vec![F::zero(); t_len * d];
            let mut d_b = vec![F::zero(); t_len * n];
            let mut d_c = vec![F::zero(); t_len * n];
            let mut d_a = vec![F::zero(); d * n];
            let mut dh = vec![F::zero(); d * n];
            for t in (0..t_len).rev() {
                let bt = &lc.bmat[t * n..(t + 1) * n];
                let ct = &lc.cmat[t * n..(t + 1) * n];
                let h_t = &lc.h_seq[t * d * n..(t + 1) * d * n];
                let h_prev_all: Option<&[F]> = if t > 0 {
                    Some(&lc.h_seq[(t - 1) * d * n..t * d * n])
                } else {
                    None
                };
                let dct = &mut d_c[t * n..(t + 1) * n];
                let dbt = &mut d_b[t * n..(t + 1) * n];
                for i in 0..d {
                    let dyi = d_y[t * d + i];
                    let ui = lc.u[t * d + i];
                    let dlt = lc.delta[t * d + i];
                    let dh_i = &mut dh[i * n..(i + 1) * n];
                    let h_ti = &h_t[i * n..(i + 1) * n];
                    let dec_i = &lc.decay[t * d * n + i * n..t * d * n + (i + 1) * n];
                    // y_i = C . h_i + D_i u_i
                    gl.d_skip.data[i] += dyi * ui;
                    let mut du_acc = layer.d_skip.data[i] * dyi;
                    let mut ddelta_acc = F::zero();
                    for j in 0..n {
                        dh_i[j] += ct[j] * dyi;
                        dct[j] += h_ti[j] * dyi;
                        let g = dh_i[j];
                        if g != F::zero() {
                            let h_prev = match h_prev_all {
                                Some(hp) => hp[i * n + j],
                                None => F::zero(),
                            };
                            // h = decay * h_prev + delta * B_j * u_i
                            let d_e = g * h_prev * dec_i[j];
                            ddelta_acc += d_e * a[i * n + j] + g * bt[j] * ui;
                            d_a[i * n + j] += d_e * dlt;
                            dbt[j] += g * dlt * ui;
                            du_acc += g * dlt * bt[j];
                            dh_i[j] = g * dec_i[j];
                        }
                    }
                    d_u[t * d + i] += du_acc;
                    d_delta[t * d + i] += ddelta_acc;
                }
            }
            // a = -exp(a_log): da_log = da * a.
            for idx in 0..d * n {
                gl.a_log.data[idx] += d_a[idx] * a[idx];
            }
            // delta = softplus(dt_pre).
            let d_dt_pre: Vec<F> = d_delta
                .iter()
                .zip(&lc.dt_pre)
                .map(|(&g, &s)| g * sigmoid(s))
                .collect();

            linear_backward(
                &lc.u, t_len, &layer.w_dt, &d_dt_pre, &mut d_u, &mut gl.w_dt,
                Some(&mut gl.b_dt),
            );
            linear_backward(&lc.u, t_len, &layer.w_b, &d_b, &mut d_u, &mut gl.w_b, None);
            linear_backward(&lc.u, t_len, &layer.w_c, &d_c, &mut d_u, &mut gl.w_c, None);

            let mut d_uz = vec![F::zero(); t_len * 2 * d];
            for t in 0..t_len {
                d_uz[t * 2 * d..t * 2 * d + d].copy_from_slice(&d_u[t * d..(t + 1) * d]);
                d_uz[t * 2 * d + d..(t + 1) * 2 * d].copy_from_slice(&d_z[t * d..(t + 1) * d]);
            }
            let mut d_ln = vec![F::zero(); t_len * d];
            linear_backward(
                &lc.ln_out,
                t_len,
                &layer.w_in,
                &d_uz,
                &mut d_ln,
                &mut gl.w_in,
                Some(&mut gl.b_in),
            );
            for t in 0..t_len {
                let (mean, rstd) = lc.ln_stats[t];
                layernorm_backward(
                    &lc.x_in[t * d..(t + 1) * d],
                    &layer.ln_gain.data,
                    mean,
                    rstd,
                    &d_ln[t * d..(t + 1) * d],
                    &mut dx[t * d..(t + 1) * d],
                    &mut gl.ln_gain.data,
                    &mut gl.ln_bias.data,
                );
            }
        }

        for (pos, &t) in tokens.iter().enumerate() {
            let g = &dx[pos * d..(pos + 1) * d];
            let row = grads.tok_emb.row_mut(t as usize);
            for (slot, &gi) in row.iter_mut().zip(g) {
                *slot += gi;
            }
        }
    }

    pub fn decode_state(&self) -> SsmDecodeState<F> {
        let d = self.config.d_model;
        let n = self.config.d_state;
        SsmDecodeState {
            h: vec![vec![F::zero(); d * n]; self.layers.len()],
        }
    }

    /// One recurrent step; state size is independent of position.
    pub fn step(&self, state: &mut SsmDecodeState<F>, token: Token) -> Vec<F> {
        let d = self.config.d_model;
        let n = self.config.d_state;
        let mut x: Vec<F> = self.tok_emb.row(token as usize).to_vec();
        let mut buf = vec![F::zero(); d];

        for (li, layer) in self.layers.iter().enumerate() {
            layernorm_forward(&x, &layer.ln_gain.data, &layer.ln_bias.data, &mut buf);
            let mut u = vec![F::zero(); d];
            let mut z = vec![F::zero(); d];
            for o in 0..d {
                u[o] = dot(&buf, layer.w_in.row(o)) + layer.b_in.data[o];
                z[o] = dot(&buf, layer.w_in.row(d + o)) + layer.b_in.data[d + o];
            }
            let mut bt = vec![F::zero(); n];
            let mut ct = vec![F::zero(); n];
            for j in 0..n {
                bt[j] = dot(&u, layer.w_b.row(j));
                ct[j] = dot(&u, layer.w_c.row(j));
            }
            let h = &mut state.h[li];
            for i in 0..d {
                let dlt = softplus(dot(&u, layer.w_dt.row(i)) + layer.b_dt.data[i]);
                let scale = dlt * u[i];
                let mut acc = F::zero();
                for j in 0..n {
                    let a = -layer.a_log.data[i * n + j].exp();
                    let idx = i * n + j;
                    h[idx] = (dlt * a).exp() * h[idx] + scale * bt[j];
                    acc += ct[j] * h[idx];
                }
                let y = acc + layer.d_skip.data[i] * u[i];
                buf[i] = y * z[i] * sigmoid(z[i]);
            }
            for o in 0..d {
                x[o] += dot(&buf, layer.w_out.row(o)) + layer.b_out.data[o];
            }
        }

        layernorm_forward(
            &x.clone(),
            &self.lnf_gain.data,
            &self.lnf_bias.data,
            &mut x,
        );
        let mut logits = vec![F::zero(); self.config.vocab_size];
        for (o, slot) in logits.iter_mut().enumerate() {
            *slot = dot(&x, self.w_head.row(o));
        }
        logits
    }
}
