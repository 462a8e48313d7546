//! Flat tensors and the few dense kernels the backbones need.
//!
//! Everything is generic over [`Real`] so sweeps can run in f32 while
//! gradient checks and oracle tests run in f64.

use rand_chacha::ChaCha8Rng;

use crate::rng::normal;

/// Scalar type for model arithmetic.
pub trait Real:
    num_traits::Float
    + num_traits::NumAssignOps
    + std::iter::Sum
    + std::fmt::Debug
    + Default
    + Send
    + Sync
    + 'static
{
    const DTYPE: u8;
}

impl Real for f32 {
    const DTYPE: u8 = 1;
}
impl Real for f64 {
    const DTYPE: u8 = 2;
}

/// Convert an f64 constant into the working precision.
#[inline]
pub fn real<F: Real>(x: f64) -> F {
    F::from(x).unwrap()
}

/// Row-major dense tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    pub shape: Vec<usize>,
    pub data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![F::zero(); numel],
        }
    }

    pub fn filled(shape: &[usize], value: F) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    pub fn randn(shape: &[usize], std: f64, rng: &mut ChaCha8Rng) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..numel).map(|_| real(normal(rng, std))).collect(),
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Row `r` of a 2-D tensor.
    #[inline]
    pub fn row(&self, r: usize) -> &[F] {
        let cols = self.shape[1];
        &self.data[r * cols..(r + 1) * cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        let cols = self.shape[1];
        &mut self.data[r * cols..(r + 1) * cols]
    }

    pub fn zero(&mut self) {
        self.data.fill(F::zero());
    }

    /// Weight decay applies to matrices, not to vectors like biases or
    /// normalization parameters.
    pub fn is_decayable(&self) -> bool {
        self.shape.len() >= 2
    }
}

#[inline]
pub fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// `y += alpha * x`
#[inline]
pub fn axpy<F: Real>(alpha: F, x: &[F], y: &mut [F]) {
    debug_assert_eq!(x.len(), y.len());
    for (&xi, yi) in x.iter().zip(y.iter_mut()) {
        *yi += alpha * xi;
    }
}

/// `y = x @ W^T + b` for `x: [rows, din]`, `w: [dout, din]`.
pub fn linear_forward<F: Real>(
    x: &[F],
    rows: usize,
    w: &Tensor<F>,
    b: Option<&Tensor<F>>,
    out: &mut Vec<F>,
) {
    let dout = w.shape[0];
    let din = w.shape[1];
    debug_assert_eq!(x.len(), rows * din);
    out.clear();
    out.reserve(rows * dout);
    for r in 0..rows {
        let xr = &x[r * din..(r + 1) * din];
        for o in 0..dout {
            let mut v = dot(xr, w.row(o));
            if let Some(b) = b {
                v += b.data[o];
            }
            out.push(v);
        }
    }
}

/// Backward of [`linear_forward`]: accumulates into `dx`, `dw`, `db`.
pub fn linear_backward<F: Real>(
    x: &[F],
    rows: usize,
    w: &Tensor<F>,
    dy: &[F],
    dx: &mut [F],
    dw: &mut Tensor<F>,
    mut db: Option<&mut Tensor<F>>,
) {
    let dout = w.shape[0];
    let din = w.shape[1];
    debug_assert_eq!(dy.len(), rows * dout);
    debug_assert_eq!(dx.len(), rows * din);
    for r in 0..rows {
        let xr = &x[r * din..(r + 1) * din];
        let dyr = &dy[r * dout..(r + 1) * dout];
        let dxr = &mut dx[r * din..(r + 1) * din];
        for o in 0..dout {
            let g = dyr[o];
            if g != F::zero() {
                axpy(g, w.row(o), dxr);
                axpy(g, xr, dw.row_mut(o));
            }
            if let Some(db) = db.as_deref_mut() {
                db.data[o] += g;
            }
        }
    }
}

/// Layer norm over the last axis of one row; returns (mean, inverse std).
pub fn layernorm_forward<F: Real>(
    x: &[F],
    gain: &[F],
    bias: &[F],
    out: &mut [F],
) -> (F, F) {
    let n = x.len();
    let nf = real::<F>(n as f64);
    let mean = x.iter().copied().sum::<F>() / nf;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / nf;
    let rstd = (var + real::<F>(1e-5)).sqrt().recip();
    for i in 0..n {
        out[i] = (x[i] - mean) * rstd * gain[i] + bias[i];
    }
    (mean, rstd)
}

/// Backward of layer norm for one row.
#[allow(clippy::too_many_arguments)]
pub fn layernorm_backward<F: Real>(
    x: &[F],
    gain: &[F],
    mean: F,
    rstd: F,
    dy: &[F],
    dx: &mut [F],
    dgain: &mut [F],
    dbias: &mut [F],
) {
    let n = x.len();
    let nf = real::<F>(n as f64);
    let mut sum_dxhat = F::zero();
    let mut sum_dxhat_xhat = F::zero();
    for i in 0..n {
        let xhat = (x[i] - mean) * rstd;
        let dxhat = dy[i] * gain[i];
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * xhat;
        dgain[i] += dy[i] * xhat;
        dbias[i] += dy[i];
    }
    for i in 0..n {
        let xhat = (x[i] - mean) * rstd;
        let dxhat = dy[i] * gain[i];
        dx[i] += rstd * (dxhat - sum_dxhat / nf - xhat * sum_dxhat_xhat / nf);
    }
}

/// Numerically stable in-place softmax of one row.
pub fn softmax_inplace<F: Real>(row: &mut [F]) {
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// log(sum(exp(row))) with the max factored out.
pub fn log_sum_exp<F: Real>(row: &[F]) -> F {
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    let sum: F = row.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

#[inline]
pub fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        (F::one() + (-x).exp()).recip()
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

#[inline]
pub fn softplus<F: Real>(x: F) -> F {
    if x > real(30.0) {
        x
    } else {
        (F::one() + x.exp()).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn linear_round_trip_against_naive() {
        let mut rng = stream(1);
        let (rows, din, dout) = (3, 5, 4);
        let x: Vec<f64> = (0..rows * din).map(|i| (i as f64) * 0.1 - 0.7).collect();
        let w = Tensor::<f64>::randn(&[dout, din], 0.3, &mut rng);
        let b = Tensor::<f64>::randn(&[dout], 0.3, &mut rng);
        let mut y = Vec::new();
        linear_forward(&x, rows, &w, Some(&b), &mut y);
        for r in 0..rows {
            for o in 0..dout {
                let mut expect = b.data[o];
                for i in 0..din {
                    expect += x[r * din + i] * w.data[o * din + i];
                }
                assert!((y[r * dout + o] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = stream(2);
        for _ in 0..50 {
            let mut row: Vec<f64> = (0..17).map(|_| normal(&mut rng, 3.0)).collect();
            softmax_inplace(&mut row);
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layernorm_normalizes() {
        let x: Vec<f64> = vec![1.0, 2.0, 3.0, 4.0];
        let gain = vec![1.0; 4];
        let bias = vec![0.0; 4];
        let mut y = vec![0.0; 4];
        layernorm_forward(&x, &gain, &bias, &mut y);
        let mean: f64 = y.iter().sum::<f64>() / 4.0;
        let var: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn stable_sigmoid_and_softplus() {
        assert!((sigmoid(-800.0f64)).abs() < 1e-300);
        assert!((sigmoid(800.0f64) - 1.0).abs() < 1e-12);
        assert_eq!(softplus(100.0f64), 100.0);
        assert!((softplus(0.0f64) - 2f64.ln()).abs() < 1e-12);
    }
}
