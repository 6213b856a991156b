use super::tensor::{gemm, MatMut, MatRef, Tensor};
use super::{ensure_finite, NeuralError, Result};

/// Scaled dot-product attention `softmax(Q K^T / sqrt(d_k)) V`.
pub fn attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor> {
    masked_attention(q, k, v, k.rows())
}

/// Attention where only the first `valid_keys` rows of `K`/`V` can receive
/// weight; the remaining keys are treated as padding.
pub fn masked_attention(q: &Tensor, k: &Tensor, v: &Tensor, valid_keys: usize) -> Result<Tensor> {
    if q.shape().len() != 2 || k.shape().len() != 2 || v.shape().len() != 2 {
        return Err(NeuralError::Shape("attention inputs must be matrices".into()));
    }
    if q.cols() != k.cols() {
        return Err(NeuralError::Shape(format!(
            "Q has d_k={} but K has {}",
            q.cols(),
            k.cols()
        )));
    }
    if k.rows() != v.rows() {
        return Err(NeuralError::Shape(format!(
            "K has {} rows but V has {}",
            k.rows(),
            v.rows()
        )));
    }
    if valid_keys == 0 || valid_keys > k.rows() {
        return Err(NeuralError::Shape(format!(
            "valid key count {valid_keys} outside 1..={}",
            k.rows()
        )));
    }
    let mut out = vec![0.0; q.rows() * v.cols()];
    attention_head(
        q.view(),
        k.view(),
        v.view(),
        valid_keys,
        MatMut::new(&mut out, q.rows(), v.cols()),
    );
    ensure_finite("attention output", &out)?;
    Tensor::from_vec(&[q.rows(), v.cols()], out)
}

/// Writes one head's output into `out` and returns the `[n_q, n_k]` softmax
/// weights (zero on masked keys).
pub(crate) fn attention_head(
    q: MatRef<'_>,
    k: MatRef<'_>,
    v: MatRef<'_>,
    valid_keys: usize,
    out: MatMut<'_>,
) -> Vec<f64> {
    let (nq, nk, dk) = (q.rows(), k.rows(), q.cols());
    let scale = 1.0 / (dk as f64).sqrt();
    let mut probs = vec![0.0; nq * nk];
    gemm(scale, q, k.t(), 0.0, MatMut::new(&mut probs, nq, nk));
    for row in probs.chunks_mut(nk) {
        softmax_prefix(row, valid_keys);
    }
    gemm(1.0, MatRef::new(&probs, nq, nk), v, 0.0, out);
    probs
}

fn softmax_prefix(row: &mut [f64], valid: usize) {
    let max = row[..valid].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row[..valid].iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row[..valid].iter_mut() {
        *x /= sum;
    }
    row[valid..].fill(0.0);
}

/// Gradients of one head with respect to its Q, K and V inputs, written
/// (overwriting) into `dq`, `dk` and `dv`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn attention_head_backward(
    q: MatRef<'_>,
    k: MatRef<'_>,
    v: MatRef<'_>,
    probs: &[f64],
    d_out: MatRef<'_>,
    dq: MatMut<'_>,
    dk: MatMut<'_>,
    dv: MatMut<'_>,
) {
    let (nq, nk, dkdim) = (q.rows(), k.rows(), q.cols());
    let scale = 1.0 / (dkdim as f64).sqrt();
    let p = MatRef::new(probs, nq, nk);
    gemm(1.0, p.t(), d_out, 0.0, dv);
    let mut ds = vec![0.0; nq * nk];
    gemm(1.0, d_out, v.t(), 0.0, MatMut::new(&mut ds, nq, nk));
    for (ds_row, p_row) in ds.chunks_mut(nk).zip(probs.chunks(nk)) {
        let dot: f64 = ds_row.iter().zip(p_row).map(|(a, b)| a * b).sum();
        for (d, pv) in ds_row.iter_mut().zip(p_row) {
            *d = pv * (*d - dot);
        }
    }
    let ds_m = MatRef::new(&ds, nq, nk);
    gemm(scale, ds_m, k, 0.0, dq);
    gemm(scale, ds_m.t(), q, 0.0, dk);
}

/// Mean of the first `valid_len` rows of a `[seq, d]` matrix.
pub fn average_pool(t: &Tensor, valid_len: usize) -> Result<Tensor> {
    if t.shape().len() != 2 {
        return Err(NeuralError::Shape("average_pool expects a matrix".into()));
    }
    if valid_len == 0 || valid_len > t.rows() {
        return Err(NeuralError::Shape(format!(
            "valid_len {valid_len} outside 1..={}",
            t.rows()
        )));
    }
    Tensor::from_vec(&[t.cols()], pool_rows(t.data(), t.cols(), valid_len))
}

pub(crate) fn pool_rows(data: &[f64], cols: usize, valid: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for row in data.chunks(cols).take(valid) {
        for (o, x) in out.iter_mut().zip(row) {
            *o += x;
        }
    }
    let inv = 1.0 / valid as f64;
    out.iter_mut().for_each(|o| *o *= inv);
    out
}
