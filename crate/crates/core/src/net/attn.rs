//! Scaled dot-product attention over token windows, shared by the
//! cross-attention stage and the backbone blocks.

use crate::tensor::ops::{affine, bmm, bmm_nt, concat, slice_axis, softmax};
use crate::tensor::{Result, Tensor, TensorError};

fn split_heads(x: &Tensor, n_heads: usize) -> Result<Vec<Tensor>> {
    let c = *x.shape().last().expect("attention input has an axis");
    if n_heads == 0 || c % n_heads != 0 {
        return Err(TensorError::InvalidArgument {
            op: "attention",
            message: format!("{n_heads} heads do not divide {c} channels"),
        });
    }
    let ch = c / n_heads;
    (0..n_heads).map(|hi| slice_axis(x, 2, hi * ch, ch)).collect()
}

/// Per-head softmax(Q Kᵀ / sqrt(C_h)) V over `[N, T, C]` token windows.
/// Heads are contiguous channel slices, concatenated back after mixing.
pub(crate) fn multi_head_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    n_heads: usize,
) -> Result<Tensor> {
    let probs_v: Vec<Tensor> = attention_per_head(q, k, v, n_heads)?
        .into_iter()
        .map(|(probs, vh)| bmm(&probs, &vh))
        .collect::<Result<_>>()?;
    let refs: Vec<&Tensor> = probs_v.iter().collect();
    concat(&refs, 2)
}

/// The attention probabilities of every head, stacked along axis 0 as
/// `[n_heads * N, T, T]`. Row t holds the weights token t places on the
/// key tokens; each row sums to 1 by construction.
pub fn attention_probs(q: &Tensor, k: &Tensor, n_heads: usize) -> Result<Tensor> {
    let per_head = attention_per_head(q, k, q, n_heads)?;
    let probs: Vec<Tensor> = per_head.into_iter().map(|(p, _)| p).collect();
    let refs: Vec<&Tensor> = probs.iter().collect();
    concat(&refs, 0)
}

fn attention_per_head(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    n_heads: usize,
) -> Result<Vec<(Tensor, Tensor)>> {
    for (name, t) in [("q", q), ("k", k), ("v", v)] {
        if t.shape().len() != 3 {
            return Err(TensorError::InvalidArgument {
                op: "attention",
                message: format!("{name} must be [windows, tokens, channels], got {:?}", t.shape()),
            });
        }
    }
    let qs = split_heads(q, n_heads)?;
    let ks = split_heads(k, n_heads)?;
    let vs = split_heads(v, n_heads)?;
    let ch = q.shape()[2] / n_heads;
    let scale = 1.0 / (ch as f64).sqrt();

    qs.into_iter()
        .zip(ks)
        .zip(vs)
        .map(|((qh, kh), vh)| {
            let logits = affine(&bmm_nt(&qh, &kh)?, scale, 0.0);
            Ok((softmax(&logits, 2)?, vh))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn rand3(n: usize, t: usize, c: usize, key: u64) -> Tensor {
        let mut rng = CounterRng::new(key);
        Tensor::from_parts(vec![n, t, c], (0..n * t * c).map(|_| rng.normal()).collect())
    }

    #[test]
    fn identical_keys_average_values() {
        // All key rows equal -> uniform attention -> every output token is
        // the mean value row, whatever the queries say.
        let q = rand3(1, 3, 4, 7);
        let k = Tensor::from_parts(vec![1, 3, 4], [1.0, -2.0, 0.5, 3.0].repeat(3));
        let v = rand3(1, 3, 4, 8);
        let out = multi_head_attention(&q, &k, &v, 2).unwrap();
        let vd = v.data();
        for t in 0..3 {
            for c in 0..4 {
                let mean = (vd[c] + vd[4 + c] + vd[8 + c]) / 3.0;
                assert!((out.data()[t * 4 + c] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn probability_rows_sum_to_one() {
        let q = rand3(2, 5, 6, 11);
        let k = rand3(2, 5, 6, 12);
        let probs = attention_probs(&q, &k, 3).unwrap();
        assert_eq!(probs.shape(), &[6, 5, 5]);
        for row in probs.data().chunks(5) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() <= 1e-9, "row sum {s}");
        }
    }

    #[test]
    fn single_token_window_is_identity_on_values() {
        // One token attends only to itself: output == V regardless of Q/K.
        let q = rand3(3, 1, 4, 21);
        let k = rand3(3, 1, 4, 22);
        let v = rand3(3, 1, 4, 23);
        let out = multi_head_attention(&q, &k, &v, 1).unwrap();
        for (a, b) in out.data().iter().zip(v.data().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn heads_partition_channels() {
        // With V constant per channel, attention is a weighted average that
        // preserves those constants exactly, per head.
        let q = rand3(1, 4, 6, 31);
        let k = rand3(1, 4, 6, 32);
        let mut vdata = vec![0.0; 4 * 6];
        for t in 0..4 {
            for c in 0..6 {
                vdata[t * 6 + c] = c as f64;
            }
        }
        let v = Tensor::from_parts(vec![1, 4, 6], vdata);
        let out = multi_head_attention(&q, &k, &v, 3).unwrap();
        for t in 0..4 {
            for c in 0..6 {
                assert!((out.data()[t * 6 + c] - c as f64).abs() < 1e-12);
            }
        }
    }
}
