//! Window partition and merge between image layout `[B, C, H, W]` and
//! token layout `[B * nWin, M*M, C]`.
//!
//! Both directions are pure index permutations, so merge(partition(x)) is
//! bit-exact and gradients flow by scattering along the same map.

use std::sync::Arc;

use crate::tensor::ops::gather_index;
use crate::tensor::{Result, Tensor, TensorError};

fn check_divisible(op: &'static str, extent: usize, side: usize, axis: &str) -> Result<()> {
    if side == 0 || extent % side != 0 {
        return Err(TensorError::InvalidArgument {
            op,
            message: format!("{axis} extent {extent} not divisible by window side {side}"),
        });
    }
    Ok(())
}

/// Split `[B, C, H, W]` into non-overlapping `wh x ww` windows, yielding
/// `[B * (H/wh) * (W/ww), wh*ww, C]`. Tokens scan each window row-major.
pub(crate) fn partition_rect(x: &Tensor, wh: usize, ww: usize) -> Result<Tensor> {
    let (b, c, h, w) = x.check_4d("window_partition")?;
    check_divisible("window_partition", h, wh, "height")?;
    check_divisible("window_partition", w, ww, "width")?;
    let (nh, nw) = (h / wh, w / ww);
    let tokens = wh * ww;
    let n_windows = b * nh * nw;

    let mut idx = Vec::with_capacity(n_windows * tokens * c);
    for bi in 0..b {
        for wy in 0..nh {
            for wx in 0..nw {
                for ty in 0..wh {
                    for tx in 0..ww {
                        let (y, xq) = (wy * wh + ty, wx * ww + tx);
                        for ci in 0..c {
                            idx.push(((bi * c + ci) * h + y) * w + xq);
                        }
                    }
                }
            }
        }
    }
    Ok(gather_index(x, vec![n_windows, tokens, c], Arc::new(idx)))
}

/// Inverse of [`partition_rect`]: `[B*nWin, wh*ww, C]` back to
/// `[B, C, H, W]`.
pub(crate) fn merge_rect(
    wins: &Tensor,
    wh: usize,
    ww: usize,
    b: usize,
    c: usize,
    h: usize,
    w: usize,
) -> Result<Tensor> {
    check_divisible("window_merge", h, wh, "height")?;
    check_divisible("window_merge", w, ww, "width")?;
    let (nh, nw) = (h / wh, w / ww);
    let tokens = wh * ww;
    let expected = vec![b * nh * nw, tokens, c];
    if wins.shape() != expected {
        return Err(TensorError::ShapeMismatch {
            op: "window_merge",
            dim: "windows",
            expected: crate::tensor::shape_str(&expected),
            got: crate::tensor::shape_str(wins.shape()),
        });
    }

    let mut idx = Vec::with_capacity(b * c * h * w);
    for bi in 0..b {
        for ci in 0..c {
            for y in 0..h {
                for xq in 0..w {
                    let (wy, ty) = (y / wh, y % wh);
                    let (wx, tx) = (xq / ww, xq % ww);
                    let win = (bi * nh + wy) * nw + wx;
                    idx.push((win * tokens + ty * ww + tx) * c + ci);
                }
            }
        }
    }
    Ok(gather_index(wins, vec![b, c, h, w], Arc::new(idx)))
}

/// Square-window partition: `[B, C, H, W]` -> `[B*(H/M)*(W/M), M*M, C]`.
pub fn window_partition(x: &Tensor, m: usize) -> Result<Tensor> {
    partition_rect(x, m, m)
}

/// Inverse of [`window_partition`].
pub fn window_merge(wins: &Tensor, m: usize, b: usize, c: usize, h: usize, w: usize) -> Result<Tensor> {
    merge_rect(wins, m, m, b, c, h, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use crate::tensor::{GradTape, Parameter};

    #[test]
    fn partition_shape_and_layout() {
        // One 4x4 plane, M=2: four windows of four tokens each. The first
        // window must read the top-left 2x2 block row-major.
        let x = Tensor::from_parts(vec![1, 1, 4, 4], (0..16).map(|v| v as f64).collect());
        let wins = window_partition(&x, 2).unwrap();
        assert_eq!(wins.shape(), &[4, 4, 1]);
        assert_eq!(&wins.data()[..4], &[0.0, 1.0, 4.0, 5.0]);
        // Second window: top-right block.
        assert_eq!(&wins.data()[4..8], &[2.0, 3.0, 6.0, 7.0]);
        // Third: bottom-left.
        assert_eq!(&wins.data()[8..12], &[8.0, 9.0, 12.0, 13.0]);
    }

    #[test]
    fn merge_inverts_partition_exactly() {
        let mut rng = CounterRng::new(31);
        let data: Vec<f64> = (0..2 * 3 * 8 * 12).map(|_| rng.normal()).collect();
        let x = Tensor::from_parts(vec![2, 3, 8, 12], data);
        let wins = partition_rect(&x, 2, 4).unwrap();
        let back = merge_rect(&wins, 2, 4, 2, 3, 8, 12).unwrap();
        assert_eq!(back.data(), x.data());
    }

    #[test]
    fn rejects_non_divisible_extent() {
        let x = Tensor::zeros(vec![1, 1, 5, 4]);
        assert!(window_partition(&x, 2).is_err());
    }

    #[test]
    fn gradient_flows_through_roundtrip() {
        let p = Parameter::new("x", Tensor::from_parts(vec![1, 1, 4, 4], vec![1.0; 16]));
        let tape = GradTape::new();
        let wins = window_partition(&p.read(), 2).unwrap();
        let back = merge_rect(&wins, 2, 2, 1, 1, 4, 4).unwrap();
        let loss = crate::tensor::ops::sum_all(&back);
        let grads = tape.backward(&loss).unwrap();
        assert!(grads.get("x").unwrap().data().iter().all(|&g| g == 1.0));
    }
}
