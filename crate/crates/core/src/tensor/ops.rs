//! Differentiable pointwise, linear-algebra and layout ops.
//!
//! Every function computes its forward result eagerly, then (when a tape is
//! live and an input is tracked) records a backward closure that maps the
//! output cotangent to input cotangents. Closures call raw kernels only and
//! never re-enter the tape.

use super::kernels;
use super::tape;
use super::{shape_str, Result, Tensor, TensorError};
use std::sync::Arc;

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            op,
            dim: "shape",
            expected: shape_str(a.shape()),
            got: shape_str(b.shape()),
        });
    }
    Ok(())
}

/// (outer, len, inner) extents around `axis`.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, len, inner)
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(TensorError::InvalidArgument {
            op,
            message: format!("axis {axis} out of range for rank {}", shape.len()),
        });
    }
    Ok(())
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("add", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    let mut out = Tensor::from_parts(a.shape().to_vec(), data);
    tape::record_op(
        &[a, b],
        &mut out,
        Box::new(|g, emit| {
            emit(0, g.to_vec());
            emit(1, g.to_vec());
        }),
    );
    Ok(out)
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("sub", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
    let mut out = Tensor::from_parts(a.shape().to_vec(), data);
    tape::record_op(
        &[a, b],
        &mut out,
        Box::new(|g, emit| {
            emit(0, g.to_vec());
            emit(1, g.iter().map(|v| -v).collect());
        }),
    );
    Ok(out)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("mul", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    let mut out = Tensor::from_parts(a.shape().to_vec(), data);
    let (ac, bc) = (a.clone(), b.clone());
    tape::record_op(
        &[a, b],
        &mut out,
        Box::new(move |g, emit| {
            emit(0, g.iter().zip(bc.data()).map(|(gv, bv)| gv * bv).collect());
            emit(1, g.iter().zip(ac.data()).map(|(gv, av)| gv * av).collect());
        }),
    );
    Ok(out)
}

/// scale * x + shift with compile-time-constant coefficients.
pub fn affine(x: &Tensor, scale: f64, shift: f64) -> Tensor {
    let data = x.data().iter().map(|v| scale * v + shift).collect();
    let mut out = Tensor::from_parts(x.shape().to_vec(), data);
    tape::record_op(
        &[x],
        &mut out,
        Box::new(move |g, emit| emit(0, g.iter().map(|v| v * scale).collect())),
    );
    out
}

fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    let data: Vec<f64> = x.data().iter().map(|&v| sigmoid_scalar(v)).collect();
    let mut out = Tensor::from_parts(x.shape().to_vec(), data);
    let saved = out.clone();
    tape::record_op(
        &[x],
        &mut out,
        Box::new(move |g, emit| {
            emit(
                0,
                g.iter()
                    .zip(saved.data())
                    .map(|(gv, s)| gv * s * (1.0 - s))
                    .collect(),
            )
        }),
    );
    out
}

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.3989422804014327;

/// Exact Gaussian-CDF GELU: x * Phi(x).
pub fn gelu(x: &Tensor) -> Tensor {
    let data: Vec<f64> = x
        .data()
        .iter()
        .map(|&v| v * 0.5 * (1.0 + libm::erf(v * INV_SQRT_2)))
        .collect();
    let mut out = Tensor::from_parts(x.shape().to_vec(), data);
    let xc = x.clone();
    tape::record_op(
        &[x],
        &mut out,
        Box::new(move |g, emit| {
            emit(
                0,
                g.iter()
                    .zip(xc.data())
                    .map(|(gv, &v)| {
                        let phi_cdf = 0.5 * (1.0 + libm::erf(v * INV_SQRT_2));
                        let phi_pdf = (-0.5 * v * v).exp() * INV_SQRT_2PI;
                        gv * (phi_cdf + v * phi_pdf)
                    })
                    .collect(),
            )
        }),
    );
    out
}

/// Max-subtracted softmax along `axis`; each slice sums to 1.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    check_axis("softmax", x.shape(), axis)?;
    let (outer, len, inner) = axis_split(x.shape(), axis);
    let mut data = x.data().to_vec();
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            let mut mx = f64::NEG_INFINITY;
            for k in 0..len {
                mx = mx.max(data[base + k * inner]);
            }
            let mut sum = 0.0;
            for k in 0..len {
                let e = (data[base + k * inner] - mx).exp();
                data[base + k * inner] = e;
                sum += e;
            }
            for k in 0..len {
                data[base + k * inner] /= sum;
            }
        }
    }
    let mut out = Tensor::from_parts(x.shape().to_vec(), data);
    let saved = out.clone();
    tape::record_op(
        &[x],
        &mut out,
        Box::new(move |g, emit| {
            let s = saved.data();
            let mut gx = vec![0.0; g.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * len * inner + i;
                    let mut dot = 0.0;
                    for k in 0..len {
                        let idx = base + k * inner;
                        dot += g[idx] * s[idx];
                    }
                    for k in 0..len {
                        let idx = base + k * inner;
                        gx[idx] = s[idx] * (g[idx] - dot);
                    }
                }
            }
            emit(0, gx);
        }),
    );
    Ok(out)
}

pub fn sum_all(x: &Tensor) -> Tensor {
    let s: f64 = x.data().iter().sum();
    let n = x.numel();
    let mut out = Tensor::scalar(s);
    tape::record_op(
        &[x],
        &mut out,
        Box::new(move |g, emit| emit(0, vec![g[0]; n])),
    );
    out
}

pub fn mean_all(x: &Tensor) -> Tensor {
    let n = x.numel();
    let s: f64 = x.data().iter().sum();
    let mut out = Tensor::scalar(s / n as f64);
    tape::record_op(
        &[x],
        &mut out,
        Box::new(move |g, emit| emit(0, vec![g[0] / n as f64; n])),
    );
    out
}

/// x[..., Cin] · wᵀ (+ bias), with w stored [Cout, Cin].
pub fn linear(x: &Tensor, w: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    if w.shape().len() != 2 {
        return Err(TensorError::ShapeMismatch {
            op: "linear",
            dim: "weight rank",
            expected: "2".into(),
            got: shape_str(w.shape()),
        });
    }
    let (cout, cin) = (w.shape()[0], w.shape()[1]);
    let last = *x.shape().last().ok_or(TensorError::InvalidArgument {
        op: "linear",
        message: "input must have at least one axis".into(),
    })?;
    if last != cin {
        return Err(TensorError::ShapeMismatch {
            op: "linear",
            dim: "Cin",
            expected: cin.to_string(),
            got: last.to_string(),
        });
    }
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(TensorError::ShapeMismatch {
                op: "linear",
                dim: "bias",
                expected: format!("[{cout}]"),
                got: shape_str(b.shape()),
            });
        }
    }
    let rows = x.numel() / cin;
    let mut data = kernels::matmul_a_bt(rows, cin, cout, x.data(), w.data());
    if let Some(b) = bias {
        for r in 0..rows {
            for (co, bv) in b.data().iter().enumerate() {
                data[r * cout + co] += bv;
            }
        }
    }
    let mut out_shape = x.shape().to_vec();
    *out_shape.last_mut().unwrap() = cout;
    let mut out = Tensor::from_parts(out_shape, data);
    let (xc, wc) = (x.clone(), w.clone());
    let has_bias = bias.is_some();
    let record_inputs: Vec<&Tensor> = match bias {
        Some(b) => vec![x, w, b],
        None => vec![x, w],
    };
    tape::record_op(
        &record_inputs,
        &mut out,
        Box::new(move |g, emit| {
            emit(0, kernels::matmul(rows, cout, cin, g, wc.data()));
            emit(1, kernels::matmul_at_b(cout, rows, cin, g, xc.data()));
            if has_bias {
                let mut gb = vec![0.0; cout];
                for r in 0..rows {
                    for (co, gb) in gb.iter_mut().enumerate() {
                        *gb += g[r * cout + co];
                    }
                }
                emit(2, gb);
            }
        }),
    );
    Ok(out)
}

fn check_3d(op: &'static str, t: &Tensor) -> Result<(usize, usize, usize)> {
    if t.shape().len() != 3 {
        return Err(TensorError::ShapeMismatch {
            op,
            dim: "rank",
            expected: "3".into(),
            got: shape_str(t.shape()),
        });
    }
    Ok((t.shape()[0], t.shape()[1], t.shape()[2]))
}

/// Batched matmul: [N,m,k] · [N,k,p] -> [N,m,p].
pub fn bmm(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, m, k) = check_3d("bmm", a)?;
    let (nb, kb, p) = check_3d("bmm", b)?;
    if nb != n || kb != k {
        return Err(TensorError::ShapeMismatch {
            op: "bmm",
            dim: "batch/inner",
            expected: format!("[{n},{k},*]"),
            got: shape_str(b.shape()),
        });
    }
    let mut data = vec![0.0; n * m * p];
    for i in 0..n {
        let c = kernels::matmul(m, k, p, &a.data()[i * m * k..], &b.data()[i * k * p..]);
        data[i * m * p..(i + 1) * m * p].copy_from_slice(&c);
    }
    let mut out = Tensor::from_parts(vec![n, m, p], data);
    let (ac, bc) = (a.clone(), b.clone());
    tape::record_op(
        &[a, b],
        &mut out,
        Box::new(move |g, emit| {
            let mut ga = vec![0.0; n * m * k];
            let mut gb = vec![0.0; n * k * p];
            for i in 0..n {
                let gi = &g[i * m * p..(i + 1) * m * p];
                ga[i * m * k..(i + 1) * m * k].copy_from_slice(&kernels::matmul_a_bt(
                    m,
                    p,
                    k,
                    gi,
                    &bc.data()[i * k * p..(i + 1) * k * p],
                ));
                gb[i * k * p..(i + 1) * k * p].copy_from_slice(&kernels::matmul_at_b(
                    k,
                    m,
                    p,
                    &ac.data()[i * m * k..(i + 1) * m * k],
                    gi,
                ));
            }
            emit(0, ga);
            emit(1, gb);
        }),
    );
    Ok(out)
}

/// Batched matmul against a transposed right operand:
/// [N,m,k] · [N,p,k]ᵀ -> [N,m,p]. This is the QKᵀ shape.
pub fn bmm_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, m, k) = check_3d("bmm_nt", a)?;
    let (nb, p, kb) = check_3d("bmm_nt", b)?;
    if nb != n || kb != k {
        return Err(TensorError::ShapeMismatch {
            op: "bmm_nt",
            dim: "batch/inner",
            expected: format!("[{n},*,{k}]"),
            got: shape_str(b.shape()),
        });
    }
    let mut data = vec![0.0; n * m * p];
    for i in 0..n {
        let c = kernels::matmul_a_bt(m, k, p, &a.data()[i * m * k..], &b.data()[i * p * k..]);
        data[i * m * p..(i + 1) * m * p].copy_from_slice(&c);
    }
    let mut out = Tensor::from_parts(vec![n, m, p], data);
    let (ac, bc) = (a.clone(), b.clone());
    tape::record_op(
        &[a, b],
        &mut out,
        Box::new(move |g, emit| {
            let mut ga = vec![0.0; n * m * k];
            let mut gb = vec![0.0; n * p * k];
            for i in 0..n {
                let gi = &g[i * m * p..(i + 1) * m * p];
                ga[i * m * k..(i + 1) * m * k].copy_from_slice(&kernels::matmul(
                    m,
                    p,
                    k,
                    gi,
                    &bc.data()[i * p * k..(i + 1) * p * k],
                ));
                gb[i * p * k..(i + 1) * p * k].copy_from_slice(&kernels::matmul_at_b(
                    p,
                    m,
                    k,
                    gi,
                    &ac.data()[i * m * k..(i + 1) * m * k],
                ));
            }
            emit(0, ga);
            emit(1, gb);
        }),
    );
    Ok(out)
}

/// x scaled by a single trainable scalar held in a [1] tensor.
pub fn mul_scalar_t(x: &Tensor, s: &Tensor) -> Result<Tensor> {
    if s.numel() != 1 {
        return Err(TensorError::ShapeMismatch {
            op: "mul_scalar_t",
            dim: "scalar",
            expected: "[1]".into(),
            got: shape_str(s.shape()),
        });
    }
    let sv = s.data()[0];
    let data = x.data().iter().map(|v| v * sv).collect();
    let mut out = Tensor::from_parts(x.shape().to_vec(), data);
    let xc = x.clone();
    tape::record_op(
        &[x, s],
        &mut out,
        Box::new(move |g, emit| {
            emit(0, g.iter().map(|v| v * sv).collect());
            emit(1, vec![g.iter().zip(xc.data()).map(|(gv, xv)| gv * xv).sum()]);
        }),
    );
    Ok(out)
}

/// Per-sample per-channel scaling: [B,C,H,W] ⊙ w[B,C].
pub fn mul_channel(x: &Tensor, w: &Tensor) -> Result<Tensor> {
    let (b, c, h, wd) = x.check_4d("mul_channel")?;
    if w.shape() != [b, c] {
        return Err(TensorError::ShapeMismatch {
            op: "mul_channel",
            dim: "weights",
            expected: format!("[{b},{c}]"),
            got: shape_str(w.shape()),
        });
    }
    let plane = h * wd;
    let mut data = vec![0.0; x.numel()];
    for bc in 0..b * c {
        let wv = w.data()[bc];
        for p in 0..plane {
            data[bc * plane + p] = x.data()[bc * plane + p] * wv;
        }
    }
    let mut out = Tensor::from_parts(x.shape().to_vec(), data);
    let (xc, wc) = (x.clone(), w.clone());
    tape::record_op(
        &[x, w],
        &mut out,
        Box::new(move |g, emit| {
            let mut gx = vec![0.0; g.len()];
            let mut gw = vec![0.0; b * c];
            for bc in 0..b * c {
                let wv = wc.data()[bc];
                let mut acc = 0.0;
                for p in 0..plane {
                    let idx = bc * plane + p;
                    gx[idx] = g[idx] * wv;
                    acc += g[idx] * xc.data()[idx];
                }
                gw[bc] = acc;
            }
            emit(0, gx);
            emit(1, gw);
        }),
    );
    Ok(out)
}

/// Spatial mean: [B,C,H,W] -> [B,C].
pub fn avgpool_spatial(x: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = x.check_4d("avgpool_spatial")?;
    let plane = h * w;
    let mut data = vec![0.0; b * c];
    for (bc, out) in data.iter_mut().enumerate() {
        let mut acc = 0.0;
        for p in 0..plane {
            acc += x.data()[bc * plane + p];
        }
        *out = acc / plane as f64;
    }
    let mut out = Tensor::from_parts(vec![b, c], data);
    tape::record_op(
        &[x],
        &mut out,
        Box::new(move |g, emit| {
            let mut gx = vec![0.0; b * c * plane];
            for bc in 0..b * c {
                let gv = g[bc] / plane as f64;
                for p in 0..plane {
                    gx[bc * plane + p] = gv;
                }
            }
            emit(0, gx);
        }),
    );
    Ok(out)
}

/// Tile a [B,C] vector over an H×W plane: inverse layout of
/// [`avgpool_spatial`].
pub fn broadcast_spatial(v: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    if v.shape().len() != 2 {
        return Err(TensorError::ShapeMismatch {
            op: "broadcast_spatial",
            dim: "rank",
            expected: "2".into(),
            got: shape_str(v.shape()),
        });
    }
    let (b, c) = (v.shape()[0], v.shape()[1]);
    let plane = h * w;
    let mut data = vec![0.0; b * c * plane];
    for bc in 0..b * c {
        let val = v.data()[bc];
        for p in 0..plane {
            data[bc * plane + p] = val;
        }
    }
    let mut out = Tensor::from_parts(vec![b, c, h, w], data);
    tape::record_op(
        &[v],
        &mut out,
        Box::new(move |g, emit| {
            let mut gv = vec![0.0; b * c];
            for bc in 0..b * c {
                let mut acc = 0.0;
                for p in 0..plane {
                    acc += g[bc * plane + p];
                }
                gv[bc] = acc;
            }
            emit(0, gv);
        }),
    );
    Ok(out)
}

/// Per-position normalization over the channel axis of [B,C,H,W] with
/// learnable gamma/beta of shape [C].
pub fn layer_norm_chan(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    let (b, c, h, w) = x.check_4d("layer_norm_chan")?;
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(TensorError::ShapeMismatch {
            op: "layer_norm_chan",
            dim: "gamma/beta",
            expected: format!("[{c}]"),
            got: format!("{} / {}", shape_str(gamma.shape()), shape_str(beta.shape())),
        });
    }
    let hw = h * w;
    let (y, xhat, inv_std) =
        kernels::layer_norm_chan_forward(x.data(), gamma.data(), beta.data(), b, c, hw, eps);
    let mut out = Tensor::from_parts(x.shape().to_vec(), y);
    let gc = gamma.clone();
    let xhat = Arc::new(xhat);
    let inv_std = Arc::new(inv_std);
    tape::record_op(
        &[x, gamma, beta],
        &mut out,
        Box::new(move |g, emit| {
            let (gx, ggamma, gbeta) =
                kernels::layer_norm_chan_backward(g, &xhat, &inv_std, gc.data(), b, c, hw);
            emit(0, gx);
            emit(1, ggamma);
            emit(2, gbeta);
        }),
    );
    Ok(out)
}

/// Concatenate along `axis`; all other extents must match.
pub fn concat(xs: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = xs.first().ok_or(TensorError::InvalidArgument {
        op: "concat",
        message: "needs at least one input".into(),
    })?;
    check_axis("concat", first.shape(), axis)?;
    let mut out_shape = first.shape().to_vec();
    let mut axis_lens = Vec::with_capacity(xs.len());
    axis_lens.push(first.shape()[axis]);
    for x in &xs[1..] {
        if x.shape().len() != out_shape.len() {
            return Err(TensorError::ShapeMismatch {
                op: "concat",
                dim: "rank",
                expected: out_shape.len().to_string(),
                got: x.shape().len().to_string(),
            });
        }
        for (d, (a, b)) in out_shape.iter().zip(x.shape()).enumerate() {
            if d != axis && a != b {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    dim: "non-axis extent",
                    expected: a.to_string(),
                    got: b.to_string(),
                });
            }
        }
        axis_lens.push(x.shape()[axis]);
    }
    out_shape[axis] = axis_lens.iter().sum();
    let (outer, total_len, inner) = axis_split(&out_shape, axis);
    let mut data = vec![0.0; outer * total_len * inner];
    let mut offset = 0;
    for (x, &alen) in xs.iter().zip(&axis_lens) {
        for o in 0..outer {
            let src = &x.data()[o * alen * inner..(o + 1) * alen * inner];
            let dst = (o * total_len + offset) * inner;
            data[dst..dst + alen * inner].copy_from_slice(src);
        }
        offset += alen;
    }
    let mut out = Tensor::from_parts(out_shape, data);
    let refs: Vec<&Tensor> = xs.to_vec();
    let lens = axis_lens.clone();
    tape::record_op(
        &refs,
        &mut out,
        Box::new(move |g, emit| {
            let mut offset = 0;
            for (i, &alen) in lens.iter().enumerate() {
                let mut gx = vec![0.0; outer * alen * inner];
                for o in 0..outer {
                    let src = (o * total_len + offset) * inner;
                    gx[o * alen * inner..(o + 1) * alen * inner]
                        .copy_from_slice(&g[src..src + alen * inner]);
                }
                emit(i, gx);
                offset += alen;
            }
        }),
    );
    Ok(out)
}

/// Contiguous sub-range `[start, start+len)` along `axis`.
pub fn slice_axis(x: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    check_axis("slice_axis", x.shape(), axis)?;
    let (outer, full, inner) = axis_split(x.shape(), axis);
    if start + len > full {
        return Err(TensorError::InvalidArgument {
            op: "slice_axis",
            message: format!("range {start}..{} exceeds extent {full}", start + len),
        });
    }
    let mut out_shape = x.shape().to_vec();
    out_shape[axis] = len;
    let mut data = vec![0.0; outer * len * inner];
    for o in 0..outer {
        let src = (o * full + start) * inner;
        data[o * len * inner..(o + 1) * len * inner]
            .copy_from_slice(&x.data()[src..src + len * inner]);
    }
    let mut out = Tensor::from_parts(out_shape, data);
    tape::record_op(
        &[x],
        &mut out,
        Box::new(move |g, emit| {
            let mut gx = vec![0.0; outer * full * inner];
            for o in 0..outer {
                let dst = (o * full + start) * inner;
                gx[dst..dst + len * inner]
                    .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            emit(0, gx);
        }),
    );
    Ok(out)
}

/// Same buffer, new extents. Data is always contiguous row-major, so this is
/// a metadata change.
pub fn reshape(x: &Tensor, shape: Vec<usize>) -> Result<Tensor> {
    let numel: usize = shape.iter().product();
    if numel != x.numel() {
        return Err(TensorError::ShapeMismatch {
            op: "reshape",
            dim: "numel",
            expected: x.numel().to_string(),
            got: numel.to_string(),
        });
    }
    let mut out = Tensor::from_parts(shape, x.data().to_vec());
    tape::record_op(&[x], &mut out, Box::new(|g, emit| emit(0, g.to_vec())));
    Ok(out)
}

/// out[i] = x[idx[i]]. Indices may repeat (padding); backward scatter-adds.
/// The layout workhorse behind window partitioning, padding and cropping.
pub(crate) fn gather_index(x: &Tensor, out_shape: Vec<usize>, idx: Arc<Vec<usize>>) -> Tensor {
    debug_assert_eq!(out_shape.iter().product::<usize>(), idx.len());
    let src = x.data();
    let data: Vec<f64> = idx.iter().map(|&i| src[i]).collect();
    let mut out = Tensor::from_parts(out_shape, data);
    let n_in = x.numel();
    let idxc = Arc::clone(&idx);
    tape::record_op(
        &[x],
        &mut out,
        Box::new(move |g, emit| {
            let mut gx = vec![0.0; n_in];
            for (gv, &i) in g.iter().zip(idxc.iter()) {
                gx[i] += gv;
            }
            emit(0, gx);
        }),
    );
    out
}

/// Fold a possibly out-of-range coordinate back into [0, n) by reflecting
/// at the borders without repeating the edge sample (seesaw with period
/// 2(n-1)), so any pad size is valid for any extent.
fn reflect_fold(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

/// Reflect-pad the spatial dims of [B,C,H,W].
pub fn pad_reflect2d(
    x: &Tensor,
    top: usize,
    bottom: usize,
    left: usize,
    right: usize,
) -> Result<Tensor> {
    let (b, c, h, w) = x.check_4d("pad_reflect2d")?;
    let (oh, ow) = (h + top + bottom, w + left + right);
    let mut idx = Vec::with_capacity(b * c * oh * ow);
    for bc in 0..b * c {
        let base = bc * h * w;
        for y in 0..oh {
            let sy = reflect_fold(y as isize - top as isize, h);
            for xp in 0..ow {
                let sx = reflect_fold(xp as isize - left as isize, w);
                idx.push(base + sy * w + sx);
            }
        }
    }
    Ok(gather_index(x, vec![b, c, oh, ow], Arc::new(idx)))
}

/// Spatial crop of [B,C,H,W] to `out_h`×`out_w` starting at (top, left).
pub fn crop2d(x: &Tensor, top: usize, left: usize, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (b, c, h, w) = x.check_4d("crop2d")?;
    if top + out_h > h || left + out_w > w {
        return Err(TensorError::InvalidArgument {
            op: "crop2d",
            message: format!(
                "crop {out_h}x{out_w}+({top},{left}) exceeds input {h}x{w}"
            ),
        });
    }
    let mut idx = Vec::with_capacity(b * c * out_h * out_w);
    for bc in 0..b * c {
        let base = bc * h * w;
        for y in 0..out_h {
            for xp in 0..out_w {
                idx.push(base + (top + y) * w + (left + xp));
            }
        }
    }
    Ok(gather_index(x, vec![b, c, out_h, out_w], Arc::new(idx)))
}
