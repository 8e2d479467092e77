//! Raw computational kernels: plain functions over `&[f64]` buffers.
//!
//! These carry no tape logic; the differentiable ops wrap them for the
//! forward pass and call them again from backward closures. Loop order is
//! fixed (row-major, batch outermost) so accumulation order, and therefore
//! the exact floating-point result, never varies between runs.

/// Geometry of one dilated "same"-padded convolution.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub b: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub dilation: usize,
    pub groups: usize,
}

impl ConvDims {
    /// Zero padding before the first row; chosen so output size == input
    /// size for effective kernel extent (k-1)*dilation+1.
    pub fn pad_top(&self) -> usize {
        ((self.kh - 1) * self.dilation) / 2
    }

    pub fn pad_left(&self) -> usize {
        ((self.kw - 1) * self.dilation) / 2
    }

    pub fn cin_per_group(&self) -> usize {
        self.cin / self.groups
    }

    pub fn cout_per_group(&self) -> usize {
        self.cout / self.groups
    }
}

/// Cross-correlation with holes, zero "same" padding.
pub(crate) fn conv2d_forward(x: &[f64], w: &[f64], bias: Option<&[f64]>, d: &ConvDims) -> Vec<f64> {
    let (h, wd) = (d.h as isize, d.w as isize);
    let (pt, pl) = (d.pad_top() as isize, d.pad_left() as isize);
    let dil = d.dilation as isize;
    let (cin_g, cout_g) = (d.cin_per_group(), d.cout_per_group());
    let mut out = vec![0.0; d.b * d.cout * d.h * d.w];
    for b in 0..d.b {
        for g in 0..d.groups {
            for co_g in 0..cout_g {
                let co = g * cout_g + co_g;
                let base_out = (b * d.cout + co) * d.h * d.w;
                let b0 = bias.map_or(0.0, |v| v[co]);
                for y in 0..h {
                    for xp in 0..wd {
                        let mut acc = b0;
                        for ci_g in 0..cin_g {
                            let ci = g * cin_g + ci_g;
                            let base_in = (b * d.cin + ci) * d.h * d.w;
                            let base_w = ((co * cin_g + ci_g) * d.kh) * d.kw;
                            for ky in 0..d.kh as isize {
                                let iy = y + ky * dil - pt;
                                if iy < 0 || iy >= h {
                                    continue;
                                }
                                for kx in 0..d.kw as isize {
                                    let ix = xp + kx * dil - pl;
                                    if ix < 0 || ix >= wd {
                                        continue;
                                    }
                                    acc += x[base_in + (iy * wd + ix) as usize]
                                        * w[base_w + (ky * d.kw as isize + kx) as usize];
                                }
                            }
                        }
                        out[base_out + (y * wd + xp) as usize] = acc;
                    }
                }
            }
        }
    }
    out
}

pub(crate) struct ConvGrads {
    pub input: Option<Vec<f64>>,
    pub weight: Option<Vec<f64>>,
    pub bias: Option<Vec<f64>>,
}

/// All requested convolution gradients in one fixed-order sweep over the
/// output positions.
pub(crate) fn conv2d_backward(
    gout: &[f64],
    x: &[f64],
    w: &[f64],
    d: &ConvDims,
    need_input: bool,
    need_weight: bool,
    need_bias: bool,
) -> ConvGrads {
    let (h, wd) = (d.h as isize, d.w as isize);
    let (pt, pl) = (d.pad_top() as isize, d.pad_left() as isize);
    let dil = d.dilation as isize;
    let (cin_g, cout_g) = (d.cin_per_group(), d.cout_per_group());
    let mut gin = if need_input {
        Some(vec![0.0; d.b * d.cin * d.h * d.w])
    } else {
        None
    };
    let mut gw = if need_weight {
        Some(vec![0.0; d.cout * cin_g * d.kh * d.kw])
    } else {
        None
    };
    let mut gb = if need_bias {
        Some(vec![0.0; d.cout])
    } else {
        None
    };
    for b in 0..d.b {
        for g in 0..d.groups {
            for co_g in 0..cout_g {
                let co = g * cout_g + co_g;
                let base_out = (b * d.cout + co) * d.h * d.w;
                for y in 0..h {
                    for xp in 0..wd {
                        let go = gout[base_out + (y * wd + xp) as usize];
                        if let Some(gb) = gb.as_mut() {
                            gb[co] += go;
                        }
                        if go == 0.0 {
                            continue;
                        }
                        for ci_g in 0..cin_g {
                            let ci = g * cin_g + ci_g;
                            let base_in = (b * d.cin + ci) * d.h * d.w;
                            let base_w = ((co * cin_g + ci_g) * d.kh) * d.kw;
                            for ky in 0..d.kh as isize {
                                let iy = y + ky * dil - pt;
                                if iy < 0 || iy >= h {
                                    continue;
                                }
                                for kx in 0..d.kw as isize {
                                    let ix = xp + kx * dil - pl;
                                    if ix < 0 || ix >= wd {
                                        continue;
                                    }
                                    let wi = base_w + (ky * d.kw as isize + kx) as usize;
                                    let xi = base_in + (iy * wd + ix) as usize;
                                    if let Some(gin) = gin.as_mut() {
                                        gin[xi] += go * w[wi];
                                    }
                                    if let Some(gw) = gw.as_mut() {
                                        gw[wi] += go * x[xi];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    ConvGrads {
        input: gin,
        weight: gw,
        bias: gb,
    }
}

/// c[m,n] = a[m,k] · b[k,n]
pub(crate) fn matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let row_b = &b[p * n..(p + 1) * n];
            let row_c = &mut c[i * n..(i + 1) * n];
            for (cv, bv) in row_c.iter_mut().zip(row_b) {
                *cv += av * bv;
            }
        }
    }
    c
}

/// c[m,n] = a[m,k] · b[n,k]ᵀ
pub(crate) fn matmul_a_bt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let row_a = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let row_b = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (av, bv) in row_a.iter().zip(row_b) {
                acc += av * bv;
            }
            c[i * n + j] = acc;
        }
    }
    c
}

/// c[m,n] = a[k,m]ᵀ · b[k,n]
pub(crate) fn matmul_at_b(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for p in 0..k {
        let row_a = &a[p * m..(p + 1) * m];
        let row_b = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = row_a[i];
            if av == 0.0 {
                continue;
            }
            let row_c = &mut c[i * n..(i + 1) * n];
            for (cv, bv) in row_c.iter_mut().zip(row_b) {
                *cv += av * bv;
            }
        }
    }
    c
}

/// Per-position channel normalization of [B,C,H,W]: every (b,y,x) column is
/// standardized over C, then scaled/shifted by gamma/beta. Returns
/// (output, x_hat, inv_std) so backward can reuse the normalized values.
pub(crate) fn layer_norm_chan_forward(
    x: &[f64],
    gamma: &[f64],
    beta: &[f64],
    b: usize,
    c: usize,
    hw: usize,
    eps: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; b * hw];
    for bi in 0..b {
        for p in 0..hw {
            let mut mean = 0.0;
            for ci in 0..c {
                mean += x[(bi * c + ci) * hw + p];
            }
            mean /= c as f64;
            let mut var = 0.0;
            for ci in 0..c {
                let d = x[(bi * c + ci) * hw + p] - mean;
                var += d * d;
            }
            var /= c as f64;
            let istd = 1.0 / (var + eps).sqrt();
            inv_std[bi * hw + p] = istd;
            for ci in 0..c {
                let idx = (bi * c + ci) * hw + p;
                let xh = (x[idx] - mean) * istd;
                xhat[idx] = xh;
                y[idx] = gamma[ci] * xh + beta[ci];
            }
        }
    }
    (y, xhat, inv_std)
}

/// Gradients of [`layer_norm_chan_forward`] w.r.t. input, gamma, beta.
pub(crate) fn layer_norm_chan_backward(
    gy: &[f64],
    xhat: &[f64],
    inv_std: &[f64],
    gamma: &[f64],
    b: usize,
    c: usize,
    hw: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; gy.len()];
    let mut ggamma = vec![0.0; c];
    let mut gbeta = vec![0.0; c];
    let cf = c as f64;
    for bi in 0..b {
        for p in 0..hw {
            let mut sum_dxh = 0.0;
            let mut sum_dxh_xh = 0.0;
            for ci in 0..c {
                let idx = (bi * c + ci) * hw + p;
                let dxh = gy[idx] * gamma[ci];
                sum_dxh += dxh;
                sum_dxh_xh += dxh * xhat[idx];
                ggamma[ci] += gy[idx] * xhat[idx];
                gbeta[ci] += gy[idx];
            }
            let istd = inv_std[bi * hw + p];
            for ci in 0..c {
                let idx = (bi * c + ci) * hw + p;
                let dxh = gy[idx] * gamma[ci];
                gx[idx] = istd * (dxh - sum_dxh / cf - xhat[idx] * sum_dxh_xh / cf);
            }
        }
    }
    (gx, ggamma, gbeta)
}
