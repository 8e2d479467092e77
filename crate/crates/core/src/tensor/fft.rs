//! Orthonormal 2-D discrete Fourier transforms.
//!
//! Both directions scale by 1/sqrt(H*W), so the transform is unitary:
//! Parseval holds exactly up to rounding and inverse(forward(x)) == x.
//! Power-of-two lengths use an iterative radix-2 kernel; everything else
//! goes through Bluestein's chirp-z reduction to a power-of-two cyclic
//! convolution, so any H, W >= 1 is supported.
//!
//! Two interfaces exist on purpose. [`spectral_forward`]/[`spectral_inverse`]
//! are the plain complex-valued transforms. [`fft2_to_channels`] and
//! [`ifft2_from_channels`] pack real/imaginary planes as extra channels
//! ([B,C,H,W] <-> [B,2C,H,W]) and participate in gradient recording; the
//! unitarity of the transform makes their backward passes a single opposite
//! transform.

use super::tape;
use super::{ComplexTensor, Result, Tensor, TensorError};
use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

/// Unnormalized in-place FFT of length `re.len()`; `inverse` selects the
/// conjugate (e^{+i...}) direction, still without the 1/n factor.
fn fft_1d(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    if n <= 1 {
        return;
    }
    if inverse {
        for v in im.iter_mut() {
            *v = -*v;
        }
        fft_1d(re, im, false);
        for v in im.iter_mut() {
            *v = -*v;
        }
        return;
    }
    if n.is_power_of_two() {
        radix2(re, im);
    } else {
        bluestein(re, im);
    }
}

/// Iterative radix-2 Cooley-Tukey, forward direction, unnormalized.
fn radix2(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    // bit-reversal permutation
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * std::f64::consts::PI / len as f64;
        let (wr, wi) = (ang.cos(), ang.sin());
        let half = len / 2;
        let mut start = 0;
        while start < n {
            let (mut cr, mut ci) = (1.0, 0.0);
            for k in 0..half {
                let a = start + k;
                let b = a + half;
                let tr = re[b] * cr - im[b] * ci;
                let ti = re[b] * ci + im[b] * cr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                let ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
            start += len;
        }
        len <<= 1;
    }
}

/// Chirp tables and the pre-transformed convolution kernel for one length.
struct BluesteinPlan {
    n: usize,
    m: usize,
    w_re: Vec<f64>,
    w_im: Vec<f64>,
    bf_re: Vec<f64>,
    bf_im: Vec<f64>,
}

impl BluesteinPlan {
    fn new(n: usize) -> BluesteinPlan {
        let m = (2 * n - 1).next_power_of_two();
        // chirp w_k = exp(-i*pi*k^2/n); k^2 taken mod 2n keeps angles small
        let mut w_re = vec![0.0; n];
        let mut w_im = vec![0.0; n];
        for k in 0..n {
            let e = (k * k) % (2 * n);
            let ang = -std::f64::consts::PI * e as f64 / n as f64;
            w_re[k] = ang.cos();
            w_im[k] = ang.sin();
        }
        // b_t = conj(w_t), wrapped cyclically so negative lags land at m-t
        let mut bf_re = vec![0.0; m];
        let mut bf_im = vec![0.0; m];
        bf_re[0] = w_re[0];
        bf_im[0] = -w_im[0];
        for t in 1..n {
            bf_re[t] = w_re[t];
            bf_im[t] = -w_im[t];
            bf_re[m - t] = w_re[t];
            bf_im[m - t] = -w_im[t];
        }
        radix2(&mut bf_re, &mut bf_im);
        BluesteinPlan {
            n,
            m,
            w_re,
            w_im,
            bf_re,
            bf_im,
        }
    }

    fn run(&self, re: &mut [f64], im: &mut [f64]) {
        let (n, m) = (self.n, self.m);
        let mut ar = vec![0.0; m];
        let mut ai = vec![0.0; m];
        for k in 0..n {
            ar[k] = re[k] * self.w_re[k] - im[k] * self.w_im[k];
            ai[k] = re[k] * self.w_im[k] + im[k] * self.w_re[k];
        }
        radix2(&mut ar, &mut ai);
        for k in 0..m {
            let tr = ar[k] * self.bf_re[k] - ai[k] * self.bf_im[k];
            ai[k] = ar[k] * self.bf_im[k] + ai[k] * self.bf_re[k];
            ar[k] = tr;
        }
        // unnormalized inverse via conjugation, then the 1/m factor
        for v in ai.iter_mut() {
            *v = -*v;
        }
        radix2(&mut ar, &mut ai);
        let inv_m = 1.0 / m as f64;
        for j in 0..n {
            let (cr, ci) = (ar[j] * inv_m, -ai[j] * inv_m);
            re[j] = cr * self.w_re[j] - ci * self.w_im[j];
            im[j] = cr * self.w_im[j] + ci * self.w_re[j];
        }
    }
}

thread_local! {
    static PLANS: RefCell<HashMap<usize, Rc<BluesteinPlan>>> = RefCell::new(HashMap::new());
}

fn bluestein(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    let plan = PLANS.with(|p| {
        Rc::clone(
            p.borrow_mut()
                .entry(n)
                .or_insert_with(|| Rc::new(BluesteinPlan::new(n))),
        )
    });
    plan.run(re, im);
}

/// Orthonormal 2-D transform of one H*W plane, in place.
pub(crate) fn fft2_plane(re: &mut [f64], im: &mut [f64], h: usize, w: usize, inverse: bool) {
    for y in 0..h {
        fft_1d(&mut re[y * w..(y + 1) * w], &mut im[y * w..(y + 1) * w], inverse);
    }
    let mut cr = vec![0.0; h];
    let mut ci = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            cr[y] = re[y * w + x];
            ci[y] = im[y * w + x];
        }
        fft_1d(&mut cr, &mut ci, inverse);
        for y in 0..h {
            re[y * w + x] = cr[y];
            im[y * w + x] = ci[y];
        }
    }
    let scale = 1.0 / ((h * w) as f64).sqrt();
    for v in re.iter_mut() {
        *v *= scale;
    }
    for v in im.iter_mut() {
        *v *= scale;
    }
}

fn require_finite(data: &[f64], stage: &str) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite {
            stage: stage.to_string(),
        })
    }
}

/// Forward orthonormal FFT over the spatial dims of a real [B,C,H,W] tensor.
/// Not gradient-recorded; the channel-packed forms below are.
pub fn spectral_forward(x: &Tensor) -> Result<ComplexTensor> {
    let (b, c, h, w) = x.check_4d("spectral_forward")?;
    require_finite(x.data(), "spectral_forward")?;
    let plane = h * w;
    let mut re = x.data().to_vec();
    let mut im = vec![0.0; re.len()];
    for p in 0..b * c {
        fft2_plane(
            &mut re[p * plane..(p + 1) * plane],
            &mut im[p * plane..(p + 1) * plane],
            h,
            w,
            false,
        );
    }
    ComplexTensor::new(
        Tensor::from_parts(vec![b, c, h, w], re),
        Tensor::from_parts(vec![b, c, h, w], im),
    )
}

/// Inverse orthonormal FFT; returns the real part of the result. For a
/// conjugate-symmetric spectrum the discarded imaginary part is rounding
/// noise.
pub fn spectral_inverse(f: &ComplexTensor) -> Result<Tensor> {
    let (b, c, h, w) = f.real.check_4d("spectral_inverse")?;
    require_finite(f.real.data(), "spectral_inverse")?;
    require_finite(f.imag.data(), "spectral_inverse")?;
    let plane = h * w;
    let mut re = f.real.data().to_vec();
    let mut im = f.imag.data().to_vec();
    for p in 0..b * c {
        fft2_plane(
            &mut re[p * plane..(p + 1) * plane],
            &mut im[p * plane..(p + 1) * plane],
            h,
            w,
            true,
        );
    }
    Ok(Tensor::from_parts(vec![b, c, h, w], re))
}

/// Differentiable forward transform with the spectrum packed as channels:
/// [B,C,H,W] -> [B,2C,H,W], real planes first, then imaginary.
pub fn fft2_to_channels(x: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = x.check_4d("fft2_to_channels")?;
    require_finite(x.data(), "fft2_to_channels")?;
    let plane = h * w;
    let mut data = vec![0.0; b * 2 * c * plane];
    let mut im = vec![0.0; plane];
    for bi in 0..b {
        for ci in 0..c {
            let src = &x.data()[(bi * c + ci) * plane..(bi * c + ci + 1) * plane];
            let dst_re = (bi * 2 * c + ci) * plane;
            data[dst_re..dst_re + plane].copy_from_slice(src);
            im.fill(0.0);
            fft2_plane(&mut data[dst_re..dst_re + plane], &mut im, h, w, false);
            let dst_im = (bi * 2 * c + c + ci) * plane;
            data[dst_im..dst_im + plane].copy_from_slice(&im);
        }
    }
    let mut out = Tensor::from_parts(vec![b, 2 * c, h, w], data);
    tape::record_op(
        &[x],
        &mut out,
        Box::new(move |gout, emit| {
            // adjoint of a unitary map is its inverse: pull the packed
            // cotangent back with one inverse transform per channel
            let mut gin = vec![0.0; b * c * plane];
            let mut gr = vec![0.0; plane];
            let mut gi = vec![0.0; plane];
            for bi in 0..b {
                for ci in 0..c {
                    let src_re = (bi * 2 * c + ci) * plane;
                    let src_im = (bi * 2 * c + c + ci) * plane;
                    gr.copy_from_slice(&gout[src_re..src_re + plane]);
                    gi.copy_from_slice(&gout[src_im..src_im + plane]);
                    fft2_plane(&mut gr, &mut gi, h, w, true);
                    gin[(bi * c + ci) * plane..(bi * c + ci + 1) * plane]
                        .copy_from_slice(&gr);
                }
            }
            emit(0, gin);
        }),
    );
    Ok(out)
}

/// Differentiable inverse of [`fft2_to_channels`]: [B,2C,H,W] -> [B,C,H,W],
/// keeping the real part of the inverse transform.
pub fn ifft2_from_channels(x: &Tensor) -> Result<Tensor> {
    let (b, c2, h, w) = x.check_4d("ifft2_from_channels")?;
    if c2 % 2 != 0 {
        return Err(TensorError::ShapeMismatch {
            op: "ifft2_from_channels",
            dim: "channels",
            expected: "even (real planes + imag planes)".into(),
            got: c2.to_string(),
        });
    }
    require_finite(x.data(), "ifft2_from_channels")?;
    let c = c2 / 2;
    let plane = h * w;
    let mut data = vec![0.0; b * c * plane];
    let mut re = vec![0.0; plane];
    let mut im = vec![0.0; plane];
    for bi in 0..b {
        for ci in 0..c {
            let src_re = (bi * c2 + ci) * plane;
            let src_im = (bi * c2 + c + ci) * plane;
            re.copy_from_slice(&x.data()[src_re..src_re + plane]);
            im.copy_from_slice(&x.data()[src_im..src_im + plane]);
            fft2_plane(&mut re, &mut im, h, w, true);
            data[(bi * c + ci) * plane..(bi * c + ci + 1) * plane].copy_from_slice(&re);
        }
    }
    let mut out = Tensor::from_parts(vec![b, c, h, w], data);
    tape::record_op(
        &[x],
        &mut out,
        Box::new(move |gout, emit| {
            // d/d(re,im) of Re(IFFT(re+i*im)) is the forward transform of
            // the cotangent, split back into its real/imaginary planes
            let mut gin = vec![0.0; b * c2 * plane];
            let mut gr = vec![0.0; plane];
            let mut gi = vec![0.0; plane];
            for bi in 0..b {
                for ci in 0..c {
                    gr.copy_from_slice(
                        &gout[(bi * c + ci) * plane..(bi * c + ci + 1) * plane],
                    );
                    gi.fill(0.0);
                    fft2_plane(&mut gr, &mut gi, h, w, false);
                    let dst_re = (bi * c2 + ci) * plane;
                    let dst_im = (bi * c2 + c + ci) * plane;
                    gin[dst_re..dst_re + plane].copy_from_slice(&gr);
                    gin[dst_im..dst_im + plane].copy_from_slice(&gi);
                }
            }
            emit(0, gin);
        }),
    );
    Ok(out)
}
