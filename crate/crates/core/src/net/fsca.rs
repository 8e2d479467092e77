//! Windowed cross-attention: spatial features supply the queries, the
//! frequency-calibrated features supply keys and values.
//!
//! All four projections are bias-free E x E maps, so the block carries
//! exactly 4 * E^2 parameters. Attention runs inside non-overlapping M x M
//! windows with contiguous channel slices as heads.

use crate::tensor::ops::linear;
use crate::tensor::{ParamContainer, Parameter, Result, Tensor};

use super::attn::{attention_probs, multi_head_attention};
use super::window::{window_merge, window_partition};
use super::Init;

pub struct FscaBlock {
    wq: Parameter,
    wk: Parameter,
    wv: Parameter,
    wo: Parameter,
    window_m: usize,
    n_heads: usize,
}

impl FscaBlock {
    pub fn new(prefix: &str, channels: usize, window_m: usize, n_heads: usize, init: &Init) -> FscaBlock {
        FscaBlock {
            wq: init.matrix(&format!("{prefix}.wq"), channels, channels),
            wk: init.matrix(&format!("{prefix}.wk"), channels, channels),
            wv: init.matrix(&format!("{prefix}.wv"), channels, channels),
            wo: init.matrix(&format!("{prefix}.wo"), channels, channels),
            window_m,
            n_heads,
        }
    }

    pub(crate) fn macs(&self, h: usize, w: usize) -> f64 {
        let hw = (h * w) as f64;
        let e = self.wq.value().shape()[0] as f64;
        let tokens = (self.window_m * self.window_m) as f64;
        // Four projections over every pixel, then score and mix products
        // of T x T attention inside each window.
        4.0 * e * e * hw + 2.0 * hw * tokens * e
    }

    fn project(&self, s: &Tensor, fp: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let win_s = window_partition(s, self.window_m)?;
        let win_fp = window_partition(fp, self.window_m)?;
        Ok((
            linear(&win_s, &self.wq.read(), None)?,
            linear(&win_fp, &self.wk.read(), None)?,
            linear(&win_fp, &self.wv.read(), None)?,
        ))
    }

    pub fn forward(&self, s: &Tensor, fp: &Tensor) -> Result<Tensor> {
        let (b, c, h, w) = s.check_4d("fsca_forward")?;
        let (q, k, v) = self.project(s, fp)?;
        let mixed = multi_head_attention(&q, &k, &v, self.n_heads)?;
        let out = linear(&mixed, &self.wo.read(), None)?;
        window_merge(&out, self.window_m, b, c, h, w)
    }

    /// Attention weights for inspection: `[n_heads * n_windows, T, T]`.
    pub fn attention(&self, s: &Tensor, fp: &Tensor) -> Result<Tensor> {
        let (q, k, _) = self.project(s, fp)?;
        attention_probs(&q, &k, self.n_heads)
    }
}

impl ParamContainer for FscaBlock {
    fn for_each_param(&self, f: &mut dyn FnMut(&Parameter)) {
        f(&self.wq);
        f(&self.wk);
        f(&self.wv);
        f(&self.wo);
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(&mut self.wq);
        f(&mut self.wk);
        f(&mut self.wv);
        f(&mut self.wo);
    }
}
