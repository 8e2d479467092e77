//! Rectangular-window transformer block of the trunk.
//!
//! Blocks alternate M x 2M and 2M x M attention windows by position, so a
//! pair of consecutive blocks mixes along both axes. Each block is
//! pre-norm: attention with a squeeze-excite channel gate on the first
//! residual, a two-layer GELU MLP on the second. Inputs must already be
//! padded to multiples of 2M on both spatial axes.

use crate::tensor::ops::{
    add, avgpool_spatial, gelu, layer_norm_chan, linear, mul_channel, sigmoid,
};
use crate::tensor::{conv2d, ParamContainer, Parameter, Result, Tensor};

use super::attn::multi_head_attention;
use super::window::{merge_rect, partition_rect};
use super::Init;

const LN_EPS: f64 = 1e-6;

pub struct BackboneBlock {
    ln1_g: Parameter,
    ln1_b: Parameter,
    wq: Parameter,
    wk: Parameter,
    wv: Parameter,
    wo: Parameter,
    se_w1: Parameter,
    se_b1: Parameter,
    se_w2: Parameter,
    se_b2: Parameter,
    ln2_g: Parameter,
    ln2_b: Parameter,
    mlp_w1: Parameter,
    mlp_b1: Parameter,
    mlp_w2: Parameter,
    mlp_b2: Parameter,
    window: (usize, usize),
    n_heads: usize,
}

impl BackboneBlock {
    /// `index` is the block's position in its stage; even blocks use
    /// M x 2M windows, odd blocks 2M x M.
    pub fn new(
        prefix: &str,
        channels: usize,
        window_m: usize,
        n_heads: usize,
        index: usize,
        init: &Init,
    ) -> BackboneBlock {
        let c = channels;
        let hidden = (c / 2).max(1);
        let window = if index % 2 == 0 {
            (window_m, 2 * window_m)
        } else {
            (2 * window_m, window_m)
        };
        BackboneBlock {
            ln1_g: init.full(&format!("{prefix}.ln1.g"), vec![c], 1.0),
            ln1_b: init.zeros(&format!("{prefix}.ln1.b"), vec![c]),
            wq: init.matrix(&format!("{prefix}.wq"), c, c),
            wk: init.matrix(&format!("{prefix}.wk"), c, c),
            wv: init.matrix(&format!("{prefix}.wv"), c, c),
            wo: init.matrix(&format!("{prefix}.wo"), c, c),
            se_w1: init.matrix(&format!("{prefix}.se.w1"), hidden, c),
            se_b1: init.zeros(&format!("{prefix}.se.b1"), vec![hidden]),
            se_w2: init.matrix(&format!("{prefix}.se.w2"), c, hidden),
            se_b2: init.zeros(&format!("{prefix}.se.b2"), vec![c]),
            ln2_g: init.full(&format!("{prefix}.ln2.g"), vec![c], 1.0),
            ln2_b: init.zeros(&format!("{prefix}.ln2.b"), vec![c]),
            mlp_w1: init.conv(&format!("{prefix}.mlp.w1"), 2 * c, c, 1, 1),
            mlp_b1: init.zeros(&format!("{prefix}.mlp.b1"), vec![2 * c]),
            mlp_w2: init.conv(&format!("{prefix}.mlp.w2"), c, 2 * c, 1, 1),
            mlp_b2: init.zeros(&format!("{prefix}.mlp.b2"), vec![c]),
            window,
            n_heads,
        }
    }

    pub fn window(&self) -> (usize, usize) {
        self.window
    }

    pub(crate) fn macs(&self, h: usize, w: usize) -> f64 {
        let hw = (h * w) as f64;
        let c = self.wq.value().shape()[0] as f64;
        let hidden = self.se_w1.value().shape()[0] as f64;
        let tokens = (self.window.0 * self.window.1) as f64;
        // Attention projections + window score/mix products, SE linears,
        // and the two-layer MLP.
        4.0 * c * c * hw + 2.0 * hw * tokens * c + 2.0 * c * hidden + 4.0 * c * c * hw
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, c, h, w) = x.check_4d("backbone_forward")?;
        let (wh, ww) = self.window;

        let normed = layer_norm_chan(x, &self.ln1_g.read(), &self.ln1_b.read(), LN_EPS)?;
        let wins = partition_rect(&normed, wh, ww)?;
        let q = linear(&wins, &self.wq.read(), None)?;
        let k = linear(&wins, &self.wk.read(), None)?;
        let v = linear(&wins, &self.wv.read(), None)?;
        let mixed = multi_head_attention(&q, &k, &v, self.n_heads)?;
        let projected = linear(&mixed, &self.wo.read(), None)?;
        let attn = merge_rect(&projected, wh, ww, b, c, h, w)?;

        // Squeeze-excite: scale each channel by a gate computed from the
        // attention output's global statistics.
        let pooled = avgpool_spatial(&attn)?;
        let squeezed = gelu(&linear(&pooled, &self.se_w1.read(), Some(&self.se_b1.read()))?);
        let gate = sigmoid(&linear(&squeezed, &self.se_w2.read(), Some(&self.se_b2.read()))?);
        let trunk = add(x, &mul_channel(&attn, &gate)?)?;

        let normed2 = layer_norm_chan(&trunk, &self.ln2_g.read(), &self.ln2_b.read(), LN_EPS)?;
        let expanded = gelu(&conv2d(&normed2, &self.mlp_w1.read(), Some(&self.mlp_b1.read()), 1, 1)?);
        let mlp = conv2d(&expanded, &self.mlp_w2.read(), Some(&self.mlp_b2.read()), 1, 1)?;
        add(&trunk, &mlp)
    }
}

impl ParamContainer for BackboneBlock {
    fn for_each_param(&self, f: &mut dyn FnMut(&Parameter)) {
        f(&self.ln1_g);
        f(&self.ln1_b);
        f(&self.wq);
        f(&self.wk);
        f(&self.wv);
        f(&self.wo);
        f(&self.se_w1);
        f(&self.se_b1);
        f(&self.se_w2);
        f(&self.se_b2);
        f(&self.ln2_g);
        f(&self.ln2_b);
        f(&self.mlp_w1);
        f(&self.mlp_b1);
        f(&self.mlp_w2);
        f(&self.mlp_b2);
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(&mut self.ln1_g);
        f(&mut self.ln1_b);
        f(&mut self.wq);
        f(&mut self.wk);
        f(&mut self.wv);
        f(&mut self.wo);
        f(&mut self.se_w1);
        f(&mut self.se_b1);
        f(&mut self.se_w2);
        f(&mut self.se_b2);
        f(&mut self.ln2_g);
        f(&mut self.ln2_b);
        f(&mut self.mlp_w1);
        f(&mut self.mlp_b1);
        f(&mut self.mlp_w2);
        f(&mut self.mlp_b2);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use crate::tensor::{ops, GradTape};

    fn rand_input(c: usize, h: usize, w: usize, key: u64) -> Tensor {
        let mut rng = CounterRng::new(key);
        Tensor::from_parts(vec![1, c, h, w], (0..c * h * w).map(|_| rng.normal()).collect())
    }

    #[test]
    fn windows_alternate_by_block_index() {
        let init = Init::new(20);
        let even = BackboneBlock::new("b0", 4, 2, 2, 0, &init);
        let odd = BackboneBlock::new("b1", 4, 2, 2, 1, &init);
        assert_eq!(even.window(), (2, 4));
        assert_eq!(odd.window(), (4, 2));
    }

    #[test]
    fn all_zero_parameters_make_exact_identity() {
        // Zero LN gains blank the branches; both residuals then pass the
        // input through bit-exactly.
        let mut block = BackboneBlock::new("b", 4, 2, 2, 0, &Init::new(21));
        block.for_each_param_mut(&mut |p| {
            p.set_value(Tensor::zeros(p.value().shape().to_vec()));
        });
        let x = rand_input(4, 4, 4, 100);
        let out = block.forward(&x).unwrap();
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn preserves_shape_for_both_orientations() {
        let init = Init::new(22);
        let x = rand_input(4, 4, 8, 101);
        for idx in [0, 1] {
            let block = BackboneBlock::new("b", 4, 2, 2, idx, &init);
            let out = block.forward(&x).unwrap();
            assert_eq!(out.shape(), x.shape());
            assert!(out.is_all_finite());
        }
    }

    #[test]
    fn gradients_reach_every_parameter() {
        let block = BackboneBlock::new("b", 4, 2, 2, 0, &Init::new(23));
        let x = rand_input(4, 4, 4, 102);
        let tape = GradTape::new();
        let out = block.forward(&x).unwrap();
        let loss = ops::sum_all(&ops::mul(&out, &out).unwrap());
        let grads = tape.backward(&loss).unwrap();
        for name in block.param_names() {
            let g = grads.get(&name).unwrap();
            assert!(g.data().iter().any(|&v| v != 0.0), "{name} has zero gradient");
        }
    }
}
