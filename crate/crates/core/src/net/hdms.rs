//! Multiscale spatial refinement appended to every transformer block.
//!
//! A separable dilated filter bank (depthwise 3x3 per rate + pointwise 1x1,
//! fused by 1x1) applied as a residual correction. With all weights at zero
//! the unit is an exact identity, which makes its ablation a strict subset
//! of the full network's function space.

use crate::tensor::ops::add;
use crate::tensor::{ParamContainer, Parameter, Result, Tensor};

use super::aspp::{AsppBlock, AsppConfig};
use super::Init;

pub struct HdmsBlock {
    bank: AsppBlock,
}

impl HdmsBlock {
    pub fn new(prefix: &str, channels: usize, spatial_dilations: &[usize], init: &Init) -> HdmsBlock {
        let cfg = AsppConfig {
            channels,
            rates: spatial_dilations.to_vec(),
            pooling: false,
            separable: true,
        };
        HdmsBlock {
            bank: AsppBlock::new(&format!("{prefix}.bank"), &cfg, init),
        }
    }

    pub(crate) fn macs(&self, h: usize, w: usize) -> f64 {
        self.bank.macs(h, w)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        add(x, &self.bank.forward(x)?)
    }
}

impl ParamContainer for HdmsBlock {
    fn for_each_param(&self, f: &mut dyn FnMut(&Parameter)) {
        self.bank.for_each_param(f);
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.bank.for_each_param_mut(f);
    }
}
