//! Learnable-coefficient residual injection.
//!
//! The calibrated features pass through a 1x1 conv, GELU, and a 3x3 conv,
//! then rejoin the trunk scaled by a single trainable coefficient beta.
//! Beta starts at 0.1 so a fresh unit injects a small but nonzero signal.

use crate::tensor::ops::{add, gelu, mul_scalar_t};
use crate::tensor::{conv2d, ParamContainer, Parameter, Result, Tensor};

use super::Init;

pub const BETA_INIT: f64 = 0.1;

pub struct DynamicFusionBlock {
    w1: Parameter,
    b1: Parameter,
    w2: Parameter,
    b2: Parameter,
    beta: Parameter,
}

impl DynamicFusionBlock {
    pub fn new(prefix: &str, channels: usize, init: &Init) -> DynamicFusionBlock {
        DynamicFusionBlock {
            w1: init.conv(&format!("{prefix}.w1"), channels, channels, 1, 1),
            b1: init.zeros(&format!("{prefix}.b1"), vec![channels]),
            w2: init.conv(&format!("{prefix}.w2"), channels, channels, 3, 3),
            b2: init.zeros(&format!("{prefix}.b2"), vec![channels]),
            beta: init.full(&format!("{prefix}.beta"), vec![1], BETA_INIT),
        }
    }

    pub(crate) fn macs(&self, h: usize, w: usize) -> f64 {
        let hw = (h * w) as f64;
        let c = self.w1.value().shape()[0] as f64;
        c * c * hw + 9.0 * c * c * hw
    }

    pub fn forward(&self, s: &Tensor, h: &Tensor) -> Result<Tensor> {
        let mixed = conv2d(h, &self.w1.read(), Some(&self.b1.read()), 1, 1)?;
        let fused = conv2d(&gelu(&mixed), &self.w2.read(), Some(&self.b2.read()), 1, 1)?;
        add(s, &mul_scalar_t(&fused, &self.beta.read())?)
    }
}

impl ParamContainer for DynamicFusionBlock {
    fn for_each_param(&self, f: &mut dyn FnMut(&Parameter)) {
        f(&self.w1);
        f(&self.b1);
        f(&self.w2);
        f(&self.b2);
        f(&self.beta);
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(&mut self.w1);
        f(&mut self.b1);
        f(&mut self.w2);
        f(&mut self.b2);
        f(&mut self.beta);
    }
}
