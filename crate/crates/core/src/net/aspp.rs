//! Parallel dilated-convolution bank fused by a 1x1 convolution.
//!
//! One 1x1 branch plus one 3x3 branch per dilation rate, optionally a
//! global-pooling branch; outputs are concatenated along channels and fused
//! back to the input width. Branches are linear. Any nonlinearity belongs
//! to the host module, which keeps the bank usable on spectra (where a
//! pointwise real nonlinearity has no frequency-domain meaning) as well as
//! on spatial features.

use crate::tensor::ops::{avgpool_spatial, broadcast_spatial, concat, linear};
use crate::tensor::{conv2d, ParamContainer, Parameter, Result, Tensor};

use super::Init;

#[derive(Clone, Debug)]
pub struct AsppConfig {
    pub channels: usize,
    pub rates: Vec<usize>,
    /// Add a global-average branch (pool -> linear -> broadcast).
    pub pooling: bool,
    /// Use depthwise 3x3 + pointwise 1x1 per rate instead of dense 3x3.
    pub separable: bool,
}

struct RateBranch {
    /// Dense: the 3x3 kernel. Separable: the depthwise 3x3 kernel.
    w: Parameter,
    b: Parameter,
    /// Pointwise stage of a separable branch.
    pw: Option<(Parameter, Parameter)>,
    dilation: usize,
}

pub struct AsppBlock {
    point_w: Parameter,
    point_b: Parameter,
    rates: Vec<RateBranch>,
    pool: Option<(Parameter, Parameter)>,
    fuse_w: Parameter,
    fuse_b: Parameter,
    channels: usize,
}

impl AsppBlock {
    pub fn new(prefix: &str, cfg: &AsppConfig, init: &Init) -> AsppBlock {
        let c = cfg.channels;
        let rates = cfg
            .rates
            .iter()
            .enumerate()
            .map(|(i, &dilation)| {
                let base = format!("{prefix}.rate{i}");
                if cfg.separable {
                    RateBranch {
                        w: init.conv(&format!("{base}.dw.w"), c, 1, 3, 3),
                        b: init.zeros(&format!("{base}.dw.b"), vec![c]),
                        pw: Some((
                            init.conv(&format!("{base}.pw.w"), c, c, 1, 1),
                            init.zeros(&format!("{base}.pw.b"), vec![c]),
                        )),
                        dilation,
                    }
                } else {
                    RateBranch {
                        w: init.conv(&format!("{base}.w"), c, c, 3, 3),
                        b: init.zeros(&format!("{base}.b"), vec![c]),
                        pw: None,
                        dilation,
                    }
                }
            })
            .collect::<Vec<_>>();
        let pool = cfg.pooling.then(|| {
            (
                init.matrix(&format!("{prefix}.pool.w"), c, c),
                init.zeros(&format!("{prefix}.pool.b"), vec![c]),
            )
        });
        let n_branches = 1 + rates.len() + pool.is_some() as usize;
        AsppBlock {
            point_w: init.conv(&format!("{prefix}.point.w"), c, c, 1, 1),
            point_b: init.zeros(&format!("{prefix}.point.b"), vec![c]),
            rates,
            pool,
            fuse_w: init.conv(&format!("{prefix}.fuse.w"), c, n_branches * c, 1, 1),
            fuse_b: init.zeros(&format!("{prefix}.fuse.b"), vec![c]),
            channels: c,
        }
    }

    pub fn n_branches(&self) -> usize {
        1 + self.rates.len() + self.pool.is_some() as usize
    }

    /// Multiply-accumulates for a batch-1 forward over `h x w`.
    pub(crate) fn macs(&self, h: usize, w: usize) -> f64 {
        let hw = (h * w) as f64;
        let c = self.channels as f64;
        let mut total = c * c * hw;
        for br in &self.rates {
            total += match &br.pw {
                Some(_) => c * 9.0 * hw + c * c * hw,
                None => c * c * 9.0 * hw,
            };
        }
        if self.pool.is_some() {
            total += c * c;
        }
        total + self.n_branches() as f64 * c * c * hw
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, _, h, w) = x.check_4d("aspp_forward")?;
        let mut branches =
            vec![conv2d(x, &self.point_w.read(), Some(&self.point_b.read()), 1, 1)?];
        for br in &self.rates {
            let mut y = match &br.pw {
                // Depthwise: one kernel plane per channel.
                Some(_) => conv2d(x, &br.w.read(), Some(&br.b.read()), br.dilation, self.channels)?,
                None => conv2d(x, &br.w.read(), Some(&br.b.read()), br.dilation, 1)?,
            };
            if let Some((pw, pb)) = &br.pw {
                y = conv2d(&y, &pw.read(), Some(&pb.read()), 1, 1)?;
            }
            branches.push(y);
        }
        if let Some((pw, pb)) = &self.pool {
            let pooled = avgpool_spatial(x)?;
            let mixed = linear(&pooled, &pw.read(), Some(&pb.read()))?;
            branches.push(broadcast_spatial(&mixed, h, w)?);
        }
        let refs: Vec<&Tensor> = branches.iter().collect();
        let stacked = concat(&refs, 1)?;
        conv2d(&stacked, &self.fuse_w.read(), Some(&self.fuse_b.read()), 1, 1)
    }
}

impl ParamContainer for AsppBlock {
    fn for_each_param(&self, f: &mut dyn FnMut(&Parameter)) {
        f(&self.point_w);
        f(&self.point_b);
        for br in &self.rates {
            f(&br.w);
            f(&br.b);
            if let Some((pw, pb)) = &br.pw {
                f(pw);
                f(pb);
            }
        }
        if let Some((pw, pb)) = &self.pool {
            f(pw);
            f(pb);
        }
        f(&self.fuse_w);
        f(&self.fuse_b);
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(&mut self.point_w);
        f(&mut self.point_b);
        for br in &mut self.rates {
            f(&mut br.w);
            f(&mut br.b);
            if let Some((pw, pb)) = &mut br.pw {
                f(pw);
                f(pb);
            }
        }
        if let Some((pw, pb)) = &mut self.pool {
            f(pw);
            f(pb);
        }
        f(&mut self.fuse_w);
        f(&mut self.fuse_b);
    }
}
