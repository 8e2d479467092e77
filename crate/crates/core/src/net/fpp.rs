//! The frequency refinement chain hosted by the deepest transformer
//! blocks: FSGF calibrates the spectrum, FSCA lets spatial queries attend
//! over the calibrated features, and the fusion stage injects the result
//! back into the trunk.
//!
//! Without a fusion stage the injection uses a fixed unit coefficient
//! (Output = S + H), so enabling fusion adds exactly beta plus the two
//! fusion convolutions to the parameter set.

use crate::tensor::ops::add;
use crate::tensor::{ParamContainer, Parameter, Result, Tensor};

use super::fsca::FscaBlock;
use super::fsgf::FsgfBlock;
use super::fusion::DynamicFusionBlock;
use super::{GateDomain, Init};

pub struct FppUnit {
    pub(crate) fsgf: FsgfBlock,
    pub(crate) fsca: FscaBlock,
    pub(crate) fusion: Option<DynamicFusionBlock>,
}

pub struct FppSettings<'a> {
    pub channels: usize,
    pub window_m: usize,
    pub n_heads: usize,
    pub alpha: f64,
    pub freq_dilations: &'a [usize],
    pub gate_domain: GateDomain,
    pub dynamic_fusion: bool,
}

impl FppUnit {
    pub fn new(prefix: &str, s: &FppSettings, init: &Init) -> FppUnit {
        FppUnit {
            fsgf: FsgfBlock::new(
                &format!("{prefix}.fsgf"),
                s.channels,
                s.freq_dilations,
                s.alpha,
                s.gate_domain,
                init,
            ),
            fsca: FscaBlock::new(&format!("{prefix}.fsca"), s.channels, s.window_m, s.n_heads, init),
            fusion: s
                .dynamic_fusion
                .then(|| DynamicFusionBlock::new(&format!("{prefix}.fusion"), s.channels, init)),
        }
    }

    pub(crate) fn macs(&self, h: usize, w: usize) -> f64 {
        self.fsgf.macs(h, w)
            + self.fsca.macs(h, w)
            + self.fusion.as_ref().map_or(0.0, |f| f.macs(h, w))
    }

    pub fn forward(&self, s: &Tensor) -> Result<Tensor> {
        let calibrated = self.fsgf.forward(s)?;
        let attended = self.fsca.forward(s, &calibrated)?;
        match &self.fusion {
            Some(fusion) => fusion.forward(s, &attended),
            None => add(s, &attended),
        }
    }
}

impl ParamContainer for FppUnit {
    fn for_each_param(&self, f: &mut dyn FnMut(&Parameter)) {
        self.fsgf.for_each_param(f);
        self.fsca.for_each_param(f);
        if let Some(fusion) = &self.fusion {
            fusion.for_each_param(f);
        }
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.fsgf.for_each_param_mut(f);
        self.fsca.for_each_param_mut(f);
        if let Some(fusion) = &mut self.fusion {
            fusion.for_each_param_mut(f);
        }
    }
}
