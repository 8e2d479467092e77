//! Frequency-domain filtering with a learned gate that mixes the filtered
//! reconstruction back into the spatial features.
//!
//! Pipeline: orthonormal 2-D FFT packs each feature plane into real/imag
//! channel pairs, a dilated filter bank processes the packed spectrum, an
//! inverse FFT plus 3x3 conv reconstructs a spatial estimate S', and a 1x1
//! conv over the processed spectrum produces gate logits. The output is
//!
//!   F' = S .* Gate + alpha * S' .* (1 - Gate)
//!
//! With the gate saturated high the input passes through untouched; with it
//! saturated low (and alpha = 0) the output vanishes. Those two identities
//! anchor the test suite and hold in the default gate layout.

use crate::tensor::ops::{add, affine, concat, mul};
use crate::tensor::{
    conv2d, fft2_to_channels, ifft2_from_channels, ops::sigmoid, ParamContainer, Parameter,
    Result, Tensor,
};

use super::aspp::{AsppBlock, AsppConfig};
use super::{GateDomain, Init};

pub struct FsgfBlock {
    aspp: AsppBlock,
    recon_w: Parameter,
    recon_b: Parameter,
    gate_w: Parameter,
    /// Starts at zero: the gate opens at 0.5 and training moves it.
    gate_b: Parameter,
    alpha: f64,
    gate_domain: GateDomain,
    channels: usize,
}

impl FsgfBlock {
    pub fn new(
        prefix: &str,
        channels: usize,
        freq_dilations: &[usize],
        alpha: f64,
        gate_domain: GateDomain,
        init: &Init,
    ) -> FsgfBlock {
        // The packed spectrum carries 2C planes (real + imaginary).
        let aspp_cfg = AsppConfig {
            channels: 2 * channels,
            rates: freq_dilations.to_vec(),
            pooling: false,
            separable: false,
        };
        FsgfBlock {
            aspp: AsppBlock::new(&format!("{prefix}.aspp"), &aspp_cfg, init),
            recon_w: init.conv(&format!("{prefix}.recon.w"), channels, channels, 3, 3),
            recon_b: init.zeros(&format!("{prefix}.recon.b"), vec![channels]),
            gate_w: init.conv(&format!("{prefix}.gate.w"), channels, 2 * channels, 1, 1),
            gate_b: init.zeros(&format!("{prefix}.gate.b"), vec![channels]),
            alpha,
            gate_domain,
            channels,
        }
    }

    pub(crate) fn macs(&self, h: usize, w: usize) -> f64 {
        let hw = (h * w) as f64;
        let c = self.channels as f64;
        // Forward and inverse transforms over C complex planes, plus one
        // more inverse when the gate is evaluated in image layout.
        let n_fft = match self.gate_domain {
            GateDomain::Frequency => 2.0,
            GateDomain::Spatial => 3.0,
        };
        n_fft * super::fft_macs(self.channels, h, w)
            + self.aspp.macs(h, w)
            + c * c * 9.0 * hw
            + c * (2.0 * c) * hw
    }

    pub fn forward(&self, s: &Tensor) -> Result<Tensor> {
        let spectrum = fft2_to_channels(s)?;
        let processed = self.aspp.forward(&spectrum)?;

        let spatial = ifft2_from_channels(&processed)?;
        let s_recon = conv2d(&spatial, &self.recon_w.read(), Some(&self.recon_b.read()), 1, 1)?;

        let logits = conv2d(&processed, &self.gate_w.read(), Some(&self.gate_b.read()), 1, 1)?;
        let gate = match self.gate_domain {
            GateDomain::Frequency => sigmoid(&logits),
            GateDomain::Spatial => {
                // Read the logits as real spectra (zero imaginary part) and
                // gate in image layout.
                let zeros = Tensor::zeros(logits.shape().to_vec());
                let packed = concat(&[&logits, &zeros], 1)?;
                sigmoid(&ifft2_from_channels(&packed)?)
            }
        };

        let kept = mul(s, &gate)?;
        let injected = mul(&s_recon, &affine(&gate, -1.0, 1.0))?;
        add(&kept, &affine(&injected, self.alpha, 0.0))
    }
}

impl ParamContainer for FsgfBlock {
    fn for_each_param(&self, f: &mut dyn FnMut(&Parameter)) {
        self.aspp.for_each_param(f);
        f(&self.recon_w);
        f(&self.recon_b);
        f(&self.gate_w);
        f(&self.gate_b);
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.aspp.for_each_param_mut(f);
        f(&mut self.recon_w);
        f(&mut self.recon_b);
        f(&mut self.gate_w);
        f(&mut self.gate_b);
    }
}
