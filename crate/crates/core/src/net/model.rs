//! Full network: 3x3 embedding conv, residual transformer stages with
//! optional refinement units, 3x3 projection conv, global residual.
//!
//! Layout per stage (RTL): cascaded backbone blocks, each optionally
//! followed by a multiscale refinement unit, with the deepest blocks also
//! hosting the frequency chain; the stage output rejoins its input through
//! a stage-level residual. The model output is
//!
//!   Output = Input + ConvOut(trunk)
//!
//! so zeroing the projection conv makes the whole network an identity.
//!
//! Inputs of arbitrary spatial size are reflect-padded on the bottom/right
//! to multiples of 2M (the rectangular windows need both M and 2M to
//! divide the extents) and cropped back after the forward pass.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::tensor::ops::{add, crop2d, pad_reflect2d};
use crate::tensor::{conv2d, ParamContainer, Parameter, Result, Tensor, TensorError};

use super::backbone::BackboneBlock;
use super::fpp::{FppSettings, FppUnit};
use super::hdms::HdmsBlock;
use super::{FppPlacement, Init, ModelConfig};

struct Slot {
    block: BackboneBlock,
    hdms: Option<HdmsBlock>,
    fpp: Option<FppUnit>,
}

struct Stage {
    slots: Vec<Slot>,
}

pub struct HdstModel {
    cfg: ModelConfig,
    in_w: Parameter,
    in_b: Parameter,
    stages: Vec<Stage>,
    out_w: Parameter,
    out_b: Parameter,
}

/// Parameter census: overall and per top-level module (first segment of
/// the parameter name).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct ParamCount {
    pub total: usize,
    pub by_module: BTreeMap<String, usize>,
}

impl HdstModel {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<HdstModel> {
        cfg.validate()?;
        let init = Init::new(seed);
        let e = cfg.embed_channels;

        let stages = (0..cfg.n_rtl)
            .map(|r| {
                let slots = (0..cfg.blocks_per_rtl)
                    .map(|b| {
                        let block = BackboneBlock::new(
                            &format!("rtl{r}.block{b}"),
                            e,
                            cfg.window_m,
                            cfg.n_heads,
                            b,
                            &init,
                        );
                        let hdms = cfg.ablation.use_hdms.then(|| {
                            HdmsBlock::new(
                                &format!("rtl{r}.hdms{b}"),
                                e,
                                &cfg.spatial_dilations,
                                &init,
                            )
                        });
                        let fpp = Self::hosts_fpp(&cfg, r, b).then(|| {
                            FppUnit::new(
                                &format!("rtl{r}.fpp{b}"),
                                &FppSettings {
                                    channels: e,
                                    window_m: cfg.window_m,
                                    n_heads: cfg.n_heads,
                                    alpha: cfg.alpha,
                                    freq_dilations: &cfg.freq_dilations,
                                    gate_domain: cfg.gate_domain,
                                    dynamic_fusion: cfg.ablation.use_dynamic_fusion,
                                },
                                &init,
                            )
                        });
                        Slot { block, hdms, fpp }
                    })
                    .collect();
                Stage { slots }
            })
            .collect();

        Ok(HdstModel {
            in_w: init.conv("in.w", e, cfg.bands, 3, 3),
            in_b: init.zeros("in.b", vec![e]),
            stages,
            out_w: init.conv("out.w", cfg.bands, e, 3, 3),
            out_b: init.zeros("out.b", vec![cfg.bands]),
            cfg,
        })
    }

    fn hosts_fpp(cfg: &ModelConfig, rtl: usize, block: usize) -> bool {
        if !cfg.ablation.use_frequency {
            return false;
        }
        if block + cfg.fpp_depth < cfg.blocks_per_rtl {
            return false;
        }
        match cfg.fpp_placement {
            FppPlacement::PerRtl => true,
            FppPlacement::FinalRtl => rtl + 1 == cfg.n_rtl,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Bottom/right padding that brings `(h, w)` to multiples of 2M.
    fn padding(&self, h: usize, w: usize) -> (usize, usize) {
        let unit = 2 * self.cfg.window_m;
        ((unit - h % unit) % unit, (unit - w % unit) % unit)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = x.check_4d("hdst_forward")?;
        if c != self.cfg.bands {
            return Err(TensorError::InvalidArgument {
                op: "hdst_forward",
                message: format!("input has {c} bands, model expects {}", self.cfg.bands),
            });
        }
        let (pb, pr) = self.padding(h, w);
        let padded = if pb == 0 && pr == 0 {
            x.clone()
        } else {
            pad_reflect2d(x, 0, pb, 0, pr)?
        };

        let mut feat = conv2d(&padded, &self.in_w.read(), Some(&self.in_b.read()), 1, 1)?;
        for stage in &self.stages {
            let mut t = feat.clone();
            for slot in &stage.slots {
                t = slot.block.forward(&t)?;
                if let Some(hdms) = &slot.hdms {
                    t = hdms.forward(&t)?;
                }
                if let Some(fpp) = &slot.fpp {
                    t = fpp.forward(&t)?;
                }
            }
            feat = add(&feat, &t)?;
        }
        let proj = conv2d(&feat, &self.out_w.read(), Some(&self.out_b.read()), 1, 1)?;
        let out = add(&padded, &proj)?;
        if pb == 0 && pr == 0 {
            Ok(out)
        } else {
            crop2d(&out, 0, 0, h, w)
        }
    }

    pub fn count_params(&self) -> ParamCount {
        let mut by_module = BTreeMap::new();
        let mut total = 0;
        self.for_each_param(&mut |p| {
            let n = p.value().numel();
            total += n;
            let module = p.name().split('.').next().unwrap_or("").to_string();
            *by_module.entry(module).or_insert(0) += n;
        });
        ParamCount { total, by_module }
    }

    /// Multiply-accumulate estimate for one forward pass over a single
    /// `h x w` input (batch 1), computed at the padded size the network
    /// actually sees. Counts convolutions, linear projections, attention
    /// score/mix products, and FFT butterflies; ignores normalization,
    /// softmax, and elementwise work.
    pub fn estimate_macs(&self, h: usize, w: usize) -> u64 {
        let (pb, pr) = self.padding(h, w);
        let (h, w) = (h + pb, w + pr);
        let hw = (h * w) as f64;
        let e = self.cfg.embed_channels as f64;
        let bands = self.cfg.bands as f64;

        // Embedding and projection convs.
        let mut total = 2.0 * (e * bands * 9.0 * hw);
        for stage in &self.stages {
            for slot in &stage.slots {
                total += slot.block.macs(h, w);
                if let Some(hdms) = &slot.hdms {
                    total += hdms.macs(h, w);
                }
                if let Some(fpp) = &slot.fpp {
                    total += fpp.macs(h, w);
                }
            }
        }
        total as u64
    }
}

impl ParamContainer for HdstModel {
    fn for_each_param(&self, f: &mut dyn FnMut(&Parameter)) {
        f(&self.in_w);
        f(&self.in_b);
        for stage in &self.stages {
            for slot in &stage.slots {
                slot.block.for_each_param(f);
                if let Some(hdms) = &slot.hdms {
                    hdms.for_each_param(f);
                }
                if let Some(fpp) = &slot.fpp {
                    fpp.for_each_param(f);
                }
            }
        }
        f(&self.out_w);
        f(&self.out_b);
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(&mut self.in_w);
        f(&mut self.in_b);
        for stage in &mut self.stages {
            for slot in &mut stage.slots {
                slot.block.for_each_param_mut(f);
                if let Some(hdms) = &mut slot.hdms {
                    hdms.for_each_param_mut(f);
                }
                if let Some(fpp) = &mut slot.fpp {
                    fpp.for_each_param_mut(f);
                }
            }
        }
        f(&mut self.out_w);
        f(&mut self.out_b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Ablation;
    use crate::rng::CounterRng;

    fn rand_input(bands: usize, h: usize, w: usize, key: u64) -> Tensor {
        let mut rng = CounterRng::new(key);
        Tensor::from_parts(
            vec![1, bands, h, w],
            (0..bands * h * w).map(|_| rng.uniform01()).collect(),
        )
    }

    fn toy(ablation: Ablation) -> HdstModel {
        HdstModel::new(ModelConfig::toy(4).with_ablation(ablation), 123).unwrap()
    }

    #[test]
    fn zero_projection_conv_makes_identity() {
        let mut model = toy(Ablation::FULL);
        model.out_w.set_value(Tensor::zeros(vec![4, 8, 3, 3]));
        model.out_b.set_value(Tensor::zeros(vec![4]));
        let x = rand_input(4, 8, 8, 200);
        let out = model.forward(&x).unwrap();
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn padding_path_preserves_shape() {
        let model = toy(Ablation::FULL);
        // 10x14 is not a multiple of 2M = 8; the model pads to 16x16.
        let x = rand_input(4, 10, 14, 201);
        let out = model.forward(&x).unwrap();
        assert_eq!(out.shape(), &[1, 4, 10, 14]);
        assert!(out.is_all_finite());
    }

    #[test]
    fn rejects_band_mismatch() {
        let model = toy(Ablation::FULL);
        let x = rand_input(3, 8, 8, 202);
        assert!(model.forward(&x).is_err());
    }

    #[test]
    fn ablation_flags_control_module_presence() {
        let has = |m: &HdstModel, tag: &str| m.param_names().iter().any(|n| n.contains(tag));
        let base = toy(Ablation::BASELINE);
        assert!(!has(&base, "fpp") && !has(&base, "hdms"));
        let net1 = toy(Ablation::NET1);
        assert!(has(&net1, "fsgf") && has(&net1, "fsca") && !has(&net1, "fusion"));
        let net3 = toy(Ablation::NET3);
        assert!(has(&net3, "hdms") && !has(&net3, "fpp"));
        let full = toy(Ablation::FULL);
        assert!(has(&full, "fsgf") && has(&full, "fusion") && has(&full, "hdms"));
    }

    #[test]
    fn fusion_toggle_adds_beta_plus_two_convs() {
        let e = 8;
        let net1 = toy(Ablation::NET1).num_scalars();
        let net2 = toy(Ablation::NET2).num_scalars();
        // One hosting block in the toy config, so the difference is one
        // fusion stage: 1x1 conv, 3x3 conv (with biases), and beta.
        assert_eq!(net2 - net1, (e * e + e) + (9 * e * e + e) + 1);
    }

    #[test]
    fn param_counts_increase_along_both_ablation_chains() {
        let n = |a| toy(a).num_scalars();
        let (base, n1, n2) = (n(Ablation::BASELINE), n(Ablation::NET1), n(Ablation::NET2));
        let (n3, n4, full) = (n(Ablation::NET3), n(Ablation::NET4), n(Ablation::FULL));
        assert!(base < n1 && n1 < n2, "{base} {n1} {n2}");
        assert!(base < n3 && n3 < n4 && n4 < full, "{base} {n3} {n4} {full}");
    }

    #[test]
    fn count_params_census_is_consistent() {
        let model = toy(Ablation::FULL);
        let count = model.count_params();
        assert_eq!(count.total, model.num_scalars());
        assert_eq!(count.by_module.values().sum::<usize>(), count.total);
        assert!(count.by_module.contains_key("in"));
        assert!(count.by_module.contains_key("out"));
        assert!(count.by_module.contains_key("rtl0"));
    }

    #[test]
    fn placement_controls_which_stages_host_the_frequency_chain() {
        let mut cfg = ModelConfig::toy(4);
        cfg.n_rtl = 2;
        let per_rtl = HdstModel::new(cfg.clone(), 7).unwrap();
        cfg.fpp_placement = FppPlacement::FinalRtl;
        let final_rtl = HdstModel::new(cfg, 7).unwrap();
        let fpp_names = |m: &HdstModel| -> Vec<String> {
            m.param_names().into_iter().filter(|n| n.contains("fpp")).collect()
        };
        assert!(fpp_names(&per_rtl).iter().any(|n| n.starts_with("rtl0.")));
        assert!(fpp_names(&per_rtl).iter().any(|n| n.starts_with("rtl1.")));
        assert!(fpp_names(&final_rtl).iter().all(|n| n.starts_with("rtl1.")));
        assert!(!fpp_names(&final_rtl).is_empty());
    }

    #[test]
    fn same_seed_same_function() {
        let a = toy(Ablation::FULL);
        let b = toy(Ablation::FULL);
        let x = rand_input(4, 8, 8, 203);
        assert_eq!(a.forward(&x).unwrap().data(), b.forward(&x).unwrap().data());
    }

    #[test]
    fn mac_estimate_tracks_input_area() {
        let model = toy(Ablation::FULL);
        let small = model.estimate_macs(8, 8);
        let large = model.estimate_macs(16, 16);
        assert!(large > 3 * small, "{small} vs {large}");
        // Padded sizes are equal, so estimates match.
        assert_eq!(model.estimate_macs(5, 7), model.estimate_macs(8, 8));
    }

    #[test]
    fn macs_grow_slower_than_params_when_frequency_chain_enabled() {
        let base = toy(Ablation::BASELINE);
        let full = toy(Ablation::FULL);
        let param_ratio = full.num_scalars() as f64 / base.num_scalars() as f64;
        let mac_ratio = full.estimate_macs(32, 32) as f64 / base.estimate_macs(32, 32) as f64;
        assert!(
            mac_ratio < param_ratio,
            "macs x{mac_ratio:.2} vs params x{param_ratio:.2}"
        );
    }
}
