//! `hdst inspect`: the ablation grid at the configured model size, with
//! parameter counts, MAC estimates at the working patch size, and growth
//! factors relative to the baseline row.

use hdst_core::net::{Ablation, HdstModel};
use hdst_core::ModelConfig;

use crate::config::RunConfig;
use crate::error::Result;

pub fn run(cfg: &RunConfig) -> Result<()> {
    let base = cfg
        .model
        .clone()
        .unwrap_or_else(|| ModelConfig::new(31, 96));
    let size = cfg.data.patch_size;
    println!(
        "{:<10} {:>12} {:>16} {:>9} {:>9}",
        "variant",
        "params",
        format!("macs@{size}x{size}"),
        "p-ratio",
        "m-ratio"
    );
    let mut baseline: Option<(usize, u64)> = None;
    for (name, ablation) in Ablation::GRID {
        let model = HdstModel::new(base.clone().with_ablation(ablation), 0)?;
        let params = model.count_params().total;
        let macs = model.estimate_macs(size, size);
        let (p0, m0) = *baseline.get_or_insert((params, macs));
        println!(
            "{name:<10} {params:>12} {macs:>16} {:>9.3} {:>9.3}",
            params as f64 / p0 as f64,
            macs as f64 / m0 as f64
        );
    }
    Ok(())
}
