//! The binding release gate: nine criteria, each with pinned tolerances and
//! a wall-clock budget, printed as one verdict line apiece:
//!
//! ```text
//! [ACCEPTANCE] criterion 1: PASS
//! ```
//!
//! Everything runs inside a single #[test] so the criteria execute serially
//! and never contend for the core their budgets assume. Run with
//! `cargo test --test acceptance -- --nocapture` to watch the lines appear;
//! without the flag the harness shows them only on failure.

mod common;

use std::any::Any;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::{run_ok, sha256_file, write_clean, TOY_MODEL};
use hdst_core::metrics::{psnr, sam, ssim};
use hdst_core::net::{
    attention_probs, window_merge, window_partition, FppSettings, FppUnit, FsgfBlock, GateDomain,
    Init,
};
use hdst_core::noise::{apply_noise, apply_noise_with_log, EffectKind, NoisePattern};
use hdst_core::tensor::{
    finite_diff_check, ops, spectral_forward, spectral_inverse, ParamContainer, Tensor,
};
use hdst_core::{Ablation, CounterRng, HdstModel, HsiCube, ModelConfig, NoiseSpec};
use tempfile::tempdir;

fn rand_tensor(shape: Vec<usize>, seed: u64) -> Tensor {
    let mut rng = CounterRng::new(seed);
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn criterion(&mut self, n: usize, label: &str, budget: Duration, body: impl FnOnce()) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(body));
        let took = start.elapsed();
        let verdict = match &outcome {
            Ok(()) if took <= budget => "PASS",
            _ => "FAIL",
        };
        println!("[ACCEPTANCE] criterion {n}: {verdict}");
        println!("    {label}: {took:.2?} of {budget:?} budget");
        match outcome {
            Ok(()) if took <= budget => {}
            Ok(()) => self
                .failures
                .push(format!("criterion {n} ({label}): over budget, {took:.2?} > {budget:?}")),
            Err(payload) => {
                let text = panic_text(payload.as_ref());
                println!("    {text}");
                self.failures.push(format!("criterion {n} ({label}): {text}"));
            }
        }
    }
}

fn panic_text(payload: &(dyn Any + Send)) -> String {
    payload
        .downcast_ref::<String>()
        .cloned()
        .or_else(|| payload.downcast_ref::<&str>().map(|s| (*s).to_string()))
        .unwrap_or_else(|| "panic with non-string payload".to_string())
}

#[test]
fn acceptance_criteria() {
    let mut gate = Gate { failures: Vec::new() };
    gate.criterion(1, "fft unitarity and energy conservation", Duration::from_secs(1), c1_fft);
    gate.criterion(2, "toy-model finite-difference gradients", Duration::from_secs(120), c2_gradients);
    gate.criterion(3, "gate and fusion limit identities", Duration::from_secs(1), c3_identities);
    gate.criterion(4, "window bijection and attention rows", Duration::from_secs(1), c4_windows);
    gate.criterion(5, "noise generator contracts", Duration::from_secs(10), c5_noise);
    gate.criterion(6, "metric oracles", Duration::from_secs(1), c6_metrics);
    gate.criterion(7, "end-to-end toy pipeline", Duration::from_secs(600), c7_pipeline);
    gate.criterion(8, "ablation parameter and MAC direction", Duration::from_secs(10), c8_ablation);
    gate.criterion(9, "byte-identical reruns", Duration::from_secs(1200), c9_determinism);
    assert!(
        gate.failures.is_empty(),
        "acceptance failures:\n  {}",
        gate.failures.join("\n  ")
    );
}

/// Criterion 1: orthonormal FFT round-trips within 1e-6 relative error and
/// conserves energy to the same tolerance, on an odd 7x9 and a pow2 16x16.
fn c1_fft() {
    for (h, w, seed) in [(7usize, 9usize, 0xF1u64), (16, 16, 0xF2)] {
        let x = rand_tensor(vec![1, 2, h, w], seed);
        let f = spectral_forward(&x).unwrap();
        let back = spectral_inverse(&f).unwrap();
        let num: f64 = x
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den: f64 = x.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(num / den <= 1e-6, "{h}x{w} roundtrip rel err {}", num / den);

        let spatial: f64 = x.data().iter().map(|v| v * v).sum();
        let spectral: f64 = f
            .real
            .data()
            .iter()
            .zip(f.imag.data())
            .map(|(r, i)| r * r + i * i)
            .sum();
        let rel = (spatial - spectral).abs() / spatial;
        assert!(rel <= 1e-6, "{h}x{w} energy mismatch rel {rel}");
    }
}

/// Criterion 2: every parameter of the toy model (embed 8, 1 RTL x 2
/// blocks, fpp_depth 1, M=4, 4 bands) passes central finite differences on
/// an 8x8 input at eps 1e-4 with max relative error <= 1e-4.
///
/// The loss probes the output with a fixed random cotangent plus a unit
/// linear term in the parameter under test; central differences are exact
/// for linear terms, so the term only keeps the relative-error denominator
/// at the verification scale on coordinates whose true gradient vanishes.
fn c2_gradients() {
    let mut model = HdstModel::new(ModelConfig::toy(4), 2024).unwrap();
    let x = rand_tensor(vec![1, 4, 8, 8], 301);
    let probe = rand_tensor(vec![1, 4, 8, 8], 302);
    for name in model.param_names() {
        let worst = finite_diff_check(&mut model, &name, 1e-4, |m: &HdstModel| {
            let out = m.forward(&x)?;
            let probe_loss = ops::sum_all(&ops::mul(&out, &probe)?);
            let mut ballast = None;
            m.for_each_param(&mut |p| {
                if p.name() == name {
                    ballast = Some(ops::sum_all(&p.read()));
                }
            });
            ops::add(&probe_loss, &ballast.expect("parameter exists"))
        })
        .unwrap();
        assert!(worst <= 1e-4, "{name}: worst rel err {worst}");
    }
}

fn force_gate(block: &mut FsgfBlock, channels: usize, bias: f64) {
    let mut hits = 0;
    block.for_each_param_mut(&mut |p| {
        if p.name().ends_with("gate.w") {
            p.set_value(Tensor::zeros(vec![channels, 2 * channels, 1, 1]));
            hits += 1;
        } else if p.name().ends_with("gate.b") {
            p.set_value(Tensor::full(vec![channels], bias));
            hits += 1;
        }
    });
    assert_eq!(hits, 2, "gate parameters not found");
}

/// Criterion 3: the gating limit identities. A saturated-high gate passes
/// the input through unchanged (<=1e-6); a saturated-low gate with alpha=0
/// blanks the output; a zero fusion coefficient makes the whole FPP unit an
/// identity (<=1e-12).
fn c3_identities() {
    let c = 4;
    let s = rand_tensor(vec![1, c, 16, 16], 0xC3);

    let mut high = FsgfBlock::new("fsgf", c, &[2, 4, 8], 0.5, GateDomain::Frequency, &Init::new(31));
    force_gate(&mut high, c, 40.0);
    let out = high.forward(&s).unwrap();
    let worst = out
        .data()
        .iter()
        .zip(s.data())
        .map(|(o, i)| (o - i).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-6, "open gate deviates by {worst}");

    let mut low = FsgfBlock::new("fsgf", c, &[2, 4, 8], 0.0, GateDomain::Frequency, &Init::new(32));
    force_gate(&mut low, c, -40.0);
    let out = low.forward(&s).unwrap();
    let worst = out.data().iter().map(|o| o.abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-6, "closed gate with alpha 0 leaves {worst}");

    let mut unit = FppUnit::new(
        "fpp",
        &FppSettings {
            channels: c,
            window_m: 4,
            n_heads: 2,
            alpha: 0.5,
            freq_dilations: &[2, 4, 8],
            gate_domain: GateDomain::Frequency,
            dynamic_fusion: true,
        },
        &Init::new(33),
    );
    unit.for_each_param_mut(&mut |p| {
        if p.name().ends_with("fusion.beta") {
            p.set_value(Tensor::zeros(vec![1]));
        }
    });
    let out = unit.forward(&s).unwrap();
    let worst = out
        .data()
        .iter()
        .zip(s.data())
        .map(|(o, i)| (o - i).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-12, "beta=0 unit deviates by {worst}");
}

/// Criterion 4: merging partitioned windows restores the input bit for bit,
/// and every attention row is a probability distribution (sum 1 +- 1e-9).
fn c4_windows() {
    let x = rand_tensor(vec![2, 3, 8, 12], 0xC4);
    let wins = window_partition(&x, 4).unwrap();
    let back = window_merge(&wins, 4, 2, 3, 8, 12).unwrap();
    assert_eq!(back.shape(), x.shape());
    assert_eq!(back.data(), x.data(), "merge(partition(x)) != x");

    let q = rand_tensor(vec![4, 16, 8], 0xC5);
    let k = rand_tensor(vec![4, 16, 8], 0xC6);
    let probs = attention_probs(&q, &k, 2).unwrap();
    let t = probs.shape()[2];
    for (r, row) in probs.data().chunks(t).enumerate() {
        let sum: f64 = row.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-9, "row {r} sums to {sum}");
    }
}

/// Criterion 5: noise generator contracts. Zeroed ranges are bitwise
/// identities for all five patterns; deadline columns are exactly zero;
/// impulse pixels are exactly 0 or 1 at the drawn ratio (+-10% relative);
/// the realized per-band Gaussian sigma is within 5% of the drawn sigma_b
/// at 64x64; and a manifest regenerates the noisy cube byte for byte
/// through the command line.
fn c5_noise() {
    let patterns = [
        NoisePattern::NoniidGaussian,
        NoisePattern::GaussianStripe,
        NoisePattern::GaussianDeadline,
        NoisePattern::GaussianImpulse,
        NoisePattern::Mixture,
    ];
    let small = common::clean_cube();
    for pattern in patterns {
        let mut spec = NoiseSpec::new(pattern, 99);
        spec.sigma_range = (0.0, 0.0);
        spec.column_fraction_range = (0.0, 0.0);
        spec.stripe_offset_range = (0.0, 0.0);
        spec.impulse_ratio_range = (0.0, 0.0);
        let noisy = apply_noise(&small, &spec).unwrap();
        assert_eq!(noisy.data, small.data, "{pattern:?} with zero ranges is not an identity");
    }

    let (noisy, real) =
        apply_noise_with_log(&small, &NoiseSpec::new(NoisePattern::GaussianDeadline, 7)).unwrap();
    let mut saw_deadline = false;
    for effect in &real.band_effects {
        if let EffectKind::Deadline { columns } = &effect.kind {
            saw_deadline = true;
            for &col in columns {
                for y in 0..noisy.height {
                    let v = noisy.band(effect.band)[y * noisy.width + col];
                    assert_eq!(v, 0.0, "dead column {col} row {y} holds {v}");
                }
            }
        }
    }
    assert!(saw_deadline, "deadline pattern produced no deadline effects");

    let flat = HsiCube::constant(4, 64, 64, 0.5);
    let mut spec = NoiseSpec::new(NoisePattern::GaussianImpulse, 23);
    spec.sigma_range = (0.0, 0.0);
    spec.affected_band_fraction = 1.0;
    spec.impulse_ratio_range = (0.4, 0.4);
    let noisy = apply_noise(&flat, &spec).unwrap();
    for b in 0..noisy.bands {
        let plane = noisy.band(b);
        let hits = plane.iter().filter(|&&v| v == 0.0 || v == 1.0).count();
        assert!(
            plane.iter().all(|&v| v == 0.0 || v == 1.0 || v == 0.5),
            "band {b} holds non-impulse values"
        );
        let ratio = hits as f64 / plane.len() as f64;
        assert!(
            (ratio - 0.4).abs() / 0.4 <= 0.10,
            "band {b} impulse ratio {ratio}"
        );
    }

    let zeros = HsiCube::zeros(8, 64, 64);
    let (noisy, real) =
        apply_noise_with_log(&zeros, &NoiseSpec::new(NoisePattern::NoniidGaussian, 41)).unwrap();
    for b in 0..noisy.bands {
        let plane = noisy.band(b);
        let n = plane.len() as f64;
        let mean: f64 = plane.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        let var: f64 = plane
            .iter()
            .map(|&v| (f64::from(v) - mean) * (f64::from(v) - mean))
            .sum::<f64>()
            / n;
        let drawn = real.sigma_per_band[b];
        let rel = (var.sqrt() - drawn).abs() / drawn;
        assert!(rel <= 0.05, "band {b}: sample sigma {} vs drawn {drawn}", var.sqrt());
    }

    // Manifest round trip through the binary.
    let tmp = tempdir().unwrap();
    write_clean(tmp.path());
    run_ok(
        tmp.path(),
        &[
            "synthesize", "--seed", "88", "--out", "a",
            "--set", "data.clean=clean.hdc",
            "--set", "noise.pattern=mixture",
        ],
    );
    let manifest: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(tmp.path().join("a/noise_manifest.json")).unwrap(),
    )
    .unwrap();
    let regen = serde_json::json!({
        "data": { "clean": "clean.hdc" },
        "noise": manifest["spec"],
    });
    fs::write(tmp.path().join("regen.json"), regen.to_string()).unwrap();
    run_ok(tmp.path(), &["synthesize", "--config", "regen.json", "--out", "b"]);
    assert_eq!(
        sha256_file(&tmp.path().join("a/noisy.hdc")),
        sha256_file(&tmp.path().join("b/noisy.hdc")),
        "manifest spec did not regenerate the noisy cube"
    );
}

/// Criterion 6: metric oracles. PSNR of a zero cube against a 0.5 cube at
/// peak 1 is 6.0206 dB (+-1e-3); SSIM of a cube with itself is exactly 1;
/// SAM of orthogonal spectra is 90 degrees (+-1e-6); SAM is invariant to
/// power-of-two scaling of one argument (<=1e-9, exact in f32).
fn c6_metrics() {
    let zeros = HsiCube::zeros(3, 16, 16);
    let half = HsiCube::constant(3, 16, 16, 0.5);
    let (_, mean_db) = psnr(&zeros, &half, 1.0).unwrap();
    assert!((mean_db - 6.0206).abs() <= 1e-3, "PSNR {mean_db}");

    let x = common::clean_cube();
    let (_, mean_ssim) = ssim(&x, &x, 1.0).unwrap();
    assert_eq!(mean_ssim, 1.0, "SSIM(x,x) = {mean_ssim}");

    let mut a = HsiCube::zeros(2, 4, 4);
    let mut b = HsiCube::zeros(2, 4, 4);
    a.band_mut(0).fill(1.0);
    b.band_mut(1).fill(1.0);
    let score = sam(&a, &b).unwrap();
    assert!((score.mean_deg - 90.0).abs() <= 1e-6, "SAM {}", score.mean_deg);

    let y = {
        let mut y = x.clone();
        for (i, v) in y.data.iter_mut().enumerate() {
            *v += 0.01 * ((i % 7) as f32 - 3.0);
        }
        y
    };
    let base = sam(&x, &y).unwrap().mean_deg;
    let mut scaled = x.clone();
    for v in scaled.data.iter_mut() {
        *v *= 4.0;
    }
    let moved = sam(&scaled, &y).unwrap().mean_deg;
    assert!((moved - base).abs() <= 1e-9, "SAM drifted {} under scaling", moved - base);
}

/// Runs synthesize -> train -> denoise -> evaluate (denoised and noisy) in
/// `dir` with fixed seeds; shared by criteria 7 and 9.
fn run_pipeline(dir: &Path) {
    write_clean(dir);
    run_ok(
        dir,
        &[
            "synthesize", "--seed", "2024", "--out", "p",
            "--set", "data.clean=clean.hdc",
            "--set", "noise.pattern=mixture",
        ],
    );
    let mut train = vec![
        "train", "--seed", "2024", "--out", "p",
        "--set", "data.clean=clean.hdc",
        "--set", "data.noisy=p/noisy.hdc",
        "--set", "data.patch_size=32",
        "--set", "data.stride=32",
        "--set", "train.epochs=300",
        "--set", "train.batch_size=1",
        "--set", "train.lr.initial=0.001",
        "--set", "train.checkpoint_interval=1000",
    ];
    train.extend_from_slice(TOY_MODEL);
    run_ok(dir, &train);
    run_ok(
        dir,
        &[
            "denoise", "--out", "p",
            "--set", "data.noisy=p/noisy.hdc",
            "--set", "data.tile=32",
            "--set", "data.overlap=0",
        ],
    );
    run_ok(dir, &["evaluate", "--out", "p", "--set", "data.clean=clean.hdc"]);
    run_ok(
        dir,
        &[
            "evaluate", "--out", "p",
            "--set", "data.clean=clean.hdc",
            "--set", "eval.test=p/noisy.hdc",
            "--set", "eval.report=p/noisy_report",
        ],
    );
}

fn mean_psnr_of(report: &Path) -> f64 {
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    v["mean_psnr"].as_f64().unwrap()
}

/// Criterion 7: the toy pipeline must actually learn. 300 steps on the
/// overfit patch bring the loss to <=10% of its initial value and lift the
/// denoised PSNR at least 3 dB above the noisy input.
fn c7_pipeline() {
    let tmp = tempdir().unwrap();
    run_pipeline(tmp.path());

    let csv = fs::read_to_string(tmp.path().join("p/loss.csv")).unwrap();
    let losses: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(losses.len(), 300, "expected one loss per epoch");
    let (initial, fin) = (losses[0], *losses.last().unwrap());
    assert!(
        fin <= 0.10 * initial,
        "loss fell only from {initial} to {fin}"
    );

    let denoised = mean_psnr_of(&tmp.path().join("p/report.json"));
    let noisy = mean_psnr_of(&tmp.path().join("p/noisy_report.json"));
    assert!(
        denoised >= noisy + 3.0,
        "denoised {denoised:.2} dB vs noisy {noisy:.2} dB"
    );
}

/// Criterion 8: at a fixed full-size configuration, parameter counts rise
/// strictly along Baseline -> Net1 -> Net2 and Baseline -> Net3 -> Net4 ->
/// HDST, and every FPP-bearing variant grows its MACs by a smaller factor
/// than its parameters (the frequency chain is light per pixel).
fn c8_ablation() {
    let base_cfg = ModelConfig::new(31, 96);
    let mut params = std::collections::BTreeMap::new();
    let mut macs = std::collections::BTreeMap::new();
    for (name, ablation) in Ablation::GRID {
        let model = HdstModel::new(base_cfg.clone().with_ablation(ablation), 0).unwrap();
        params.insert(name, model.count_params().total as f64);
        macs.insert(name, model.estimate_macs(64, 64) as f64);
    }
    for chain in [
        ["Baseline", "Net1", "Net2"].as_slice(),
        ["Baseline", "Net3", "Net4", "HDST"].as_slice(),
    ] {
        for pair in chain.windows(2) {
            assert!(
                params[pair[0]] < params[pair[1]],
                "{} has {} params, {} has {}",
                pair[0], params[pair[0]], pair[1], params[pair[1]]
            );
        }
    }
    for fpp_variant in ["Net1", "Net2", "Net4", "HDST"] {
        let p_ratio = params[fpp_variant] / params["Baseline"];
        let m_ratio = macs[fpp_variant] / macs["Baseline"];
        assert!(
            m_ratio < p_ratio,
            "{fpp_variant}: MAC ratio {m_ratio:.3} >= param ratio {p_ratio:.3}"
        );
    }
}

/// Criterion 9: the full pipeline run twice with the same seeds produces
/// byte-identical artifacts, covering the criterion-5 synthesis outputs and
/// the criterion-7 training outputs alike.
fn c9_determinism() {
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    run_pipeline(a.path());
    run_pipeline(b.path());
    for artifact in [
        "p/noisy.hdc",
        "p/noise_manifest.json",
        "p/model.ckpt",
        "p/loss.csv",
        "p/denoised.hdc",
        "p/report.json",
        "p/report.txt",
    ] {
        assert_eq!(
            sha256_file(&a.path().join(artifact)),
            sha256_file(&b.path().join(artifact)),
            "{artifact} differs between identically seeded runs"
        );
    }
}
