//! Loss, the per-epoch fitting step, and tiled whole-cube inference.
//!
//! The objective is mean (not sum) squared error so learning rates transfer
//! across patch sizes. An epoch shuffles the patch order from a caller-
//! provided seed; passing `substream(train_seed, epoch)` keeps every epoch's
//! order reproducible independent of how many epochs ran before, which is
//! what makes checkpoint resume bit-exact.

use crate::net::HdstModel;
use crate::noise::HsiCube;
use crate::rng::CounterRng;
use crate::tensor::{ops, AdamState, GradTape, Result, Tensor, TensorError};

/// Mean over all elements of the squared difference.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    let d = ops::sub(pred, target)?;
    Ok(ops::mean_all(&ops::mul(&d, &d)?))
}

/// One pass over `pairs` of (noisy, clean) `[1,C,H,W]` tensors in a
/// shuffled order, stepping the optimizer once per batch. Returns the mean
/// per-sample loss. A non-finite loss aborts before the corresponding
/// optimizer step so the model still holds its last good values.
pub fn train_epoch(
    model: &mut HdstModel,
    optim: &mut AdamState,
    pairs: &[(Tensor, Tensor)],
    batch_size: usize,
    order_seed: u64,
) -> Result<f64> {
    if pairs.is_empty() || batch_size == 0 {
        return Err(TensorError::InvalidArgument {
            op: "train_epoch",
            message: "need at least one pair and a positive batch size".into(),
        });
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    CounterRng::new(order_seed).shuffle(&mut order);
    let mut total = 0.0;
    for chunk in order.chunks(batch_size) {
        let noisy: Vec<&Tensor> = chunk.iter().map(|&i| &pairs[i].0).collect();
        let clean: Vec<&Tensor> = chunk.iter().map(|&i| &pairs[i].1).collect();
        let xb = ops::concat(&noisy, 0)?;
        let yb = ops::concat(&clean, 0)?;
        let tape = GradTape::new();
        let out = model.forward(&xb)?;
        let loss = mse_loss(&out, &yb)?;
        let value = loss.item();
        if !value.is_finite() {
            return Err(TensorError::NonFinite {
                stage: "train_epoch loss".into(),
            });
        }
        let grads = tape.backward(&loss)?;
        optim.step(model, &grads)?;
        total += value * chunk.len() as f64;
    }
    Ok(total / pairs.len() as f64)
}

fn tile_starts(n: usize, tile: usize, stride: usize) -> Vec<usize> {
    if tile >= n {
        return vec![0];
    }
    let mut starts = Vec::new();
    let mut s = 0;
    loop {
        if s + tile >= n {
            starts.push(n - tile);
            return starts;
        }
        starts.push(s);
        s += stride;
    }
}

/// Denoise a whole cube through overlapping square tiles, blending overlaps
/// by uniform averaging. A tile at least as large as the cube degenerates to
/// one full-frame pass with no arithmetic applied to the output. The model
/// itself reflect-pads every tile up to its window multiple, so edge tiles
/// see mirrored context rather than zeros.
pub fn denoise_cube(
    model: &HdstModel,
    cube: &HsiCube,
    tile: usize,
    overlap: usize,
) -> Result<HsiCube> {
    let bands = model.config().bands;
    if bands != cube.bands {
        return Err(TensorError::InvalidArgument {
            op: "denoise_cube",
            message: format!(
                "checkpoint expects {bands} bands, cube has {}",
                cube.bands
            ),
        });
    }
    if tile == 0 || overlap >= tile {
        return Err(TensorError::InvalidArgument {
            op: "denoise_cube",
            message: format!("need 0 <= overlap < tile, got tile {tile} overlap {overlap}"),
        });
    }
    let (h, w) = (cube.height, cube.width);
    let (th, tw) = (tile.min(h), tile.min(w));
    let stride = tile - overlap;
    let hw = cube.plane();
    let mut sum = vec![0.0f64; bands * hw];
    let mut hits = vec![0.0f64; hw];
    for &ys in &tile_starts(h, tile, stride) {
        for &xs in &tile_starts(w, tile, stride) {
            let mut data = Vec::with_capacity(bands * th * tw);
            for b in 0..bands {
                let plane = cube.band(b);
                for y in ys..ys + th {
                    for x in xs..xs + tw {
                        data.push(f64::from(plane[y * w + x]));
                    }
                }
            }
            let out = model.forward(&Tensor::from_parts(vec![1, bands, th, tw], data))?;
            let out = out.data();
            for b in 0..bands {
                for y in 0..th {
                    for x in 0..tw {
                        sum[b * hw + (ys + y) * w + xs + x] += out[(b * th + y) * tw + x];
                    }
                }
            }
            for y in 0..th {
                for x in 0..tw {
                    hits[(ys + y) * w + xs + x] += 1.0;
                }
            }
        }
    }
    let mut data = Vec::with_capacity(bands * hw);
    for b in 0..bands {
        for i in 0..hw {
            data.push((sum[b * hw + i] / hits[i]) as f32);
        }
    }
    Ok(HsiCube {
        bands,
        height: h,
        width: w,
        data,
        wavelength_nm: cube.wavelength_nm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::ModelConfig;
    use crate::noise::cube_to_tensor;
    use crate::rng::substream;
    use crate::tensor::ParamContainer;

    fn toy_model(seed: u64) -> HdstModel {
        HdstModel::new(ModelConfig::toy(2), seed).unwrap()
    }

    fn random_cube(bands: usize, h: usize, w: usize, seed: u64) -> HsiCube {
        let mut rng = CounterRng::new(seed);
        let data = (0..bands * h * w)
            .map(|_| rng.uniform01() as f32)
            .collect();
        HsiCube::new(bands, h, w, data, None).unwrap()
    }

    #[test]
    fn mse_of_constant_offset_is_its_square() {
        let a = Tensor::zeros(vec![2, 3]);
        let b = Tensor::from_parts(vec![2, 3], vec![0.5; 6]);
        assert!((mse_loss(&a, &b).unwrap().item() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn a_few_epochs_reduce_the_loss() {
        let mut model = toy_model(3);
        let mut adam = AdamState::new(1e-3);
        let noisy = cube_to_tensor(&random_cube(2, 8, 8, 10));
        let clean = cube_to_tensor(&random_cube(2, 8, 8, 11));
        let pairs = vec![(noisy, clean)];
        let first = train_epoch(&mut model, &mut adam, &pairs, 1, substream(5, 0)).unwrap();
        let mut last = first;
        for epoch in 1..20 {
            last = train_epoch(&mut model, &mut adam, &pairs, 1, substream(5, epoch)).unwrap();
        }
        assert!(last < first, "loss {first} -> {last}");
    }

    #[test]
    fn epoch_losses_are_seed_deterministic() {
        let run = || {
            let mut model = toy_model(3);
            let mut adam = AdamState::new(1e-3);
            let pairs: Vec<(Tensor, Tensor)> = (0..3)
                .map(|i| {
                    (
                        cube_to_tensor(&random_cube(2, 8, 8, 20 + i)),
                        cube_to_tensor(&random_cube(2, 8, 8, 30 + i)),
                    )
                })
                .collect();
            (0..3)
                .map(|e| {
                    train_epoch(&mut model, &mut adam, &pairs, 2, substream(7, e))
                        .unwrap()
                        .to_bits()
                })
                .collect::<Vec<u64>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn single_tile_matches_direct_forward_exactly() {
        let model = toy_model(8);
        let cube = random_cube(2, 12, 10, 40);
        let tiled = denoise_cube(&model, &cube, 16, 4).unwrap();
        let direct = model.forward(&cube_to_tensor(&cube)).unwrap();
        let direct: Vec<f32> = direct.data().iter().map(|&v| v as f32).collect();
        assert_eq!(
            tiled.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            direct.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn identity_model_blends_overlaps_back_to_the_input() {
        // Zeroing the output projection makes the model the identity, so
        // every tile reproduces its input and uniform averaging of equal
        // values must give back the input bit for bit, seams included.
        let mut model = toy_model(8);
        model.for_each_param_mut(&mut |p| {
            if p.name() == "out.w" {
                for v in p.values_mut() {
                    *v = 0.0;
                }
            }
        });
        let cube = random_cube(2, 20, 18, 41);
        let tiled = denoise_cube(&model, &cube, 12, 4).unwrap();
        assert_eq!(
            tiled.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            cube.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn tile_starts_cover_without_gaps() {
        for (n, tile, stride) in [(20, 12, 8), (17, 8, 5), (8, 8, 8), (9, 8, 3)] {
            let starts = tile_starts(n, tile, stride);
            let mut covered = vec![false; n];
            for &s in &starts {
                assert!(s + tile.min(n) <= n);
                for c in covered.iter_mut().skip(s).take(tile.min(n)) {
                    *c = true;
                }
            }
            assert!(covered.iter().all(|&c| c), "{n} {tile} {stride}: {starts:?}");
        }
    }

    #[test]
    fn band_mismatch_is_rejected() {
        let model = toy_model(8);
        let cube = random_cube(3, 8, 8, 42);
        assert!(matches!(
            denoise_cube(&model, &cube, 8, 0),
            Err(TensorError::InvalidArgument { .. })
        ));
    }
}
