//! Shared input builders for the benchmark suite. Inputs are seeded so
//! repeated runs measure the same work.

use hdst_core::rng::CounterRng;
use hdst_core::{HsiCube, Tensor};

pub fn rand_tensor(shape: Vec<usize>, seed: u64) -> Tensor {
    let mut rng = CounterRng::new(seed);
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.normal()).collect()).unwrap()
}

pub fn rand_cube(bands: usize, height: usize, width: usize, seed: u64) -> HsiCube {
    let mut rng = CounterRng::new(seed);
    let data: Vec<f32> = (0..bands * height * width)
        .map(|_| rng.uniform(0.0, 1.0) as f32)
        .collect();
    HsiCube::new(bands, height, width, data, None).unwrap()
}
