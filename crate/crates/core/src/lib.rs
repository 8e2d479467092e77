//! Hyperspectral image denoising with a hybrid spatial/frequency
//! transformer, built on a small self-contained f64 tensor engine.
//!
//! Layout:
//! - [`tensor`]: dense tensors, reverse-mode gradients, FFT, optimizer
//! - [`rng`]: counter-based deterministic random numbers
//! - [`net`]: the denoising network and its building blocks
//! - [`noise`]: cube I/O, patching, synthetic noise
//! - [`metrics`]: PSNR / SSIM / SAM scoring
//! - [`train`]: loss, fitting loop, tiled inference
//!
//! Everything is deterministic given a seed: same inputs, same bytes out.

pub mod metrics;
pub mod net;
pub mod noise;
pub mod rng;
pub mod tensor;
pub mod train;

pub use net::{Ablation, HdstModel, ModelConfig};
pub use noise::{HsiCube, NoiseSpec};
pub use rng::CounterRng;
pub use tensor::{
    ComplexTensor, GradTape, Gradients, ParamContainer, Parameter, Tensor, TensorError,
};
