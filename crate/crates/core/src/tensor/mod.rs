//! Dense f64 tensor numerics with reverse-mode differentiation.
//!
//! The engine is deliberately small: row-major buffers, a handful of
//! primitives (dilated convolution, orthonormal 2-D spectral transforms,
//! windowed attention building blocks, elementwise math), and a tape that
//! replays recorded operations in reverse to produce parameter gradients.
//! All computation is double precision and single-threaded with a fixed
//! accumulation order, so identical inputs and seeds give bit-identical
//! results on one platform.

mod conv;
mod fft;
mod gradcheck;
mod kernels;
pub mod ops;
mod optim;
mod tape;

pub use conv::conv2d;
pub use fft::{fft2_to_channels, ifft2_from_channels, spectral_forward, spectral_inverse};
pub use gradcheck::finite_diff_check;
pub use ops::{
    add, affine, avgpool_spatial, bmm, bmm_nt, broadcast_spatial, concat, crop2d, gelu,
    layer_norm_chan, linear, mean_all, mul, mul_channel, mul_scalar_t, pad_reflect2d, reshape,
    sigmoid, slice_axis, softmax, sub, sum_all,
};
pub use optim::{AdamState, LrSchedule};
pub use tape::{GradTape, Gradients, ParamContainer, Parameter};

use std::sync::Arc;
use thiserror::Error;

/// Errors raised by tensor operations.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch on {dim}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        dim: &'static str,
        expected: String,
        got: String,
    },
    #[error("{op}: invalid argument: {message}")]
    InvalidArgument { op: &'static str, message: String },
    #[error("{stage}: non-finite value encountered")]
    NonFinite { stage: String },
    #[error("backward: loss must be a scalar, got {numel} elements")]
    LossNotScalar { numel: usize },
    #[error("backward: loss tensor was not recorded on this tape")]
    LossNotOnTape,
    #[error("unknown parameter: {0}")]
    UnknownParameter(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

pub(crate) fn shape_str(shape: &[usize]) -> String {
    let parts: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    format!("[{}]", parts.join(","))
}

/// Dense row-major tensor. Cloning is cheap (the buffer is shared).
#[derive(Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
    pub(crate) link: tape::GradLink,
}

impl Tensor {
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "from_vec",
                dim: "numel",
                expected: numel.to_string(),
                got: data.len().to_string(),
            });
        }
        Ok(Tensor {
            shape,
            data: Arc::new(data),
            link: tape::GradLink::Constant,
        })
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            shape,
            data: Arc::new(data),
            link: tape::GradLink::Constant,
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor::from_parts(shape, vec![0.0; numel])
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor::from_parts(shape, vec![value; numel])
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::from_parts(vec![1], vec![value])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// The single element of a scalar tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.numel(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    /// True when gradients flow into this tensor (it is a parameter leaf or
    /// was produced from one under an active tape).
    pub fn requires_grad(&self) -> bool {
        !matches!(self.link, tape::GradLink::Constant)
    }

    /// Same values, cut loose from any recorded history.
    pub fn detach(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: Arc::clone(&self.data),
            link: tape::GradLink::Constant,
        }
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Element at `[b, c, y, x]` of a 4-D tensor.
    pub fn at4(&self, b: usize, c: usize, y: usize, x: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 4);
        let (_, ch, h, w) = (self.shape[0], self.shape[1], self.shape[2], self.shape[3]);
        self.data[((b * ch + c) * h + y) * w + x]
    }

    pub(crate) fn check_4d(&self, op: &'static str) -> Result<(usize, usize, usize, usize)> {
        if self.shape.len() != 4 {
            return Err(TensorError::ShapeMismatch {
                op,
                dim: "rank",
                expected: "4".into(),
                got: format!("{} ({})", self.shape.len(), shape_str(&self.shape)),
            });
        }
        Ok((self.shape[0], self.shape[1], self.shape[2], self.shape[3]))
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor{}", shape_str(&self.shape))?;
        if self.numel() <= 8 {
            write!(f, " {:?}", &self.data[..])?;
        }
        Ok(())
    }
}

/// A complex-valued tensor as paired real and imaginary planes.
#[derive(Clone, Debug)]
pub struct ComplexTensor {
    pub real: Tensor,
    pub imag: Tensor,
}

impl ComplexTensor {
    pub fn new(real: Tensor, imag: Tensor) -> Result<Self> {
        if real.shape() != imag.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "ComplexTensor::new",
                dim: "imag",
                expected: shape_str(real.shape()),
                got: shape_str(imag.shape()),
            });
        }
        Ok(ComplexTensor { real, imag })
    }

    pub fn shape(&self) -> &[usize] {
        self.real.shape()
    }
}
