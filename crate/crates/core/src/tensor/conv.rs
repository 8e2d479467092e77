//! Differentiable dilated 2-D convolution ("same" zero padding).

use super::kernels::{self, ConvDims};
use super::tape;
use super::{shape_str, Result, Tensor, TensorError};

/// Cross-correlation with holes. `weight` is [Cout, Cin/groups, kh, kw];
/// output spatial size equals input spatial size for any dilation.
/// Differentiable w.r.t. `input`, `weight` and `bias`.
pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    dilation: usize,
    groups: usize,
) -> Result<Tensor> {
    let (b, cin, h, w) = input.check_4d("conv2d")?;
    let (cout, wcin, kh, kw) = weight.check_4d("conv2d")?;
    if dilation < 1 {
        return Err(TensorError::InvalidArgument {
            op: "conv2d",
            message: format!("dilation must be >= 1, got {dilation}"),
        });
    }
    if groups < 1 || cin % groups != 0 || cout % groups != 0 {
        return Err(TensorError::InvalidArgument {
            op: "conv2d",
            message: format!(
                "groups {groups} must divide both Cin {cin} and Cout {cout}"
            ),
        });
    }
    if wcin != cin / groups {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            dim: "weight Cin/groups",
            expected: (cin / groups).to_string(),
            got: wcin.to_string(),
        });
    }
    if let Some(bt) = bias {
        if bt.shape() != [cout] {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                dim: "bias",
                expected: format!("[{cout}]"),
                got: shape_str(bt.shape()),
            });
        }
    }

    let dims = ConvDims {
        b,
        cin,
        h,
        w,
        cout,
        kh,
        kw,
        dilation,
        groups,
    };
    let out_data = kernels::conv2d_forward(
        input.data(),
        weight.data(),
        bias.map(|t| t.data()),
        &dims,
    );
    let mut out = Tensor::from_parts(vec![b, cout, h, w], out_data);

    let need_x = tape::is_live(input);
    let need_w = tape::is_live(weight);
    let need_b = bias.is_some_and(tape::is_live);
    let (xc, wc) = (input.clone(), weight.clone());
    let record_inputs: Vec<&Tensor> = match bias {
        Some(bt) => vec![input, weight, bt],
        None => vec![input, weight],
    };
    tape::record_op(
        &record_inputs,
        &mut out,
        Box::new(move |gout, emit| {
            let grads = kernels::conv2d_backward(
                gout,
                xc.data(),
                wc.data(),
                &dims,
                need_x,
                need_w,
                need_b,
            );
            if let Some(g) = grads.input {
                emit(0, g);
            }
            if let Some(g) = grads.weight {
                emit(1, g);
            }
            if let Some(g) = grads.bias {
                emit(2, g);
            }
        }),
    );
    Ok(out)
}
