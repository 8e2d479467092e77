//! Central-difference gradient oracle.

use super::tape::{visit_param_mut, GradTape, ParamContainer, Parameter};
use super::{Result, Tensor, TensorError};

impl ParamContainer for Parameter {
    fn for_each_param(&self, f: &mut dyn FnMut(&Parameter)) {
        f(self);
    }
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(self);
    }
}

impl ParamContainer for Vec<Parameter> {
    fn for_each_param(&self, f: &mut dyn FnMut(&Parameter)) {
        for p in self {
            f(p);
        }
    }
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        for p in self {
            f(p);
        }
    }
}

/// Compares the recorded gradient of `f` w.r.t. parameter `name` against
/// central differences, coordinate by coordinate, and returns the worst
/// relative discrepancy |analytic - numeric| / max(|analytic|, |numeric|,
/// 1e-8). `f` must be deterministic; it is re-evaluated 2 * numel times.
pub fn finite_diff_check<M, F>(model: &mut M, name: &str, eps: f64, f: F) -> Result<f64>
where
    M: ParamContainer + ?Sized,
    F: Fn(&M) -> Result<Tensor>,
{
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(TensorError::InvalidArgument {
            op: "finite_diff_check",
            message: format!("eps {eps} outside the trustworthy double-precision range"),
        });
    }
    let numel = visit_param_mut(model, name, |p| p.value().numel())
        .ok_or_else(|| TensorError::UnknownParameter(name.to_string()))?;

    // analytic gradient at the unperturbed point
    let analytic = {
        let tape = GradTape::new();
        let loss = f(model)?;
        if loss.numel() != 1 {
            return Err(TensorError::LossNotScalar {
                numel: loss.numel(),
            });
        }
        let grads = tape.backward(&loss)?;
        match grads.get(name) {
            Some(g) => g.data().to_vec(),
            // parameter exists but was never read by f: gradient is zero
            None => vec![0.0; numel],
        }
    };

    let mut worst: f64 = 0.0;
    for i in 0..numel {
        let x0 = visit_param_mut(model, name, |p| {
            let v = p.values_mut()[i];
            p.values_mut()[i] = v + eps;
            v
        })
        .unwrap();
        let plus = f(model)?.item();
        visit_param_mut(model, name, |p| p.values_mut()[i] = x0 - eps).unwrap();
        let minus = f(model)?.item();
        visit_param_mut(model, name, |p| p.values_mut()[i] = x0).unwrap();
        let numeric = (plus - minus) / (2.0 * eps);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}
