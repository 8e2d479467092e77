//! Adaptive-moment optimizer and piecewise-constant learning-rate schedule.

use super::tape::{Gradients, ParamContainer};
use super::{Result, TensorError};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Adam with bias correction. The epsilon sits outside the square root:
/// delta = -lr * m_hat / (sqrt(v_hat) + eps). Moment buffers are created
/// lazily the first time a parameter is seen.
pub struct AdamState {
    lr: f64,
    step: u64,
    moments: HashMap<String, (Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new(lr: f64) -> AdamState {
        AdamState {
            lr,
            step: 0,
            moments: HashMap::new(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over every parameter of `model`. Parameters without an
    /// entry in `grads` are treated as having zero gradient (their moments
    /// still decay). Visit order is the model's, which is fixed.
    pub fn step<M: ParamContainer + ?Sized>(
        &mut self,
        model: &mut M,
        grads: &Gradients,
    ) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        let lr = self.lr;
        let mut err = None;
        let moments = &mut self.moments;
        model.for_each_param_mut(&mut |p| {
            if err.is_some() {
                return;
            }
            let n = p.value().numel();
            let (m, v) = moments
                .entry(p.name().to_string())
                .or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
            if m.len() != n {
                err = Some(TensorError::ShapeMismatch {
                    op: "adam_step",
                    dim: "moment buffer",
                    expected: n.to_string(),
                    got: m.len().to_string(),
                });
                return;
            }
            let g = grads.get(p.name());
            if let Some(g) = g {
                if g.numel() != n {
                    err = Some(TensorError::ShapeMismatch {
                        op: "adam_step",
                        dim: "gradient",
                        expected: n.to_string(),
                        got: g.numel().to_string(),
                    });
                    return;
                }
            }
            let vals = p.values_mut();
            for i in 0..n {
                let gi = g.map_or(0.0, |g| g.data()[i]);
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                vals[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Moment buffers sorted by parameter name, for serialization.
    pub fn entries(&self) -> Vec<(&str, &[f64], &[f64])> {
        let mut out: Vec<_> = self
            .moments
            .iter()
            .map(|(k, (m, v))| (k.as_str(), m.as_slice(), v.as_slice()))
            .collect();
        out.sort_by_key(|e| e.0);
        out
    }

    /// Rebuilds state captured by [`entries`](Self::entries).
    pub fn restore(&mut self, step: u64, entries: Vec<(String, Vec<f64>, Vec<f64>)>) {
        self.step = step;
        self.moments.clear();
        for (name, m, v) in entries {
            self.moments.insert(name, (m, v));
        }
    }
}

/// Piecewise-constant learning rate: `initial` until the first breakpoint's
/// epoch, then that breakpoint's rate, and so on. Breakpoint epochs must be
/// strictly increasing.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LrSchedule {
    pub initial: f64,
    #[serde(default)]
    pub steps: Vec<LrStep>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LrStep {
    pub at_epoch: u64,
    pub lr: f64,
}

impl LrSchedule {
    pub fn constant(lr: f64) -> LrSchedule {
        LrSchedule {
            initial: lr,
            steps: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial.is_finite() && self.initial > 0.0) {
            return Err(TensorError::InvalidArgument {
                op: "LrSchedule",
                message: format!("initial lr must be positive, got {}", self.initial),
            });
        }
        let mut prev = None;
        for s in &self.steps {
            if !(s.lr.is_finite() && s.lr > 0.0) {
                return Err(TensorError::InvalidArgument {
                    op: "LrSchedule",
                    message: format!("lr at epoch {} must be positive, got {}", s.at_epoch, s.lr),
                });
            }
            if let Some(p) = prev {
                if s.at_epoch <= p {
                    return Err(TensorError::InvalidArgument {
                        op: "LrSchedule",
                        message: format!(
                            "breakpoint epochs must be strictly increasing ({p} then {})",
                            s.at_epoch
                        ),
                    });
                }
            }
            prev = Some(s.at_epoch);
        }
        Ok(())
    }

    pub fn at(&self, epoch: u64) -> f64 {
        let mut lr = self.initial;
        for s in &self.steps {
            if epoch >= s.at_epoch {
                lr = s.lr;
            } else {
                break;
            }
        }
        lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{GradTape, Parameter, Tensor};

    #[test]
    fn single_step_closed_form() {
        // g=1 on p=0 with lr=0.1: m_hat = v_hat = 1, so the move is
        // -0.1 / (1 + eps)
        let mut p = Parameter::new("p", Tensor::scalar(0.0));
        let mut grads = Gradients::new();
        {
            let tape = GradTape::new();
            let loss = crate::tensor::sum_all(&p.read());
            tape.backward_into(&loss, &mut grads).unwrap();
        }
        let mut adam = AdamState::new(0.1);
        adam.step(&mut p, &grads).unwrap();
        let expect = -0.1 / (1.0 + EPS);
        assert!((p.value().data()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_fresh_params_unchanged() {
        let mut p = Parameter::new("p", Tensor::from_vec(vec![2], vec![1.0, -2.0]).unwrap());
        let grads = Gradients::new(); // no entry: zero gradient
        let mut adam = AdamState::new(0.1);
        adam.step(&mut p, &grads).unwrap();
        assert_eq!(p.value().data(), &[1.0, -2.0]);
    }

    #[test]
    fn zero_lr_freezes_params() {
        let mut p = Parameter::new("p", Tensor::scalar(3.0));
        let mut grads = Gradients::new();
        {
            let tape = GradTape::new();
            let loss = crate::tensor::sum_all(&p.read());
            tape.backward_into(&loss, &mut grads).unwrap();
        }
        let mut adam = AdamState::new(0.0);
        adam.step(&mut p, &grads).unwrap();
        assert_eq!(p.value().data(), &[3.0]);
    }

    #[test]
    fn schedule_switches_at_breakpoints() {
        let sched = LrSchedule {
            initial: 1e-4,
            steps: vec![
                LrStep {
                    at_epoch: 200,
                    lr: 5e-5,
                },
                LrStep {
                    at_epoch: 400,
                    lr: 1e-5,
                },
            ],
        };
        sched.validate().unwrap();
        assert_eq!(sched.at(0), 1e-4);
        assert_eq!(sched.at(199), 1e-4);
        assert_eq!(sched.at(200), 5e-5);
        assert_eq!(sched.at(399), 5e-5);
        assert_eq!(sched.at(400), 1e-5);
        assert_eq!(sched.at(10_000), 1e-5);
    }

    #[test]
    fn schedule_rejects_unsorted_breakpoints() {
        let sched = LrSchedule {
            initial: 1e-4,
            steps: vec![
                LrStep {
                    at_epoch: 400,
                    lr: 5e-5,
                },
                LrStep {
                    at_epoch: 200,
                    lr: 1e-5,
                },
            ],
        };
        assert!(sched.validate().is_err());
    }
}
