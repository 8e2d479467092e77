//! Reverse-mode differentiation tape.
//!
//! Recording is thread-local: creating a [`GradTape`] arms recording on the
//! current thread, and every differentiable op executed while it is live
//! appends a node holding a backward closure. Nodes are appended in execution
//! order, so node ids are already a topological order and the backward sweep
//! is a single reverse scan. A tape is single-threaded by design; kernels
//! themselves are pure and may be called from anywhere.
//!
//! Parameters enter the graph through [`Parameter::read`], which interns a
//! leaf node keyed by the parameter's name. Reading the same parameter twice
//! yields the same leaf, so gradients from multiple uses accumulate.

use super::{Result, Tensor, TensorError};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Where a tensor sits in the recorded graph, if anywhere.
#[derive(Clone, Debug)]
pub(crate) enum GradLink {
    /// Not on any tape; gradients do not flow.
    Constant,
    /// Node `id` on the tape of generation `gen`. Links from a dropped or
    /// replaced tape are recognized by their stale generation and ignored.
    Recorded { gen: u64, id: usize },
}

/// Backward closure: receives the output gradient and emits one contribution
/// per differentiable input via `emit(input_index, contribution)`.
type BackFn = Box<dyn Fn(&[f64], &mut dyn FnMut(usize, Vec<f64>))>;

struct Node {
    /// Tape ids of this node's inputs; `None` marks a constant input whose
    /// contribution is discarded.
    inputs: Vec<Option<usize>>,
    input_numels: Vec<usize>,
    backward: Option<BackFn>,
    /// Set for parameter leaves: (name, shape).
    leaf: Option<(String, Vec<usize>)>,
}

struct TapeInner {
    gen: u64,
    nodes: Vec<Node>,
    leaves: HashMap<String, usize>,
}

thread_local! {
    static ACTIVE: RefCell<Option<TapeInner>> = const { RefCell::new(None) };
}

static GEN: AtomicU64 = AtomicU64::new(1);

/// Records every differentiable op run on this thread while it is alive.
/// Creating a new tape replaces any previously active one; dropping it stops
/// recording. `backward` may be called repeatedly (e.g. for several scalar
/// losses built on one tape); results accumulate into the target map.
pub struct GradTape {
    gen: u64,
}

impl GradTape {
    #[allow(clippy::new_without_default)]
    pub fn new() -> GradTape {
        let gen = GEN.fetch_add(1, Ordering::Relaxed);
        ACTIVE.with(|a| {
            *a.borrow_mut() = Some(TapeInner {
                gen,
                nodes: Vec::new(),
                leaves: HashMap::new(),
            });
        });
        GradTape { gen }
    }

    /// Gradient of `loss` with respect to every parameter read under this
    /// tape. Parameters read but not on the path to `loss` get zero
    /// gradients.
    pub fn backward(&self, loss: &Tensor) -> Result<Gradients> {
        let mut out = Gradients::new();
        self.backward_into(loss, &mut out)?;
        Ok(out)
    }

    /// Like [`backward`](Self::backward) but adds into an existing map, so
    /// repeated calls accumulate.
    pub fn backward_into(&self, loss: &Tensor, out: &mut Gradients) -> Result<()> {
        if loss.numel() != 1 {
            return Err(TensorError::LossNotScalar {
                numel: loss.numel(),
            });
        }
        let loss_id = match loss.link {
            GradLink::Recorded { gen, id } if gen == self.gen => id,
            _ => return Err(TensorError::LossNotOnTape),
        };
        ACTIVE.with(|a| {
            let mut guard = a.borrow_mut();
            let inner = match guard.as_mut() {
                Some(inner) if inner.gen == self.gen => inner,
                _ => return Err(TensorError::LossNotOnTape),
            };
            // Node ids are topological, so one reverse scan visits every
            // node after all of its consumers.
            let mut grads: Vec<Option<Vec<f64>>> = Vec::new();
            grads.resize_with(loss_id + 1, || None);
            grads[loss_id] = Some(vec![1.0]);
            for id in (0..=loss_id).rev() {
                if inner.nodes[id].backward.is_none() {
                    continue; // leaf: keep its gradient for collection
                }
                let Some(g) = grads[id].take() else { continue };
                let node = &inner.nodes[id];
                let back = node.backward.as_ref().unwrap();
                back(&g, &mut |idx, contrib| {
                    debug_assert_eq!(contrib.len(), node.input_numels[idx]);
                    if let Some(in_id) = node.inputs[idx] {
                        match &mut grads[in_id] {
                            Some(buf) => {
                                for (b, c) in buf.iter_mut().zip(&contrib) {
                                    *b += c;
                                }
                            }
                            slot @ None => *slot = Some(contrib),
                        }
                    }
                });
            }
            for (name, &leaf_id) in &inner.leaves {
                let shape = inner.nodes[leaf_id].leaf.as_ref().unwrap().1.clone();
                let numel: usize = shape.iter().product();
                let g = grads
                    .get(leaf_id)
                    .and_then(|s| s.clone())
                    .unwrap_or_else(|| vec![0.0; numel]);
                out.add(name, Tensor::from_parts(shape, g));
            }
            Ok(())
        })
    }
}

impl Drop for GradTape {
    fn drop(&mut self) {
        ACTIVE.with(|a| {
            let mut guard = a.borrow_mut();
            if matches!(&*guard, Some(inner) if inner.gen == self.gen) {
                *guard = None;
            }
        });
    }
}

/// True when `t` is recorded on the currently active tape, i.e. gradients
/// will actually flow into it. Ops use this to skip dead gradient work.
pub(crate) fn is_live(t: &Tensor) -> bool {
    match t.link {
        GradLink::Constant => false,
        GradLink::Recorded { gen, .. } => ACTIVE.with(|a| {
            matches!(&*a.borrow(), Some(inner) if inner.gen == gen)
        }),
    }
}

/// Registers `t` as the leaf for parameter `name` on the active tape, if any.
pub(crate) fn register_leaf(t: &mut Tensor, name: &str) {
    ACTIVE.with(|a| {
        let mut guard = a.borrow_mut();
        let Some(inner) = guard.as_mut() else { return };
        let gen = inner.gen;
        let id = match inner.leaves.get(name) {
            Some(&id) => id,
            None => {
                let id = inner.nodes.len();
                inner.nodes.push(Node {
                    inputs: Vec::new(),
                    input_numels: Vec::new(),
                    backward: None,
                    leaf: Some((name.to_string(), t.shape().to_vec())),
                });
                inner.leaves.insert(name.to_string(), id);
                id
            }
        };
        t.link = GradLink::Recorded { gen, id };
    });
}

/// Records one executed op. No-op when no tape is active or no input is on
/// the tape; otherwise stamps `out` with a fresh node id.
pub(crate) fn record_op(inputs: &[&Tensor], out: &mut Tensor, back: BackFn) {
    ACTIVE.with(|a| {
        let mut guard = a.borrow_mut();
        let Some(inner) = guard.as_mut() else { return };
        let gen = inner.gen;
        let ids: Vec<Option<usize>> = inputs
            .iter()
            .map(|t| match t.link {
                GradLink::Recorded { gen: g, id } if g == gen => Some(id),
                _ => None,
            })
            .collect();
        if ids.iter().all(|i| i.is_none()) {
            return;
        }
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            inputs: ids,
            input_numels: inputs.iter().map(|t| t.numel()).collect(),
            backward: Some(back),
            leaf: None,
        });
        out.link = GradLink::Recorded { gen, id };
    });
}

/// Named gradient map produced by [`GradTape::backward`].
#[derive(Default)]
pub struct Gradients {
    map: HashMap<String, Tensor>,
}

impl Gradients {
    pub fn new() -> Gradients {
        Gradients::default()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.map.get(name)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    fn add(&mut self, name: &str, g: Tensor) {
        match self.map.get_mut(name) {
            Some(existing) => {
                debug_assert_eq!(existing.shape(), g.shape());
                let mut data = existing.data().to_vec();
                for (d, s) in data.iter_mut().zip(g.data()) {
                    *d += s;
                }
                *existing = Tensor::from_parts(g.shape().to_vec(), data);
            }
            None => {
                self.map.insert(name.to_string(), g);
            }
        }
    }
}

/// A named, trainable tensor. The stored value is always detached; gradients
/// flow through the tensors handed out by [`read`](Parameter::read).
#[derive(Clone)]
pub struct Parameter {
    name: Arc<str>,
    value: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<Arc<str>>, value: Tensor) -> Parameter {
        Parameter {
            name: name.into(),
            value: value.detach(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    /// Current value as a graph leaf: under an active tape the returned
    /// tensor is interned by parameter name, so every read of one parameter
    /// routes gradients to the same slot.
    pub fn read(&self) -> Tensor {
        let mut t = self.value.clone();
        register_leaf(&mut t, &self.name);
        t
    }

    pub fn set_value(&mut self, value: Tensor) {
        debug_assert_eq!(value.shape(), self.value.shape());
        self.value = value.detach();
    }

    /// Mutable access to the raw values (copy-on-write if the buffer is
    /// shared with outstanding reads).
    pub fn values_mut(&mut self) -> &mut [f64] {
        Arc::make_mut(&mut self.value.data).as_mut_slice()
    }
}

impl std::fmt::Debug for Parameter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Parameter({} {:?})", self.name, self.value.shape())
    }
}

/// Anything holding named parameters: models, sub-blocks, optimizer targets.
/// Visit order must be deterministic and stable across calls.
pub trait ParamContainer {
    fn for_each_param(&self, f: &mut dyn FnMut(&Parameter));
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Parameter));

    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.for_each_param(&mut |p| names.push(p.name().to_string()));
        names
    }

    fn num_scalars(&self) -> usize {
        let mut n = 0;
        self.for_each_param(&mut |p| n += p.value().numel());
        n
    }
}

/// Runs `f` on the parameter called `name`, if the container has one.
pub(crate) fn visit_param_mut<M, R>(
    model: &mut M,
    name: &str,
    f: impl FnOnce(&mut Parameter) -> R,
) -> Option<R>
where
    M: ParamContainer + ?Sized,
{
    let mut f = Some(f);
    let mut out = None;
    model.for_each_param_mut(&mut |p| {
        if p.name() == name {
            if let Some(f) = f.take() {
                out = Some(f(p));
            }
        }
    });
    out
}
