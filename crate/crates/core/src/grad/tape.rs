//! Wengert tape for reverse-mode differentiation.
//!
//! Every operation appends a node holding its value, its input node ids and
//! a backward rule mapping the output cotangent to one cotangent per input.
//! Node ids grow monotonically, so walking them in decreasing order is a
//! reverse topological traversal.
//!
//! Non-differentiable decisions made during a forward pass (detached copies,
//! argmin indices, neighbour lists, Gumbel noise, frozen rotations) go
//! through [`Tape::freeze_tensor`] / [`Tape::freeze_indices`]. A tape built
//! with [`Tape::replaying`] hands back the values recorded by an earlier
//! pass instead of recomputing them, which is what the finite-difference
//! checker needs to probe an estimator's declared Jacobian.

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use super::Tensor;
use crate::{Error, Result};

type BackwardFn = Box<dyn Fn(&Tensor) -> Vec<Tensor>>;

struct Node {
    kind: &'static str,
    value: Rc<Tensor>,
    requires_grad: bool,
    inputs: Vec<usize>,
    backward: Option<BackwardFn>,
}

#[derive(Clone, Debug, PartialEq)]
enum Frozen {
    Tensor(Tensor),
    Indices(Vec<usize>),
}

/// Values captured by the non-differentiable parts of a forward pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrozenLog {
    entries: Vec<Frozen>,
}

impl FrozenLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

enum Mode {
    Record,
    Replay { cursor: usize },
}

struct Inner {
    nodes: Vec<Node>,
    frozen: FrozenLog,
    mode: Mode,
}

/// Computation tape. Confined to one thread; independent tapes may run
/// concurrently.
pub struct Tape {
    inner: RefCell<Inner>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Tape")
            .field("nodes", &inner.nodes.len())
            .field("frozen", &inner.frozen.len())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            inner: RefCell::new(Inner {
                nodes: Vec::new(),
                frozen: FrozenLog::default(),
                mode: Mode::Record,
            }),
        }
    }

    /// A tape whose frozen decisions are served from `log` in call order.
    pub fn replaying(log: FrozenLog) -> Self {
        Self {
            inner: RefCell::new(Inner {
                nodes: Vec::new(),
                frozen: log,
                mode: Mode::Replay { cursor: 0 },
            }),
        }
    }

    pub fn frozen_log(&self) -> FrozenLog {
        self.inner.borrow().frozen.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trainable leaf: receives a gradient on backward.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push_node("leaf", value, true, Vec::new(), None)
    }

    /// Constant leaf: never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push_node("constant", value, false, Vec::new(), None)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    /// Returns `compute()` while recording, or the next recorded tensor while
    /// replaying.
    pub fn freeze_tensor(&self, compute: impl FnOnce() -> Tensor) -> Tensor {
        match self.next_replayed() {
            Some(Frozen::Tensor(t)) => t,
            Some(other) => panic!("replay diverged: expected tensor, found {other:?}"),
            None => {
                let t = compute();
                self.push_frozen(Frozen::Tensor(t.clone()));
                t
            }
        }
    }

    /// Index counterpart of [`Tape::freeze_tensor`].
    pub fn freeze_indices(&self, compute: impl FnOnce() -> Vec<usize>) -> Vec<usize> {
        self.try_freeze_indices(|| Ok::<_, std::convert::Infallible>(compute()))
            .unwrap_or_else(|e| match e {})
    }

    /// Fallible [`Tape::freeze_indices`]; errors are not recorded.
    pub fn try_freeze_indices<E>(
        &self,
        compute: impl FnOnce() -> std::result::Result<Vec<usize>, E>,
    ) -> std::result::Result<Vec<usize>, E> {
        match self.next_replayed() {
            Some(Frozen::Indices(ix)) => Ok(ix),
            Some(other) => panic!("replay diverged: expected indices, found {other:?}"),
            None => {
                let ix = compute()?;
                self.push_frozen(Frozen::Indices(ix.clone()));
                Ok(ix)
            }
        }
    }

    fn push_frozen(&self, entry: Frozen) {
        self.inner.borrow_mut().frozen.entries.push(entry);
    }

    fn next_replayed(&self) -> Option<Frozen> {
        let mut inner = self.inner.borrow_mut();
        let Inner { frozen, mode, .. } = &mut *inner;
        match mode {
            Mode::Record => None,
            Mode::Replay { cursor } => {
                let entry = frozen
                    .entries
                    .get(*cursor)
                    .cloned()
                    .unwrap_or_else(|| panic!("replay log exhausted at entry {cursor}"));
                *cursor += 1;
                Some(entry)
            }
        }
    }

    /// Registers a custom differentiable operation.
    ///
    /// `forward` receives the input values and must produce a tensor of
    /// `out_shape`. `backward` receives the output cotangent together with
    /// the input and output values and returns one cotangent per input.
    pub fn record<'t, F, B>(
        &'t self,
        kind: &'static str,
        inputs: &[Var<'t>],
        out_shape: &[usize],
        forward: F,
        backward: B,
    ) -> Result<Var<'t>>
    where
        F: FnOnce(&[&Tensor]) -> Tensor,
        B: Fn(&Tensor, &[&Tensor], &Tensor) -> Vec<Tensor> + 'static,
    {
        let values: Vec<Rc<Tensor>> = inputs.iter().map(|v| v.value()).collect();
        let refs: Vec<&Tensor> = values.iter().map(Rc::as_ref).collect();
        let out = forward(&refs);
        if out.shape() != out_shape {
            return Err(Error::Shape {
                op: kind,
                expected: out_shape.to_vec(),
                actual: out.shape().to_vec(),
            });
        }
        let out = Rc::new(out);
        let saved_out = Rc::clone(&out);
        let rule = move |ct: &Tensor| {
            let refs: Vec<&Tensor> = values.iter().map(Rc::as_ref).collect();
            backward(ct, &refs, &saved_out)
        };
        Ok(self.push_rc(kind, out, inputs, Some(Box::new(rule))))
    }

    /// Appends a node whose value was computed by the caller.
    pub(crate) fn push_op<'t>(
        &'t self,
        kind: &'static str,
        value: Tensor,
        inputs: &[Var<'t>],
        backward: impl Fn(&Tensor) -> Vec<Tensor> + 'static,
    ) -> Var<'t> {
        self.push_rc(kind, Rc::new(value), inputs, Some(Box::new(backward)))
    }

    fn push_rc<'t>(
        &'t self,
        kind: &'static str,
        value: Rc<Tensor>,
        inputs: &[Var<'t>],
        backward: Option<BackwardFn>,
    ) -> Var<'t> {
        for v in inputs {
            assert!(std::ptr::eq(v.tape, self), "{kind}: inputs live on another tape");
        }
        let mut inner = self.inner.borrow_mut();
        let requires_grad = inputs.iter().any(|v| inner.nodes[v.id].requires_grad);
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            kind,
            value,
            requires_grad,
            inputs: inputs.iter().map(|v| v.id).collect(),
            backward: if requires_grad { backward } else { None },
        });
        Var { tape: self, id }
    }

    fn push_node(
        &self,
        kind: &'static str,
        value: Tensor,
        requires_grad: bool,
        inputs: Vec<usize>,
        backward: Option<BackwardFn>,
    ) -> Var<'_> {
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            kind,
            value: Rc::new(value),
            requires_grad,
            inputs,
            backward,
        });
        Var { tape: self, id }
    }

    /// Reverse pass from a scalar loss.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let value = loss.value();
        if !value.is_scalar() {
            return Err(Error::NonScalarLoss(value.shape().to_vec()));
        }
        let seed = Tensor::full(value.shape().to_vec(), 1.0);
        self.backward_with(loss, seed)
    }

    /// Reverse pass seeded with an arbitrary cotangent for `output`.
    pub fn backward_with(&self, output: Var<'_>, cotangent: Tensor) -> Result<Gradients> {
        assert!(std::ptr::eq(output.tape, self), "backward on a foreign tape");
        let inner = self.inner.borrow();
        let out_shape = inner.nodes[output.id].value.shape();
        if cotangent.shape() != out_shape {
            return Err(Error::Shape {
                op: "backward_with",
                expected: out_shape.to_vec(),
                actual: cotangent.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; inner.nodes.len()];
        grads[output.id] = Some(cotangent);
        for id in (0..=output.id).rev() {
            let node = &inner.nodes[id];
            let Some(rule) = &node.backward else { continue };
            let Some(ct) = grads[id].take() else { continue };
            let input_cts = rule(&ct);
            debug_assert_eq!(input_cts.len(), node.inputs.len(), "{}: arity", node.kind);
            for (&input, g) in node.inputs.iter().zip(input_cts) {
                let input_node = &inner.nodes[input];
                if !input_node.requires_grad {
                    continue;
                }
                if g.shape() != input_node.value.shape() {
                    return Err(Error::Shape {
                        op: node.kind,
                        expected: input_node.value.shape().to_vec(),
                        actual: g.shape().to_vec(),
                    });
                }
                match &mut grads[input] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
            // Interior nodes hand their cotangent on; only leaves keep theirs.
            grads[id] = None;
        }
        Ok(Gradients { grads })
    }
}

/// Handle to a value on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor> {
        Rc::clone(&self.tape.inner.borrow().nodes[self.id].value)
    }

    /// Owned copy of the value.
    pub fn to_tensor(&self) -> Tensor {
        self.value().as_ref().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.inner.borrow().nodes[self.id].value.shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.inner.borrow().nodes[self.id].requires_grad
    }

    /// Same value, excluded from differentiation.
    pub fn detach(self) -> Var<'t> {
        let tape = self.tape;
        let v = tape.freeze_tensor(|| self.to_tensor());
        tape.push_node("detach", v, false, Vec::new(), None)
    }
}

/// Leaf gradients produced by a backward pass.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `v`, zeros when `v` was unreachable from the loss.
    pub fn get(&self, v: Var<'_>) -> Tensor {
        match self.grads.get(v.id).and_then(Option::as_ref) {
            Some(g) => g.clone(),
            None => Tensor::zeros(v.shape()),
        }
    }

    pub fn try_get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(Option::as_ref)
    }
}
