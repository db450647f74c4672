use std::cell::{Ref, RefCell};
use std::fmt;

use super::ops::{backward_op, Op};
use super::{Result, Tensor, TensorError};

pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) requires_grad: bool,
    pub(crate) op: Op,
    pub(crate) grad: Option<Vec<f64>>,
}

#[derive(Default)]
struct Inner {
    nodes: Vec<Node>,
    backpropagated: bool,
}

/// Records operations in execution order so gradients can be pulled back
/// from a scalar loss.
///
/// A tape is single-threaded. Build one per forward pass; independent tapes
/// may live on different threads.
#[derive(Default)]
pub struct Tape {
    inner: RefCell<Inner>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Tape")
            .field("nodes", &inner.nodes.len())
            .field("backpropagated", &inner.backpropagated)
            .finish()
    }
}

/// Handle to a value recorded on a [`Tape`].
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

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Record an input tensor. Only leaves with `requires_grad` receive
    /// gradients.
    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    pub(crate) fn push(&self, value: Tensor, requires_grad: bool, op: Op) -> Var<'_> {
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            value,
            requires_grad,
            op,
            grad: None,
        });
        Var { tape: self, id }
    }

    pub(crate) fn requires_grad(&self, id: usize) -> bool {
        self.inner.borrow().nodes[id].requires_grad
    }

    /// Propagate gradients from `loss` to every node that requires them.
    ///
    /// Nodes are visited once each, in reverse recording order.
    pub fn backward(&self, loss: Var<'_>) -> Result<()> {
        assert!(std::ptr::eq(loss.tape, self), "loss belongs to another tape");
        let mut inner = self.inner.borrow_mut();
        if inner.backpropagated {
            return Err(TensorError::AlreadyBackpropagated);
        }
        let root = &inner.nodes[loss.id];
        if !root.value.is_scalar() {
            return Err(TensorError::NonScalarLoss(root.value.shape().to_vec()));
        }
        let root_requires_grad = root.requires_grad;
        inner.backpropagated = true;
        if !root_requires_grad {
            return Ok(());
        }
        inner.nodes[loss.id].grad = Some(vec![1.0]);
        for id in (0..=loss.id).rev() {
            let Some(grad) = inner.nodes[id].grad.take() else {
                continue;
            };
            let contributions = backward_op(&inner.nodes, id, &grad);
            inner.nodes[id].grad = Some(grad);
            for (src, g) in contributions {
                let node = &mut inner.nodes[src];
                if !node.requires_grad {
                    continue;
                }
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    /// Clear all gradient buffers so `backward` may run again.
    pub fn zero_grad(&self) {
        let mut inner = self.inner.borrow_mut();
        inner.backpropagated = false;
        for node in &mut inner.nodes {
            node.grad = None;
        }
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Tensor> {
        Ref::map(self.tape.inner.borrow(), |inner| &inner.nodes[self.id].value)
    }

    pub fn to_tensor(&self) -> Tensor {
        self.value().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad(self.id)
    }

    /// Gradient after [`Tape::backward`], shaped like the value.
    pub fn grad(&self) -> Option<Tensor> {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        node.grad
            .as_ref()
            .map(|g| Tensor::new(node.value.shape().to_vec(), g.clone()).expect("grad shape"))
    }
}
