//! Reverse-mode differentiation over a recorded operation list.
//!
//! Every op applied to at least one tracked tensor appends a node to the
//! tape. `Tape::grad` walks the nodes in reverse recording order. Vector-
//! Jacobian products are themselves written with tensor ops, so a backward
//! pass run with `create_graph = true` records onto the same tape and its
//! results can be differentiated again.

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;
use std::sync::Arc;

use crate::array::Array;
use crate::error::{Result, TensorError};
use crate::scalar::Scalar;

/// Vector-Jacobian product of a recorded op.
///
/// `inputs` and `output` are tracked when the enclosing backward pass builds
/// a graph; the returned gradients must be computed with tensor ops so they
/// are recorded in that case. `needs[i]` is false when input `i` does not
/// lead to any requested gradient; such entries may be returned as `None`.
pub trait Backward<T: Scalar> {
    fn name(&self) -> &'static str;

    fn vjp(
        &self,
        inputs: &[Tensor<T>],
        output: &Tensor<T>,
        grad: &Tensor<T>,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>>;
}

struct Input<T> {
    id: Option<usize>,
    value: Arc<Array<T>>,
}

struct Node<T: Scalar> {
    backward: Option<Rc<dyn Backward<T>>>,
    inputs: Vec<Input<T>>,
    value: Arc<Array<T>>,
}

struct TapeInner<T: Scalar> {
    nodes: Vec<Node<T>>,
}

/// Operation record shared by every tensor derived from its leaves.
#[derive(Clone)]
pub struct Tape<T: Scalar> {
    inner: Rc<RefCell<TapeInner<T>>>,
}

#[derive(Clone)]
struct NodeRef<T: Scalar> {
    tape: Tape<T>,
    id: usize,
}

/// Immutable array value, optionally registered on a tape.
#[derive(Clone)]
pub struct Tensor<T: Scalar> {
    value: Arc<Array<T>>,
    node: Option<NodeRef<T>>,
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.value.shape())
            .field("tracked", &self.node.as_ref().map(|n| n.id))
            .finish()
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            inner: Rc::new(RefCell::new(TapeInner { nodes: Vec::new() })),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn same(&self, other: &Tape<T>) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    /// Registers a differentiable leaf.
    pub fn leaf(&self, value: Array<T>) -> Tensor<T> {
        self.leaf_shared(Arc::new(value))
    }

    pub fn leaf_shared(&self, value: Arc<Array<T>>) -> Tensor<T> {
        let id = self.push(Node {
            backward: None,
            inputs: Vec::new(),
            value: value.clone(),
        });
        Tensor {
            value,
            node: Some(NodeRef {
                tape: self.clone(),
                id,
            }),
        }
    }

    fn push(&self, node: Node<T>) -> usize {
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(node);
        inner.nodes.len() - 1
    }

    fn id_of(&self, t: &Tensor<T>) -> Result<usize> {
        match &t.node {
            Some(n) if n.tape.same(self) => Ok(n.id),
            Some(_) => Err(TensorError::TapeMismatch),
            None => Err(TensorError::NotTracked),
        }
    }

    /// Gradients of the scalar `output` with respect to each of `wrt`.
    ///
    /// Inputs unreachable from `output` get zero gradients. With
    /// `create_graph` the returned tensors are tracked on this tape.
    pub fn grad(&self, output: &Tensor<T>, wrt: &[&Tensor<T>], create_graph: bool) -> Result<Vec<Tensor<T>>> {
        if output.value.len() != 1 {
            return Err(TensorError::NonScalarOutput(output.value.shape().to_vec()));
        }
        let seed = Tensor::constant(Array::full(output.value.shape(), T::one()));
        self.grad_with_seed(output, seed, wrt, create_graph)
    }

    /// Like [`Tape::grad`] for a non-scalar output, seeded by the cotangent `seed`.
    pub fn grad_with_seed(
        &self,
        output: &Tensor<T>,
        seed: Tensor<T>,
        wrt: &[&Tensor<T>],
        create_graph: bool,
    ) -> Result<Vec<Tensor<T>>> {
        if seed.shape() != output.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "grad seed",
                lhs: seed.shape().to_vec(),
                rhs: output.shape().to_vec(),
            });
        }
        let wrt_ids = wrt.iter().map(|t| self.id_of(t)).collect::<Result<Vec<_>>>()?;
        let out_id = match self.id_of(output) {
            Ok(id) => id,
            Err(TensorError::NotTracked) => {
                return Ok(wrt.iter().map(|t| Tensor::constant(Array::zeros(t.shape()))).collect());
            }
            Err(e) => return Err(e),
        };

        // needs[i]: node i lies on a path from some requested leaf
        let n = out_id + 1;
        let mut needs = vec![false; n];
        {
            let inner = self.inner.borrow();
            for &w in &wrt_ids {
                if w < n {
                    needs[w] = true;
                }
            }
            for i in 0..n {
                if !needs[i] && inner.nodes[i].inputs.iter().any(|inp| inp.id.is_some_and(|j| needs[j])) {
                    needs[i] = true;
                }
            }
        }

        let mut grads: Vec<Option<Tensor<T>>> = vec![None; n];
        grads[out_id] = Some(seed);
        let keep: Vec<bool> = {
            let mut k = vec![false; n];
            for &w in &wrt_ids {
                if w < n {
                    k[w] = true;
                }
            }
            k
        };

        for i in (0..n).rev() {
            if !needs[i] {
                continue;
            }
            let Some(g) = grads[i].clone() else { continue };
            let (backward, inputs, value) = {
                let inner = self.inner.borrow();
                let node = &inner.nodes[i];
                let Some(b) = node.backward.clone() else { continue };
                let inputs: Vec<(Option<usize>, Arc<Array<T>>)> =
                    node.inputs.iter().map(|inp| (inp.id, inp.value.clone())).collect();
                (b, inputs, node.value.clone())
            };
            if !keep[i] {
                grads[i] = None;
            }
            let as_tensor = |id: Option<usize>, v: Arc<Array<T>>| match (create_graph, id) {
                (true, Some(id)) => Tensor {
                    value: v,
                    node: Some(NodeRef {
                        tape: self.clone(),
                        id,
                    }),
                },
                _ => Tensor { value: v, node: None },
            };
            let input_tensors: Vec<Tensor<T>> = inputs.iter().map(|(id, v)| as_tensor(*id, v.clone())).collect();
            let output_tensor = as_tensor(Some(i), value);
            let input_needs: Vec<bool> = inputs.iter().map(|(id, _)| id.is_some_and(|j| needs[j])).collect();
            let g = if create_graph { g } else { g.detach() };
            let contributions = backward.vjp(&input_tensors, &output_tensor, &g, &input_needs)?;
            for ((id, _), contrib) in inputs.iter().zip(contributions) {
                let (Some(id), Some(c)) = (id, contrib) else { continue };
                if !needs[*id] {
                    continue;
                }
                grads[*id] = Some(match grads[*id].take() {
                    Some(prev) => prev.add(&c)?,
                    None => c,
                });
            }
        }

        Ok(wrt_ids
            .iter()
            .zip(wrt)
            .map(|(&id, t)| {
                let g = if id < n { grads[id].clone() } else { None };
                g.unwrap_or_else(|| Tensor::constant(Array::zeros(t.shape())))
            })
            .collect())
    }
}

impl<T: Scalar> Tensor<T> {
    /// Untracked tensor.
    pub fn constant(value: Array<T>) -> Self {
        Self {
            value: Arc::new(value),
            node: None,
        }
    }

    pub fn constant_shared(value: Arc<Array<T>>) -> Self {
        Self { value, node: None }
    }

    pub fn scalar(v: f64) -> Self {
        Self::constant(Array::scalar(T::of(v)))
    }

    pub fn value(&self) -> &Array<T> {
        &self.value
    }

    pub fn shared(&self) -> Arc<Array<T>> {
        self.value.clone()
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn data(&self) -> &[T] {
        self.value.data()
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }

    /// Value of a single-element tensor as f64.
    pub fn item(&self) -> f64 {
        self.value.item().map(|v| v.f64()).unwrap_or(f64::NAN)
    }

    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }

    pub fn tape(&self) -> Option<&Tape<T>> {
        self.node.as_ref().map(|n| &n.tape)
    }

    /// Same value, cut from the tape.
    pub fn detach(&self) -> Self {
        Self {
            value: self.value.clone(),
            node: None,
        }
    }

    /// Records the result of an op. Untracked when every input is untracked.
    pub(crate) fn from_op<B: Backward<T> + 'static>(inputs: &[&Tensor<T>], value: Array<T>, backward: B) -> Result<Self> {
        #[cfg(debug_assertions)]
        if !value.is_finite() && inputs.iter().all(|t| t.value.is_finite()) {
            return Err(TensorError::NonFinite(backward.name().to_string()));
        }
        let mut tape: Option<&Tape<T>> = None;
        for t in inputs {
            if let Some(n) = &t.node {
                match tape {
                    None => tape = Some(&n.tape),
                    Some(existing) if existing.same(&n.tape) => {}
                    Some(_) => return Err(TensorError::TapeMismatch),
                }
            }
        }
        let value = Arc::new(value);
        let Some(tape) = tape else {
            return Ok(Self { value, node: None });
        };
        let tape = tape.clone();
        let id = tape.push(Node {
            backward: Some(Rc::new(backward)),
            inputs: inputs
                .iter()
                .map(|t| Input {
                    id: t.node.as_ref().map(|n| n.id),
                    value: t.value.clone(),
                })
                .collect(),
            value: value.clone(),
        });
        Ok(Self {
            value,
            node: Some(NodeRef { tape, id }),
        })
    }
}
