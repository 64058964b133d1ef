use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule of a non-leaf node.
pub trait Op<T: Real>: Send + Sync {
    fn name(&self) -> &'static str;

    /// Accumulate input cotangents given the cotangent of this node's output.
    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, out_grad: &[T]);
}

/// View handed to [`Op::backward`]: read-only values of every earlier node
/// and lazily allocated cotangent buffers for the ones that need gradients.
pub struct BackwardCtx<'a, T> {
    pub values: &'a [Tensor<T>],
    grads: &'a mut [Option<Vec<T>>],
    needs: &'a [bool],
}

impl<'a, T: Real> BackwardCtx<'a, T> {
    pub fn value(&self, v: Var) -> &'a Tensor<T> {
        &self.values[v.0]
    }

    pub fn needs(&self, v: Var) -> bool {
        self.needs[v.0]
    }

    /// Cotangent buffer for `v`, or `None` when `v` does not need a gradient.
    pub fn grad_mut(&mut self, v: Var) -> Option<&mut [T]> {
        if !self.needs[v.0] {
            return None;
        }
        let n = self.values[v.0].len();
        Some(
            self.grads[v.0]
                .get_or_insert_with(|| vec![T::zero(); n])
                .as_mut_slice(),
        )
    }
}

/// One forward/backward pass worth of reverse-mode computation.
///
/// Nodes are appended in evaluation order, so a reverse sweep over indices is
/// a valid topological order for the backward pass.
pub struct Graph<T: Real> {
    values: Vec<Tensor<T>>,
    grads: Vec<Option<Vec<T>>>,
    ops: Vec<Option<Box<dyn Op<T>>>>,
    requires_grad: Vec<bool>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            values: Vec::new(),
            grads: Vec::new(),
            ops: Vec::new(),
            requires_grad: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Trainable leaf: accumulates gradient.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, true)
    }

    /// Non-trainable leaf: never accumulates gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor<T>, trainable: bool) -> Var {
        let id = self.values.len();
        self.values.push(value);
        self.grads.push(None);
        self.ops.push(None);
        self.requires_grad.push(trainable);
        Var(id)
    }

    /// Append a computed node. `inputs` decide whether it needs a gradient.
    pub fn push(&mut self, value: Tensor<T>, inputs: &[Var], op: impl Op<T> + 'static) -> Var {
        let id = self.values.len();
        let rg = inputs.iter().any(|v| self.requires_grad[v.0]);
        self.values.push(value);
        self.grads.push(None);
        self.ops.push(if rg { Some(Box::new(op)) } else { None });
        self.requires_grad.push(rg);
        Var(id)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.values[v.0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.requires_grad[v.0]
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.ops[v.0].as_ref().map_or("leaf", |op| op.name())
    }

    /// Accumulated gradient of `v`, zero-filled when nothing reached it.
    pub fn grad(&self, v: Var) -> Tensor<T> {
        let shape = self.values[v.0].shape();
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("grad shape tracks value shape"),
            None => Tensor::zeros(shape),
        }
    }

    pub fn grad_slice(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    /// Clear every accumulated gradient.
    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    /// Reverse sweep from a scalar `root`. Gradients add onto whatever a
    /// previous call left behind.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let root_value = &self.values[root.0];
        if !root_value.is_scalar() {
            return Err(Error::NonScalarRoot(root_value.shape().to_vec()));
        }
        if !self.requires_grad[root.0] {
            return Ok(());
        }
        let n = root.0 + 1;
        let mut cot: Vec<Option<Vec<T>>> = (0..n).map(|_| None).collect();
        cot[root.0] = Some(vec![T::one()]);
        for i in (0..n).rev() {
            let Some(g) = cot[i].take() else { continue };
            if let Some(op) = &self.ops[i] {
                let (before, _) = cot.split_at_mut(i);
                let mut ctx = BackwardCtx {
                    values: &self.values,
                    grads: before,
                    needs: &self.requires_grad,
                };
                op.backward(&mut ctx, &g);
            }
            cot[i] = Some(g);
        }
        for (i, g) in cot.into_iter().enumerate() {
            let Some(g) = g else { continue };
            match &mut self.grads[i] {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }
}
