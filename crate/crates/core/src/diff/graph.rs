//! Reverse-mode automatic differentiation on a recorded computation graph.
//!
//! Nodes are appended to a [`Graph`] in evaluation order, so node indices are
//! already a topological order. [`Graph::backward`] walks that order in
//! reverse. Every vector-Jacobian product is itself expressed with graph
//! primitives; when `create_graph` is set the resulting gradient nodes stay
//! differentiable and a second `backward` through them yields second-order
//! derivatives. This is what the unrolled MAML inner loop relies on.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node inside one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Leaf,
    MatMul,
    Transpose,
    Add,
    Sub,
    /// Hadamard product.
    Mul,
    /// Multiplication by a constant scalar.
    Scale(f64),
    Relu,
    /// `parents = [x, g]`: `g` masked by `relu'(x)`. Piecewise constant in `x`.
    ReluMask,
    Square,
    Sum,
    Mean,
    Expand(Vec<usize>),
    Slice { axis: usize, start: usize, end: usize },
    Pad { axis: usize, start: usize, total: usize },
    Concat { axis: usize },
    Reshape(Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    parents: Vec<NodeId>,
    requires_grad: bool,
}

/// Gradients returned by [`Graph::backward`], keyed by the `wrt` nodes in the
/// order they were requested. Each gradient is a node of the same graph.
#[derive(Debug, Clone)]
pub struct GradientMap {
    entries: Vec<(NodeId, NodeId)>,
}

impl GradientMap {
    pub fn get(&self, wrt: NodeId) -> Option<NodeId> {
        self.entries.iter().find(|(k, _)| *k == wrt).map(|&(_, g)| g)
    }

    /// Gradient nodes in the order of the `wrt` list.
    pub fn nodes(&self) -> Vec<NodeId> {
        self.entries.iter().map(|&(_, g)| g).collect()
    }

    pub fn tensors(&self, graph: &Graph) -> Vec<Tensor> {
        self.entries.iter().map(|&(_, g)| graph.value(g).clone()).collect()
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    no_grad: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.push(value, Op::Leaf, Vec::new(), requires_grad)
    }

    /// A differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0].op
    }

    fn push(&mut self, value: Tensor, op: Op, parents: Vec<NodeId>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            parents,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Evaluates `op` on `inputs` and records the result.
    pub fn apply(&mut self, op: Op, inputs: &[NodeId]) -> Result<NodeId> {
        let arity = match op {
            Op::Leaf => return Err(Error::Validation("leaf nodes are created with Graph::leaf".into())),
            Op::MatMul | Op::Add | Op::Sub | Op::Mul | Op::ReluMask => Some(2),
            Op::Concat { .. } => None,
            _ => Some(1),
        };
        if let Some(n) = arity {
            if inputs.len() != n {
                return Err(Error::shape("apply arity", &[n], &[inputs.len()]));
            }
        }
        let v = |i: usize| &self.nodes[inputs[i].0].value;
        let value = match &op {
            Op::Leaf => unreachable!(),
            Op::MatMul => v(0).matmul(v(1))?,
            Op::Transpose => v(0).transpose()?,
            Op::Add => v(0).add(v(1))?,
            Op::Sub => v(0).sub(v(1))?,
            Op::Mul => v(0).mul(v(1))?,
            Op::Scale(c) => v(0).scale(*c)?,
            Op::Relu => v(0).relu()?,
            Op::ReluMask => v(0).relu_mask(v(1))?,
            Op::Square => v(0).square()?,
            Op::Sum => v(0).sum()?,
            Op::Mean => v(0).mean()?,
            Op::Expand(shape) => v(0).expand(shape)?,
            Op::Slice { axis, start, end } => v(0).slice(*axis, *start, *end)?,
            Op::Pad { axis, start, total } => v(0).pad(*axis, *start, *total)?,
            Op::Concat { axis } => {
                let parts: Vec<&Tensor> = inputs.iter().map(|id| &self.nodes[id.0].value).collect();
                Tensor::concat(&parts, *axis)?
            }
            Op::Reshape(shape) => v(0).reshape(shape)?,
        };
        let requires_grad = !self.no_grad && inputs.iter().any(|id| self.nodes[id.0].requires_grad);
        Ok(self.push(value, op, inputs.to_vec(), requires_grad))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::MatMul, &[a, b])
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Transpose, &[a])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Mul, &[a, b])
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        self.apply(Op::Scale(factor), &[a])
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Relu, &[a])
    }

    pub fn relu_mask(&mut self, x: NodeId, g: NodeId) -> Result<NodeId> {
        self.apply(Op::ReluMask, &[x, g])
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Square, &[a])
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Sum, &[a])
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Mean, &[a])
    }

    pub fn expand(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.apply(Op::Expand(shape.to_vec()), &[a])
    }

    pub fn slice(&mut self, a: NodeId, axis: usize, start: usize, end: usize) -> Result<NodeId> {
        self.apply(Op::Slice { axis, start, end }, &[a])
    }

    pub fn pad(&mut self, a: NodeId, axis: usize, start: usize, total: usize) -> Result<NodeId> {
        self.apply(Op::Pad { axis, start, total }, &[a])
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId> {
        self.apply(Op::Concat { axis }, parts)
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.apply(Op::Reshape(shape.to_vec()), &[a])
    }

    /// Reverse-mode gradients of the scalar `loss` with respect to `wrt`.
    ///
    /// A `wrt` node that the loss does not depend on gets a zero gradient.
    /// With `create_graph` the gradient nodes are differentiable functions of
    /// the graph's leaves; otherwise they are recorded as constants.
    pub fn backward(&mut self, loss: NodeId, wrt: &[NodeId], create_graph: bool) -> Result<GradientMap> {
        let loss_shape = self.nodes[loss.0].value.shape().to_vec();
        if !loss_shape.is_empty() {
            return Err(Error::shape("backward (loss must be scalar)", &loss_shape, &[]));
        }
        if let Some(bad) = wrt.iter().find(|id| !self.nodes[id.0].requires_grad) {
            return Err(Error::Validation(format!(
                "backward: node {} does not require grad",
                bad.0
            )));
        }

        // Nodes on some path from a `wrt` node up to `loss`.
        let end = loss.0 + 1;
        let mut reaches = vec![false; end];
        for id in wrt {
            if id.0 < end {
                reaches[id.0] = true;
            }
        }
        for i in 0..end {
            if !reaches[i] && self.nodes[i].requires_grad {
                reaches[i] = self.nodes[i].parents.iter().any(|p| reaches[p.0]);
            }
        }

        let saved_no_grad = self.no_grad;
        self.no_grad = !create_graph;
        let result = self.propagate(loss, &reaches);
        self.no_grad = saved_no_grad;
        let grads = result?;

        let mut entries = Vec::with_capacity(wrt.len());
        for &id in wrt {
            let g = match grads.get(id.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let zeros = Tensor::zeros(self.nodes[id.0].value.shape());
                    self.constant(zeros)
                }
            };
            entries.push((id, g));
        }
        Ok(GradientMap { entries })
    }

    fn propagate(&mut self, loss: NodeId, reaches: &[bool]) -> Result<Vec<Option<NodeId>>> {
        let mut grads: Vec<Option<NodeId>> = vec![None; reaches.len()];
        if !reaches[loss.0] {
            return Ok(grads);
        }
        let seed = Tensor::full(&[], 1.0);
        grads[loss.0] = Some(self.constant(seed));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i] else { continue };
            let op = self.nodes[i].op.clone();
            if op == Op::Leaf {
                continue;
            }
            let parents = self.nodes[i].parents.clone();
            let contributions = self.vjp(&op, &parents, NodeId(i), g, reaches)?;
            for (parent, contrib) in parents.iter().zip(contributions) {
                let Some(c) = contrib else { continue };
                grads[parent.0] = Some(match grads[parent.0] {
                    Some(acc) => self.add(acc, c)?,
                    None => c,
                });
            }
        }
        Ok(grads)
    }

    /// Vector-Jacobian products of one node, one entry per parent
    /// (`None` where the parent does not lead to any `wrt` node).
    fn vjp(
        &mut self,
        op: &Op,
        parents: &[NodeId],
        _out: NodeId,
        g: NodeId,
        reaches: &[bool],
    ) -> Result<Vec<Option<NodeId>>> {
        let need = |k: usize| reaches[parents[k].0];
        let shape_of = |graph: &Graph, k: usize| graph.nodes[parents[k].0].value.shape().to_vec();
        let mut out = vec![None; parents.len()];
        match op {
            Op::Leaf => {}
            Op::MatMul => {
                let (a, b) = (parents[0], parents[1]);
                if need(0) {
                    let bt = self.transpose(b)?;
                    out[0] = Some(self.matmul(g, bt)?);
                }
                if need(1) {
                    let at = self.transpose(a)?;
                    out[1] = Some(self.matmul(at, g)?);
                }
            }
            Op::Transpose => {
                if need(0) {
                    out[0] = Some(self.transpose(g)?);
                }
            }
            Op::Add => {
                for k in 0..2 {
                    if need(k) {
                        out[k] = Some(g);
                    }
                }
            }
            Op::Sub => {
                if need(0) {
                    out[0] = Some(g);
                }
                if need(1) {
                    out[1] = Some(self.scale(g, -1.0)?);
                }
            }
            Op::Mul => {
                let (a, b) = (parents[0], parents[1]);
                if need(0) {
                    out[0] = Some(self.mul(g, b)?);
                }
                if need(1) {
                    out[1] = Some(self.mul(g, a)?);
                }
            }
            Op::Scale(c) => {
                if need(0) {
                    out[0] = Some(self.scale(g, *c)?);
                }
            }
            Op::Relu => {
                if need(0) {
                    out[0] = Some(self.relu_mask(parents[0], g)?);
                }
            }
            Op::ReluMask => {
                // The mask is locally constant in x, so only g receives gradient.
                if need(1) {
                    out[1] = Some(self.relu_mask(parents[0], g)?);
                }
            }
            Op::Square => {
                if need(0) {
                    let gx = self.mul(g, parents[0])?;
                    out[0] = Some(self.scale(gx, 2.0)?);
                }
            }
            Op::Sum => {
                if need(0) {
                    let shape = shape_of(self, 0);
                    out[0] = Some(self.expand(g, &shape)?);
                }
            }
            Op::Mean => {
                if need(0) {
                    let shape = shape_of(self, 0);
                    let n = shape.iter().product::<usize>() as f64;
                    let e = self.expand(g, &shape)?;
                    out[0] = Some(self.scale(e, 1.0 / n)?);
                }
            }
            Op::Expand(_) => {
                if need(0) {
                    out[0] = Some(self.sum(g)?);
                }
            }
            Op::Slice { axis, start, .. } => {
                if need(0) {
                    let total = shape_of(self, 0)[*axis];
                    out[0] = Some(self.pad(g, *axis, *start, total)?);
                }
            }
            Op::Pad { axis, start, .. } => {
                if need(0) {
                    let len = shape_of(self, 0)[*axis];
                    out[0] = Some(self.slice(g, *axis, *start, *start + len)?);
                }
            }
            Op::Concat { axis } => {
                let mut offset = 0;
                for k in 0..parents.len() {
                    let len = shape_of(self, k)[*axis];
                    if need(k) {
                        out[k] = Some(self.slice(g, *axis, offset, offset + len)?);
                    }
                    offset += len;
                }
            }
            Op::Reshape(_) => {
                if need(0) {
                    let shape = shape_of(self, 0);
                    out[0] = Some(self.reshape(g, &shape)?);
                }
            }
        }
        Ok(out)
    }
}
