use std::collections::BTreeMap;
use std::sync::Arc;

use super::{Array, DiffError, LinearOperator, Op};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: Array,
    requires_grad: bool,
}

/// Define-by-run computation record.
///
/// Nodes are appended in evaluation order, so every input id is smaller than
/// the id of the node consuming it.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<NodeId>,
}

/// Gradients of a scalar loss with respect to each parameter node.
#[derive(Debug, Default)]
pub struct Gradients {
    grads: BTreeMap<NodeId, Array>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Array> {
        self.grads.get(&id)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Array> {
        self.grads.remove(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Array)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }
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

    pub fn constant(&mut self, value: Array) -> NodeId {
        self.push_leaf(Op::Constant, value, false)
    }

    pub fn parameter(&mut self, value: Array) -> NodeId {
        let id = self.push_leaf(Op::Parameter, value, true);
        self.params.push(id);
        id
    }

    fn push_leaf(&mut self, op: Op, value: Array, requires_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, inputs: Vec::new(), value, requires_grad });
        id
    }

    pub fn value(&self, id: NodeId) -> &Array {
        &self.nodes[id.0].value
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0].op
    }

    /// Evaluates `op` on existing nodes and records the result.
    pub fn apply(&mut self, op: Op, inputs: &[NodeId]) -> Result<NodeId, DiffError> {
        if let Some(bad) = inputs.iter().find(|i| i.0 >= self.nodes.len()) {
            return Err(DiffError::UnknownNode(bad.0));
        }
        let value = {
            let vals: Vec<&Array> = inputs.iter().map(|i| &self.nodes[i.0].value).collect();
            op.forward(&vals)?
        };
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, inputs: inputs.to_vec(), value, requires_grad });
        Ok(id)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.apply(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.apply(Op::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.apply(Op::Mul, &[a, b])
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId, DiffError> {
        self.apply(Op::Scale(c), &[a])
    }

    pub fn mul_scalar(&mut self, a: NodeId, s: NodeId) -> Result<NodeId, DiffError> {
        self.apply(Op::MulScalar, &[a, s])
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.apply(Op::Div, &[a, b])
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId, DiffError> {
        self.apply(Op::Exp, &[a])
    }

    pub fn conv2d(&mut self, x: NodeId, kernel: NodeId) -> Result<NodeId, DiffError> {
        self.apply(Op::Conv2d, &[x, kernel])
    }

    pub fn bias_add(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId, DiffError> {
        self.apply(Op::BiasAdd, &[x, bias])
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        self.apply(Op::Relu, &[x])
    }

    pub fn fft2(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        self.apply(Op::Fft2, &[x])
    }

    pub fn ifft2(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        self.apply(Op::Ifft2, &[x])
    }

    pub fn cmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.apply(Op::CMul, &[a, b])
    }

    pub fn cmul_conj(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.apply(Op::CMulConj, &[a, b])
    }

    pub fn column_mask(&mut self, x: NodeId, mask: Arc<Vec<bool>>) -> Result<NodeId, DiffError> {
        self.apply(Op::ColumnMask(mask), &[x])
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.apply(Op::Dot, &[a, b])
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId, DiffError> {
        self.apply(Op::Sum, &[a])
    }

    pub fn l2_norm(&mut self, a: NodeId) -> Result<NodeId, DiffError> {
        self.apply(Op::L2Norm, &[a])
    }

    pub fn l1_complex(&mut self, a: NodeId) -> Result<NodeId, DiffError> {
        self.apply(Op::L1Complex, &[a])
    }

    pub fn repeat_leading(&mut self, a: NodeId, n: usize) -> Result<NodeId, DiffError> {
        self.apply(Op::RepeatLeading(n), &[a])
    }

    pub fn sum_leading(&mut self, a: NodeId) -> Result<NodeId, DiffError> {
        self.apply(Op::SumLeading, &[a])
    }

    pub fn linear(&mut self, op: Arc<dyn LinearOperator>, x: NodeId) -> Result<NodeId, DiffError> {
        self.apply(Op::Linear(op), &[x])
    }

    /// Reverse pass from a scalar `loss`.
    ///
    /// Every parameter node receives a gradient of its own shape; parameters
    /// that do not influence the loss get zeros.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, DiffError> {
        let root = self.nodes.get(loss.0).ok_or(DiffError::UnknownNode(loss.0))?;
        if root.value.len() != 1 {
            return Err(DiffError::NonScalarLoss(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Array>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array::from_parts(root.value.shape().to_vec(), vec![1.0]));
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let Some(grad) = grads[idx].take() else { continue };
            if node.op.is_leaf() {
                if matches!(node.op, Op::Parameter) {
                    out.grads.insert(NodeId(idx), grad);
                }
                continue;
            }
            let inputs: Vec<&Array> = node.inputs.iter().map(|i| &self.nodes[i.0].value).collect();
            let input_grads = node.op.backward(&inputs, &node.value, &grad);
            for (input, g) in node.inputs.iter().zip(input_grads) {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot => *slot = Some(g),
                }
            }
        }
        for &p in &self.params {
            out.grads.entry(p).or_insert_with(|| Array::zeros(self.nodes[p.0].value.shape()));
        }
        Ok(out)
    }
}
