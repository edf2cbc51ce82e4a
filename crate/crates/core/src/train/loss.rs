use serde::{Deserialize, Serialize};

use crate::diffcore::{Array, Graph, NodeId};
use crate::error::{Error, Result};
use crate::physics::KSpace;

/// Weights of the two normalized terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub l2: f64,
    pub l1: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { l2: 1.0, l1: 1.0 }
    }
}

/// Records `w₂‖u − v‖₂/‖u‖₂ + w₁‖u − v‖₁/‖u‖₁` for planar complex nodes.
///
/// `reference` is treated as data: its norms enter as constants. The ℓ1 term
/// sums complex moduli.
pub fn loss_graph(g: &mut Graph, reference: NodeId, prediction: NodeId, weights: LossWeights) -> Result<NodeId> {
    let diff = g.sub(reference, prediction)?;
    let ref_l2 = g.value(reference).norm2();
    let ref_l1_node = g.l1_complex(reference)?;
    let ref_l1 = g.value(ref_l1_node).item();
    if ref_l2 == 0.0 || ref_l1 == 0.0 {
        return Err(Error::InvalidArgument("reference k-space is identically zero".into()));
    }
    let n2 = g.constant(Array::scalar(ref_l2));
    let n1 = g.constant(Array::scalar(ref_l1));
    let l2 = g.l2_norm(diff)?;
    let l2 = g.div(l2, n2)?;
    let l1 = g.l1_complex(diff)?;
    let l1 = g.div(l1, n1)?;
    let l2 = g.scale(l2, weights.l2)?;
    let l1 = g.scale(l1, weights.l1)?;
    Ok(g.add(l2, l1)?)
}

/// Normalized ℓ1-ℓ2 loss between a reference and a predicted k-space, both
/// compared on every grid entry.
pub fn loss_l1l2(reference: &KSpace, prediction: &KSpace) -> Result<f64> {
    loss_l1l2_weighted(reference, prediction, LossWeights::default())
}

pub fn loss_l1l2_weighted(reference: &KSpace, prediction: &KSpace, weights: LossWeights) -> Result<f64> {
    let dims = |k: &KSpace| (k.coils(), k.height(), k.width());
    if dims(reference) != dims(prediction) {
        return Err(Error::Shape(format!("reference {:?} vs prediction {:?}", dims(reference), dims(prediction))));
    }
    let mut g = Graph::new();
    let u = g.constant(reference.to_array());
    let v = g.constant(prediction.to_array());
    let loss = loss_graph(&mut g, u, v, weights)?;
    Ok(g.value(loss).item())
}
