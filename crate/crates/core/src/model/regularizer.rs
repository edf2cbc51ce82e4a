use crate::diffcore::{DiffError, Graph, NodeId};
use crate::error::{Error, Result};
use crate::physics::ComplexImage;

use super::{ModelConfig, ModelParams};

/// Node ids of one regularizer weight set, in layout order.
pub(crate) struct WeightSet<'a> {
    pub nodes: &'a [NodeId],
}

/// Records the residual CNN on a planar `[2, h, w]` image node.
///
/// input conv → B × (conv-relu-conv, scaled, added to block input) → output
/// conv back to 2 channels, added to the network input.
pub(crate) fn regularizer_graph(g: &mut Graph, x: NodeId, w: WeightSet<'_>, cfg: &ModelConfig) -> Result<NodeId, DiffError> {
    let n = w.nodes;
    let conv = |g: &mut Graph, x, k: NodeId, b: NodeId| -> Result<NodeId, DiffError> {
        let y = g.conv2d(x, k)?;
        g.bias_add(y, b)
    };
    let mut h = conv(g, x, n[0], n[1])?;
    for b in 0..cfg.blocks {
        let base = 2 + 4 * b;
        let t = conv(g, h, n[base], n[base + 1])?;
        let t = g.relu(t)?;
        let t = conv(g, t, n[base + 2], n[base + 3])?;
        let t = g.scale(t, cfg.residual_scale)?;
        h = g.add(h, t)?;
    }
    let last = 2 + 4 * cfg.blocks;
    let correction = conv(g, h, n[last], n[last + 1])?;
    g.add(x, correction)
}

/// Applies the regularizer of unroll `unroll` (weight set 0 when shared).
pub fn regularizer_unit(image: &ComplexImage, params: &ModelParams, unroll: usize) -> Result<ComplexImage> {
    let cfg = params.config();
    let set = if cfg.shared_weights { 0 } else { unroll };
    if set >= cfg.weight_sets() {
        return Err(Error::InvalidArgument(format!("unroll {unroll} has no weight set")));
    }
    let per = cfg.tensors_per_set();
    let mut g = Graph::new();
    let x = g.constant(image.to_array());
    let nodes: Vec<NodeId> = params.tensors()[set * per..(set + 1) * per].iter().map(|t| g.constant(t.clone())).collect();
    let out = regularizer_graph(&mut g, x, WeightSet { nodes: &nodes }, cfg)?;
    ComplexImage::from_array(g.value(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::make_phantom;

    fn small() -> ModelConfig {
        ModelConfig { blocks: 2, features: 6, ..Default::default() }
    }

    #[test]
    fn zero_network_is_identity() {
        let x = make_phantom(16, 16, 3).unwrap();
        let p = ModelParams::zeros(small()).unwrap();
        assert_eq!(regularizer_unit(&x, &p, 0).unwrap(), x);
    }

    #[test]
    fn random_network_keeps_shape_and_is_deterministic() {
        let x = make_phantom(16, 24, 3).unwrap();
        let p = ModelParams::init(small(), 4).unwrap();
        let a = regularizer_unit(&x, &p, 0).unwrap();
        assert_eq!((a.height(), a.width()), (16, 24));
        assert!(a.data().iter().all(|v| v.re.is_finite() && v.im.is_finite()));
        assert_ne!(a, x);
        let b = regularizer_unit(&x, &p, 0).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(u, v)| u.re.to_bits() == v.re.to_bits() && u.im.to_bits() == v.im.to_bits()));
    }

    #[test]
    fn unshared_sets_differ_per_unroll() {
        let cfg = ModelConfig { unrolls: 2, shared_weights: false, ..small() };
        let x = make_phantom(16, 16, 1).unwrap();
        let p = ModelParams::init(cfg, 5).unwrap();
        assert_ne!(regularizer_unit(&x, &p, 0).unwrap(), regularizer_unit(&x, &p, 1).unwrap());
        assert!(regularizer_unit(&x, &p, 2).is_err());
    }
}
