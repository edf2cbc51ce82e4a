//! The unrolled network: alternating regularizer and data-consistency units.
//!
//! ```text
//! x⁰ = Eᴴy
//! for i in 1..=T:
//!     z  = x^{i-1} + CNN(x^{i-1})
//!     xⁱ = CG_{n_cg}[(EᴴE + μI) x = Eᴴy + μz, x₀ = z]
//! output xᵀ and its full k-space E_full xᵀ
//! ```

mod dc;
mod params;
mod regularizer;

pub use dc::dc_unit;
pub use params::{ModelConfig, ModelParams, OUTPUT_INIT_GAIN};
pub use regularizer::regularizer_unit;

pub use dc::{cg_graph, CgTrace};

use std::sync::Arc;

use crate::diffcore::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::physics::{encode_graph, CoilMaps, ComplexImage, KSpace, SenseNormal, SenseOperator};
use crate::sampling::SamplingMask;

use regularizer::{regularizer_graph, WeightSet};

#[derive(Clone, Debug)]
pub struct ReconResult {
    pub image: ComplexImage,
    /// `E_full` applied to `image`.
    pub kspace: KSpace,
    /// `x⁰, x¹, …, xᵀ`.
    pub intermediates: Vec<ComplexImage>,
}

/// The recorded forward pass, ready for a loss and a backward pass.
pub struct UnrolledGraph {
    pub graph: Graph,
    pub image: NodeId,
    /// Planar `[C, 2, h, w]` full k-space of the output.
    pub kspace: NodeId,
    /// One node per parameter tensor, in layout order.
    pub params: Vec<NodeId>,
    /// `x⁰ … xᵀ` nodes.
    pub iterates: Vec<NodeId>,
}

/// Records the unrolled network on a fresh graph.
///
/// `mask` drives the data-consistency units (Θ_j in multi-mask training, Ω at
/// inference). With `trainable` false the parameters are recorded as
/// constants.
pub fn record_unrolled(
    y: &KSpace,
    mask: &SamplingMask,
    coils: &Arc<CoilMaps>,
    params: &ModelParams,
    trainable: bool,
) -> Result<UnrolledGraph> {
    let cfg = params.config();
    if (y.height(), y.width(), y.coils()) != (coils.height(), coils.width(), coils.coils()) {
        return Err(Error::Shape(format!(
            "k-space {}×{}×{} vs coil maps {}×{}×{}",
            y.coils(),
            y.height(),
            y.width(),
            coils.coils(),
            coils.height(),
            coils.width()
        )));
    }
    let sense = Arc::new(SenseOperator::new(coils.clone(), mask.clone())?);
    let zero_filled = sense.adjoint(y)?;
    let normal = Arc::new(SenseNormal(sense));

    let mut g = Graph::new();
    let param_nodes: Vec<NodeId> = params
        .tensors()
        .iter()
        .map(|t| if trainable { g.parameter(t.clone()) } else { g.constant(t.clone()) })
        .collect();
    let log_mu = *param_nodes.last().expect("log_mu present");
    let mu = g.exp(log_mu)?;
    let rhs = g.constant(zero_filled.to_array());

    let per = cfg.tensors_per_set();
    let mut x = rhs;
    let mut iterates = vec![x];
    for i in 0..cfg.unrolls {
        let set = if cfg.shared_weights { 0 } else { i };
        let weights = WeightSet { nodes: &param_nodes[set * per..(set + 1) * per] };
        let z = regularizer_graph(&mut g, x, weights, cfg)?;
        x = dc::dc_graph(&mut g, z, rhs, mu, &normal, cfg.cg_iters)?.x;
        iterates.push(x);
    }
    let coil_node = g.constant(coils.to_array());
    let kspace = encode_graph(&mut g, x, coil_node, &SamplingMask::full(coils.width()))?;
    Ok(UnrolledGraph { graph: g, image: x, kspace, params: param_nodes, iterates })
}

/// Runs the unrolled network for inference.
pub fn unrolled_forward(y: &KSpace, mask: &SamplingMask, coils: &Arc<CoilMaps>, params: &ModelParams) -> Result<ReconResult> {
    let rec = record_unrolled(y, mask, coils, params, false)?;
    let g = &rec.graph;
    let image = ComplexImage::from_array(g.value(rec.image))?;
    let kspace = KSpace::from_array(g.value(rec.kspace), SamplingMask::full(coils.width()))?;
    let intermediates = rec.iterates.iter().map(|&n| ComplexImage::from_array(g.value(n))).collect::<Result<_>>()?;
    Ok(ReconResult { image, kspace, intermediates })
}

#[cfg(test)]
mod tests;
