use std::sync::Arc;

use crate::diffcore::{DiffError, Graph, NodeId};
use crate::error::{Error, Result};
use crate::physics::{CoilMaps, ComplexImage, KSpace, SenseNormal, SenseOperator};
use crate::sampling::SamplingMask;

/// Output of a recorded CG solve.
pub struct CgTrace {
    pub x: NodeId,
    /// `‖r_k‖₂` for k = 0..=iterations run.
    pub residuals: Vec<f64>,
}

/// Records `n_cg` conjugate-gradient iterations on
/// `(EᴴE + μI) x = rhs + μz`, starting from `x₀ = z`.
///
/// `normal` records `EᴴE` applied to a node. Stops early only on an exactly
/// vanishing residual or curvature, which would otherwise divide by zero.
pub fn cg_graph(
    g: &mut Graph,
    z: NodeId,
    rhs: NodeId,
    mu: NodeId,
    n_cg: usize,
    normal: &mut dyn FnMut(&mut Graph, NodeId) -> Result<NodeId, DiffError>,
) -> Result<CgTrace, DiffError> {
    let mut apply_a = |g: &mut Graph, v: NodeId| -> Result<(NodeId, NodeId), DiffError> {
        let ehe = normal(g, v)?;
        let mv = g.mul_scalar(v, mu)?;
        Ok((g.add(ehe, mv)?, mv))
    };
    let (az, mu_z) = apply_a(g, z)?;
    let b = g.add(rhs, mu_z)?;
    let mut r = g.sub(b, az)?;
    let mut p = r;
    let mut x = z;
    let mut rr = g.dot(r, r)?;
    let mut residuals = vec![g.value(rr).item().sqrt()];

    for it in 0..n_cg {
        if g.value(rr).item() == 0.0 {
            break;
        }
        let (ap, _) = apply_a(g, p)?;
        let pap = g.dot(p, ap)?;
        if g.value(pap).item() <= 0.0 {
            break;
        }
        let alpha = g.div(rr, pap)?;
        let step = g.mul_scalar(p, alpha)?;
        x = g.add(x, step)?;
        let dr = g.mul_scalar(ap, alpha)?;
        r = g.sub(r, dr)?;
        let rr_new = g.dot(r, r)?;
        residuals.push(g.value(rr_new).item().sqrt());
        if it + 1 < n_cg {
            let beta = g.div(rr_new, rr)?;
            let bp = g.mul_scalar(p, beta)?;
            p = g.add(r, bp)?;
        }
        rr = rr_new;
    }
    Ok(CgTrace { x, residuals })
}

/// Records one data-consistency unit using the fused `EᴴE` primitive.
pub(crate) fn dc_graph(
    g: &mut Graph,
    z: NodeId,
    rhs: NodeId,
    mu: NodeId,
    op: &Arc<SenseNormal>,
    n_cg: usize,
) -> Result<CgTrace, DiffError> {
    cg_graph(g, z, rhs, mu, n_cg, &mut |g, v| g.linear(op.clone(), v))
}

/// Data-consistency solve `argmin_x ‖y − E x‖² + μ‖x − z‖²` by `n_cg` CG steps.
///
/// Returns the estimate and the residual norm after each iteration.
pub fn dc_unit(
    z: &ComplexImage,
    y: &KSpace,
    mask: &SamplingMask,
    coils: &Arc<CoilMaps>,
    mu: f64,
    n_cg: usize,
) -> Result<(ComplexImage, Vec<f64>)> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidArgument(format!("penalty weight mu = {mu} must be positive")));
    }
    if n_cg == 0 {
        return Err(Error::InvalidArgument("n_cg must be at least 1".into()));
    }
    let sense = Arc::new(SenseOperator::new(coils.clone(), mask.clone())?);
    let rhs_img = sense.adjoint(y)?;
    if (z.height(), z.width()) != (rhs_img.height(), rhs_img.width()) {
        return Err(Error::Shape(format!("z is {}×{}, k-space is {}×{}", z.height(), z.width(), y.height(), y.width())));
    }
    let op = Arc::new(SenseNormal(sense));
    let mut g = Graph::new();
    let zn = g.constant(z.to_array());
    let rhs = g.constant(rhs_img.to_array());
    let mun = g.constant(crate::diffcore::Array::scalar(mu));
    let trace = dc_graph(&mut g, zn, rhs, mun, &op, n_cg)?;
    Ok((ComplexImage::from_array(g.value(trace.x))?, trace.residuals))
}
