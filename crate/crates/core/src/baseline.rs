//! CG-SENSE: unregularized (or Tikhonov) least squares by conjugate gradients.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::physics::{CoilMaps, ComplexImage, KSpace, SenseOperator};
use crate::sampling::SamplingMask;

/// Iterations used when none is given.
pub const DEFAULT_CG_SENSE_ITERS: usize = 30;

#[derive(Clone, Debug)]
pub struct CgSenseResult {
    pub image: ComplexImage,
    /// `‖b − A x_k‖₂` for k = 0..=iterations run.
    pub residuals: Vec<f64>,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// Solves `(EᴴE + λI) x = Eᴴy` by `n_iter` CG iterations from `x₀ = 0`.
pub fn cg_sense(y: &KSpace, mask: &SamplingMask, coils: &Arc<CoilMaps>, lambda: f64, n_iter: usize) -> Result<CgSenseResult> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} must be non-negative")));
    }
    if n_iter == 0 {
        return Err(Error::InvalidArgument("n_iter must be at least 1".into()));
    }
    let op = SenseOperator::new(coils.clone(), mask.clone())?;
    let b = op.adjoint(y)?;
    let (h, w) = (b.height(), b.width());
    let n = h * w;
    let apply = |v: &[Complex64], out: &mut [Complex64]| {
        op.normal_into(v, out);
        for (o, x) in out.iter_mut().zip(v) {
            *o += x * lambda;
        }
    };

    let mut x = vec![Complex64::default(); n];
    let mut r = b.data().to_vec();
    let mut p = r.clone();
    let mut ap = vec![Complex64::default(); n];
    let mut rr = dot(&r, &r);
    let mut residuals = vec![rr.sqrt()];
    for _ in 0..n_iter {
        if rr == 0.0 {
            break;
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += p[i] * alpha;
            r[i] -= ap[i] * alpha;
        }
        let rr_new = dot(&r, &r);
        residuals.push(rr_new.sqrt());
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + p[i] * beta;
        }
        rr = rr_new;
    }
    Ok(CgSenseResult { image: ComplexImage::new(h, w, x)?, residuals })
}
