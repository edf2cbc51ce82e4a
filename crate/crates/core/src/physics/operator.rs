use std::sync::Arc;

use num_complex::Complex64;

use super::{from_planar, to_planar, CoilMaps, ComplexImage, KSpace};
use crate::diffcore::fft::{fft2c_inplace, plan};
use crate::diffcore::{Array, DiffError, Graph, LinearOperator, NodeId};
use crate::error::{Error, Result};
use crate::sampling::SamplingMask;

/// Encoding operator `E` for fixed coil maps and mask.
#[derive(Clone, Debug)]
pub struct SenseOperator {
    coils: Arc<CoilMaps>,
    mask: SamplingMask,
    flags: Vec<bool>,
}

impl SenseOperator {
    pub fn new(coils: Arc<CoilMaps>, mask: SamplingMask) -> Result<Self> {
        if mask.width() != coils.width() {
            return Err(Error::Shape(format!("mask width {} vs coil width {}", mask.width(), coils.width())));
        }
        let flags = mask.column_flags();
        Ok(Self { coils, mask, flags })
    }

    pub fn coils(&self) -> &CoilMaps {
        &self.coils
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    fn dims(&self) -> (usize, usize) {
        (self.coils.height(), self.coils.width())
    }

    fn check_image(&self, h: usize, w: usize) -> Result<()> {
        if (h, w) != self.dims() {
            return Err(Error::Shape(format!("image {h}×{w} vs operator {:?}", self.dims())));
        }
        Ok(())
    }

    /// `y_c = mask ⊙ FFT2(S_c ⊙ x)`.
    pub fn forward(&self, x: &ComplexImage) -> Result<KSpace> {
        self.check_image(x.height(), x.width())?;
        let (h, w) = self.dims();
        let mut out = Vec::with_capacity(self.coils.coils() * h * w);
        let mut buf = vec![Complex64::default(); h * w];
        for c in 0..self.coils.coils() {
            for ((b, s), v) in buf.iter_mut().zip(self.coils.map(c)).zip(x.data()) {
                *b = s * v;
            }
            fft2c_inplace(&mut buf, h, w, false);
            out.extend_from_slice(&buf);
        }
        KSpace::new(self.coils.coils(), h, w, out, self.mask.clone())
    }

    /// `x = Σ_c conj(S_c) ⊙ IFFT2(mask ⊙ y_c)`.
    pub fn adjoint(&self, k: &KSpace) -> Result<ComplexImage> {
        self.check_image(k.height(), k.width())?;
        if k.coils() != self.coils.coils() {
            return Err(Error::Shape(format!("{} k-space coils vs {} maps", k.coils(), self.coils.coils())));
        }
        let (h, w) = self.dims();
        let mut out = vec![Complex64::default(); h * w];
        let mut buf = vec![Complex64::default(); h * w];
        for c in 0..self.coils.coils() {
            buf.copy_from_slice(k.coil(c));
            self.zero_unsampled(&mut buf);
            fft2c_inplace(&mut buf, h, w, true);
            for ((o, s), b) in out.iter_mut().zip(self.coils.map(c)).zip(&buf) {
                *o += s.conj() * b;
            }
        }
        ComplexImage::new(h, w, out)
    }

    /// `EᴴE x` on a flat complex buffer.
    ///
    /// The mask acts on whole columns, so the height-axis transforms cancel and
    /// only width-axis transforms are needed. The centering shifts around the
    /// mask cancel too, leaving a shifted mask between plain transforms.
    pub fn normal_into(&self, x: &[Complex64], out: &mut [Complex64]) {
        let (h, w) = self.dims();
        debug_assert_eq!(x.len(), h * w);
        out.iter_mut().for_each(|v| *v = Complex64::default());
        let (fwd, inv) = (plan(w, false), plan(w, true));
        let mut scratch = vec![Complex64::default(); fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())];
        let c = w / 2;
        // Frequency k of the uncentered transform sits at centered index (k + c) mod w.
        let keep: Vec<f64> = (0..w).map(|k| if self.flags[(k + c) % w] { 1.0 / w as f64 } else { 0.0 }).collect();
        let mut buf = vec![Complex64::default(); h * w];
        for ch in 0..self.coils.coils() {
            let s = self.coils.map(ch);
            for ((b, sv), v) in buf.iter_mut().zip(s).zip(x) {
                *b = sv * v;
            }
            for row in buf.chunks_exact_mut(w) {
                row.rotate_left(c);
            }
            fwd.process_with_scratch(&mut buf, &mut scratch);
            for row in buf.chunks_exact_mut(w) {
                for (v, &k) in row.iter_mut().zip(&keep) {
                    *v *= k;
                }
            }
            inv.process_with_scratch(&mut buf, &mut scratch);
            for row in buf.chunks_exact_mut(w) {
                row.rotate_right(c);
            }
            for ((o, sv), b) in out.iter_mut().zip(s).zip(&buf) {
                *o += sv.conj() * b;
            }
        }
    }

    pub fn normal(&self, x: &ComplexImage) -> Result<ComplexImage> {
        self.check_image(x.height(), x.width())?;
        let mut out = vec![Complex64::default(); x.data().len()];
        self.normal_into(x.data(), &mut out);
        ComplexImage::new(x.height(), x.width(), out)
    }

    fn zero_unsampled(&self, buf: &mut [Complex64]) {
        let w = self.flags.len();
        for row in buf.chunks_exact_mut(w) {
            for (v, &keep) in row.iter_mut().zip(&self.flags) {
                if !keep {
                    *v = Complex64::default();
                }
            }
        }
    }
}

/// Applies `E_Ω` to an image.
pub fn apply_e(image: &ComplexImage, coils: &CoilMaps, mask: &SamplingMask) -> Result<KSpace> {
    SenseOperator::new(Arc::new(coils.clone()), mask.clone())?.forward(image)
}

/// Applies `E_Ωᴴ` to multi-coil k-space using `mask`.
pub fn apply_eh(kspace: &KSpace, coils: &CoilMaps, mask: &SamplingMask) -> Result<ComplexImage> {
    SenseOperator::new(Arc::new(coils.clone()), mask.clone())?.adjoint(kspace)
}

/// `EᴴE` as a graph primitive on planar `[2, h, w]` images. Self-adjoint.
#[derive(Clone, Debug)]
pub struct SenseNormal(pub Arc<SenseOperator>);

impl LinearOperator for SenseNormal {
    fn name(&self) -> &'static str {
        "sense_normal"
    }

    fn input_shape(&self) -> Vec<usize> {
        let (h, w) = self.0.dims();
        vec![2, h, w]
    }

    fn output_shape(&self) -> Vec<usize> {
        self.input_shape()
    }

    fn apply(&self, x: &Array) -> Array {
        let (h, w) = self.0.dims();
        let xc = from_planar(x.data(), h * w);
        let mut out = vec![Complex64::default(); h * w];
        self.0.normal_into(&xc, &mut out);
        Array::from_parts(vec![2, h, w], to_planar(&out))
    }

    fn adjoint(&self, y: &Array) -> Array {
        self.apply(y)
    }
}

/// Records `E` on the graph from primitives: repeat over coils, complex
/// multiply by the maps, FFT2, column mask. `coils` is a `[C, 2, h, w]` node.
pub fn encode_graph(g: &mut Graph, x: NodeId, coils: NodeId, mask: &SamplingMask) -> Result<NodeId, DiffError> {
    let n = g.value(coils).shape()[0];
    let rep = g.repeat_leading(x, n)?;
    let weighted = g.cmul(rep, coils)?;
    let k = g.fft2(weighted)?;
    g.column_mask(k, mask.column_flags_arc())
}

/// Records `Eᴴ` on the graph from primitives.
pub fn adjoint_graph(g: &mut Graph, k: NodeId, coils: NodeId, mask: &SamplingMask) -> Result<NodeId, DiffError> {
    let masked = g.column_mask(k, mask.column_flags_arc())?;
    let img = g.ifft2(masked)?;
    let weighted = g.cmul_conj(img, coils)?;
    g.sum_leading(weighted)
}
