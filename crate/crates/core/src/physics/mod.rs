//! Multi-coil Cartesian MR encoding and synthetic acquisitions.
//!
//! The encoding operator for coil `c` is `mask ⊙ FFT2(S_c ⊙ x)` with a
//! centered orthonormal FFT. Coil maps are normalized so that
//! `Σ_c |S_c|² = 1`, which makes `EᴴE` the identity under a full mask.

mod io;
mod operator;
mod synth;

pub use io::{read_slice, slice_byte_len, write_slice, SliceData};
pub use operator::{adjoint_graph, apply_e, apply_eh, encode_graph, SenseNormal, SenseOperator};
pub use synth::{add_noise, make_coil_maps, make_phantom, NoiseSpec};

pub use num_complex::Complex64;

use crate::diffcore::Array;
use crate::error::{Error, Result};
use crate::sampling::SamplingMask;

/// Row-major `height × width` complex image.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl ComplexImage {
    pub fn new(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!("{}×{} image needs {} pixels, got {}", height, width, height * width, data.len())));
        }
        if data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidArgument("image contains non-finite values".into()));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![Complex64::default(); height * width] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.norm()).collect()
    }

    /// Planar `[2, h, w]` array: real plane then imaginary plane.
    pub fn to_array(&self) -> Array {
        Array::new(vec![2, self.height, self.width], to_planar(&self.data)).expect("image values are finite")
    }

    pub fn from_array(a: &Array) -> Result<Self> {
        match a.shape() {
            [2, h, w] => Self::new(*h, *w, from_planar(a.data(), h * w)),
            s => Err(Error::Shape(format!("expected [2, h, w], got {s:?}"))),
        }
    }

    /// Hermitian inner product `Σ conj(self) · other`.
    pub fn inner(&self, other: &ComplexImage) -> Complex64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Per-coil sensitivity maps, `coils × height × width`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoilMaps {
    coils: usize,
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl CoilMaps {
    /// Wraps raw maps; checks the `Σ_c |S_c|² = 1` normalization wherever
    /// any coil is nonzero.
    pub fn new(coils: usize, height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if coils == 0 || data.len() != coils * height * width {
            return Err(Error::Shape(format!("{coils} coils of {height}×{width} vs {} values", data.len())));
        }
        let maps = Self { coils, height, width, data };
        for p in 0..height * width {
            let energy: f64 = (0..coils).map(|c| maps.map(c)[p].norm_sqr()).sum();
            if energy != 0.0 && (energy - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidArgument(format!("coil energy {energy} at pixel {p} is not normalized")));
            }
        }
        Ok(maps)
    }

    pub fn coils(&self) -> usize {
        self.coils
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn map(&self, c: usize) -> &[Complex64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Planar `[C, 2, h, w]` array.
    pub fn to_array(&self) -> Array {
        planar_stack(&self.data, self.coils, self.height, self.width)
    }
}

/// Multi-coil k-space with the mask it was sampled on.
///
/// Entries on unsampled columns are exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpace {
    coils: usize,
    height: usize,
    width: usize,
    data: Vec<Complex64>,
    mask: SamplingMask,
}

impl KSpace {
    /// Wraps coil data, zeroing every column outside `mask`.
    pub fn new(coils: usize, height: usize, width: usize, mut data: Vec<Complex64>, mask: SamplingMask) -> Result<Self> {
        if data.len() != coils * height * width {
            return Err(Error::Shape(format!("{coils} coils of {height}×{width} vs {} values", data.len())));
        }
        if mask.width() != width {
            return Err(Error::Shape(format!("mask width {} vs k-space width {width}", mask.width())));
        }
        zero_unsampled(&mut data, width, &mask);
        Ok(Self { coils, height, width, data, mask })
    }

    pub fn from_array(a: &Array, mask: SamplingMask) -> Result<Self> {
        match a.shape() {
            [c, 2, h, w] => {
                let data = a.data().chunks_exact(2 * h * w).flat_map(|chunk| from_planar(chunk, h * w)).collect();
                Self::new(*c, *h, *w, data, mask)
            }
            s => Err(Error::Shape(format!("expected [C, 2, h, w], got {s:?}"))),
        }
    }

    pub fn coils(&self) -> usize {
        self.coils
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn coil(&self, c: usize) -> &[Complex64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    /// Keeps only the columns of `sub`, which must be a subset of this mask.
    pub fn restrict(&self, sub: &SamplingMask) -> Result<KSpace> {
        if !sub.is_subset_of(&self.mask) {
            return Err(Error::InvalidArgument("restriction mask is not a subset of the acquired mask".into()));
        }
        KSpace::new(self.coils, self.height, self.width, self.data.clone(), sub.clone())
    }

    /// Planar `[C, 2, h, w]` array.
    pub fn to_array(&self) -> Array {
        planar_stack(&self.data, self.coils, self.height, self.width)
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Hermitian inner product `Σ conj(self) · other`.
    pub fn inner(&self, other: &KSpace) -> Complex64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }
}

fn zero_unsampled(data: &mut [Complex64], width: usize, mask: &SamplingMask) {
    let flags = mask.column_flags();
    for row in data.chunks_exact_mut(width) {
        for (v, &keep) in row.iter_mut().zip(&flags) {
            if !keep {
                *v = Complex64::default();
            }
        }
    }
}

pub(crate) fn to_planar(data: &[Complex64]) -> Vec<f64> {
    data.iter().map(|v| v.re).chain(data.iter().map(|v| v.im)).collect()
}

pub(crate) fn from_planar(data: &[f64], plane: usize) -> Vec<Complex64> {
    let (re, im) = data.split_at(plane);
    re.iter().zip(im).map(|(&r, &i)| Complex64::new(r, i)).collect()
}

fn planar_stack(data: &[Complex64], lead: usize, h: usize, w: usize) -> Array {
    let flat = data.chunks_exact(h * w).flat_map(to_planar).collect();
    Array::new(vec![lead, 2, h, w], flat).expect("finite values")
}
