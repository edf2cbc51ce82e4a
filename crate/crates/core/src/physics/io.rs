//! Per-slice binary layout, all little-endian `f64`:
//!
//! ```text
//! ground truth image   2 × H × W        (real plane, imaginary plane)
//! coil maps            C × 2 × H × W
//! full k-space         C × 2 × H × W
//! ```
//!
//! Dimensions are not stored in the file; they come from the dataset manifest.

use std::fs;
use std::path::Path;

use super::{from_planar, to_planar, CoilMaps, ComplexImage, KSpace};
use crate::error::{Error, Result};
use crate::sampling::SamplingMask;

#[derive(Clone, Debug, PartialEq)]
pub struct SliceData {
    pub ground_truth: ComplexImage,
    pub coils: CoilMaps,
    /// Fully sampled (noisy) reference k-space.
    pub kspace: KSpace,
}

pub fn slice_byte_len(height: usize, width: usize, coils: usize) -> usize {
    8 * 2 * height * width * (1 + 2 * coils)
}

pub fn write_slice(path: &Path, slice: &SliceData) -> Result<()> {
    let (h, w, c) = (slice.ground_truth.height(), slice.ground_truth.width(), slice.coils.coils());
    if slice.kspace.mask().len() != w || slice.kspace.coils() != c {
        return Err(Error::InvalidArgument("slice k-space must be fully sampled with one entry per coil".into()));
    }
    let mut bytes = Vec::with_capacity(slice_byte_len(h, w, c));
    let mut put = |vals: Vec<f64>| vals.into_iter().for_each(|v| bytes.extend_from_slice(&v.to_le_bytes()));
    put(to_planar(slice.ground_truth.data()));
    for k in 0..c {
        put(to_planar(slice.coils.map(k)));
    }
    for k in 0..c {
        put(to_planar(slice.kspace.coil(k)));
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_slice(path: &Path, height: usize, width: usize, coils: usize) -> Result<SliceData> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = slice_byte_len(height, width, coils);
    if bytes.len() != expected {
        return Err(Error::corrupt(path, format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let vals: Vec<f64> = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::corrupt(path, "non-finite value"));
    }
    let plane = height * width;
    let mut chunks = vals.chunks_exact(2 * plane);
    let mut next = || from_planar(chunks.next().expect("length checked"), plane);
    let ground_truth = ComplexImage::new(height, width, next())?;
    let maps: Vec<_> = (0..coils).flat_map(|_| next()).collect();
    let kdata: Vec<_> = (0..coils).flat_map(|_| next()).collect();
    let coils_map = CoilMaps::new(coils, height, width, maps).map_err(|e| Error::corrupt(path, e.to_string()))?;
    let kspace = KSpace::new(coils, height, width, kdata, SamplingMask::full(width))?;
    Ok(SliceData { ground_truth, coils: coils_map, kspace })
}
