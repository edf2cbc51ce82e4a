//! Centered, orthonormal discrete Fourier transforms.
//!
//! The centered transform places the zero frequency at index `n / 2` and
//! treats spatial index `n / 2` as the origin, i.e. `fftshift ∘ fft ∘ ifftshift`.
//! Scaling is `1/√n` in both directions so the transform is unitary.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let direction = if inverse { FftDirection::Inverse } else { FftDirection::Forward };
    PLANNER.with(|p| p.borrow_mut().plan_fft(n, direction))
}

/// Reusable centered transform of a fixed length.
pub struct CenteredFft {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    line: Vec<Complex64>,
    scratch: Vec<Complex64>,
    scale: f64,
}

impl CenteredFft {
    pub fn new(n: usize, inverse: bool) -> Self {
        let fft = plan(n, inverse);
        let scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        Self { n, fft, line: vec![Complex64::default(); n], scratch, scale: 1.0 / (n as f64).sqrt() }
    }

    /// Transforms `data` in place.
    pub fn process(&mut self, data: &mut [Complex64]) {
        let n = self.n;
        let c = n / 2;
        for (m, v) in self.line.iter_mut().enumerate() {
            *v = data[(m + c) % n];
        }
        self.fft.process_with_scratch(&mut self.line, &mut self.scratch);
        for (k, v) in data.iter_mut().enumerate() {
            *v = self.line[(k + n - c) % n] * self.scale;
        }
    }

    /// Transforms a strided line (e.g. an image column) in place.
    fn process_strided(&mut self, data: &mut [Complex64], offset: usize, stride: usize) {
        let n = self.n;
        let c = n / 2;
        for m in 0..n {
            self.line[m] = data[offset + ((m + c) % n) * stride];
        }
        self.fft.process_with_scratch(&mut self.line, &mut self.scratch);
        for k in 0..n {
            data[offset + k * stride] = self.line[(k + n - c) % n] * self.scale;
        }
    }
}

/// In-place centered 2D transform of an `h × w` row-major complex image.
pub fn fft2c_inplace(buf: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    debug_assert_eq!(buf.len(), h * w);
    let mut rows = CenteredFft::new(w, inverse);
    for row in buf.chunks_exact_mut(w) {
        rows.process(row);
    }
    let mut cols = CenteredFft::new(h, inverse);
    for col in 0..w {
        cols.process_strided(buf, col, w);
    }
}

/// In-place centered 1D transform along the width axis of every row.
pub fn fft_rows_inplace(buf: &mut [Complex64], w: usize, inverse: bool) {
    let mut rows = CenteredFft::new(w, inverse);
    for row in buf.chunks_exact_mut(w) {
        rows.process(row);
    }
}

/// Centered 2D transform of planar data laid out as `[lead, 2, h, w]`.
pub fn fft2c_planar(data: &[f64], lead: usize, h: usize, w: usize, inverse: bool) -> Vec<f64> {
    let plane = h * w;
    debug_assert_eq!(data.len(), lead * 2 * plane);
    let mut out = vec![0.0; data.len()];
    let mut buf = vec![Complex64::default(); plane];
    for l in 0..lead {
        let base = l * 2 * plane;
        let (re, im) = data[base..base + 2 * plane].split_at(plane);
        for (b, (&r, &i)) in buf.iter_mut().zip(re.iter().zip(im)) {
            *b = Complex64::new(r, i);
        }
        fft2c_inplace(&mut buf, h, w, inverse);
        let (ore, oim) = out[base..base + 2 * plane].split_at_mut(plane);
        for ((r, i), b) in ore.iter_mut().zip(oim.iter_mut()).zip(&buf) {
            *r = b.re;
            *i = b.im;
        }
    }
    out
}
