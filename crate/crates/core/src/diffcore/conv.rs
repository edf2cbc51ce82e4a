//! Single-image 2D convolution kernels (stride 1, zero "same" padding).
//!
//! Implemented as im2col followed by a dense matrix product. Shapes:
//! input `[cin, h, w]`, kernel `[cout, cin, kh, kw]` with odd `kh`/`kw`,
//! output `[cout, h, w]`. Like most deep learning frameworks this is a
//! cross-correlation: no kernel flip.

use std::cell::RefCell;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvDims {
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvDims {
    fn patch(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn pixels(&self) -> usize {
        self.h * self.w
    }
}

/// `c[m×n] = a · b`, where `a` is `m×k` (or `k×m` when `a_t`) and `b` is
/// `k×n` (or `n×k` when `b_t`), all row-major.
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths were checked against the strides above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

thread_local! {
    /// Reused patch matrices; large fresh allocations dominate otherwise.
    static SCRATCH: RefCell<(Vec<f64>, Vec<f64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

/// Fills `cols` (`patch × pixels`, every entry written) with input patches.
fn im2col_into(x: &[f64], d: &ConvDims, cols: &mut Vec<f64>) {
    let (h, w) = (d.h as isize, d.w as isize);
    let (ph, pw) = ((d.kh / 2) as isize, (d.kw / 2) as isize);
    let hw = d.pixels();
    cols.resize(d.patch() * hw, 0.0);
    for ci in 0..d.cin {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..d.kh {
            for kx in 0..d.kw {
                let row = (ci * d.kh + ky) * d.kw + kx;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                let dy = ky as isize - ph;
                let dx = kx as isize - pw;
                let x_lo = ((-dx).max(0) as usize).min(d.w);
                let x_hi = ((w - dx).min(w).max(0) as usize).max(x_lo);
                for y in 0..h {
                    let sy = y + dy;
                    let dst_row = &mut dst[(y * w) as usize..((y + 1) * w) as usize];
                    if sy < 0 || sy >= h || x_lo >= x_hi {
                        dst_row.fill(0.0);
                        continue;
                    }
                    let src_row = &plane[(sy * w) as usize..((sy + 1) * w) as usize];
                    let s0 = (x_lo as isize + dx) as usize;
                    dst_row[..x_lo].fill(0.0);
                    dst_row[x_lo..x_hi].copy_from_slice(&src_row[s0..s0 + (x_hi - x_lo)]);
                    dst_row[x_hi..].fill(0.0);
                }
            }
        }
    }
}

fn col2im(cols: &[f64], d: &ConvDims) -> Vec<f64> {
    let (h, w) = (d.h as isize, d.w as isize);
    let (ph, pw) = ((d.kh / 2) as isize, (d.kw / 2) as isize);
    let hw = d.pixels();
    let mut x = vec![0.0; d.cin * hw];
    for ci in 0..d.cin {
        let plane = &mut x[ci * hw..(ci + 1) * hw];
        for ky in 0..d.kh {
            for kx in 0..d.kw {
                let row = (ci * d.kh + ky) * d.kw + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                let dy = ky as isize - ph;
                let dx = kx as isize - pw;
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w - dx).min(w).max(0) as usize;
                for y in 0..h {
                    let sy = y + dy;
                    if sy < 0 || sy >= h || x_lo >= x_hi {
                        continue;
                    }
                    let s0 = (x_lo as isize + dx) as usize;
                    let dst_row = &mut plane[(sy * w) as usize + s0..(sy * w) as usize + s0 + (x_hi - x_lo)];
                    let src_row = &src[(y * w) as usize + x_lo..(y * w) as usize + x_hi];
                    for (a, b) in dst_row.iter_mut().zip(src_row) {
                        *a += b;
                    }
                }
            }
        }
    }
    x
}

pub fn conv2d_forward(x: &[f64], kernel: &[f64], d: &ConvDims) -> Vec<f64> {
    let mut out = vec![0.0; d.cout * d.pixels()];
    SCRATCH.with(|s| {
        let cols = &mut s.borrow_mut().0;
        im2col_into(x, d, cols);
        gemm(d.cout, d.patch(), d.pixels(), kernel, false, cols, false, &mut out);
    });
    out
}

/// Returns `(grad_input, grad_kernel)`.
pub fn conv2d_backward(x: &[f64], kernel: &[f64], grad: &[f64], d: &ConvDims) -> (Vec<f64>, Vec<f64>) {
    let mut grad_kernel = vec![0.0; d.cout * d.patch()];
    let grad_x = SCRATCH.with(|s| {
        let (cols, grad_cols) = &mut *s.borrow_mut();
        im2col_into(x, d, cols);
        gemm(d.cout, d.pixels(), d.patch(), grad, false, cols, true, &mut grad_kernel);
        grad_cols.resize(d.patch() * d.pixels(), 0.0);
        gemm(d.patch(), d.cout, d.pixels(), kernel, true, grad, false, grad_cols);
        col2im(grad_cols, d)
    });
    (grad_x, grad_kernel)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &[f64], k: &[f64], d: &ConvDims) -> Vec<f64> {
        let mut out = vec![0.0; d.cout * d.h * d.w];
        let (ph, pw) = ((d.kh / 2) as isize, (d.kw / 2) as isize);
        for co in 0..d.cout {
            for y in 0..d.h as isize {
                for xx in 0..d.w as isize {
                    let mut acc = 0.0;
                    for ci in 0..d.cin {
                        for ky in 0..d.kh as isize {
                            for kx in 0..d.kw as isize {
                                let sy = y + ky - ph;
                                let sx = xx + kx - pw;
                                if sy < 0 || sx < 0 || sy >= d.h as isize || sx >= d.w as isize {
                                    continue;
                                }
                                let kv = k[((co * d.cin + ci) * d.kh + ky as usize) * d.kw + kx as usize];
                                acc += kv * x[(ci * d.h + sy as usize) * d.w + sx as usize];
                            }
                        }
                    }
                    out[(co * d.h + y as usize) * d.w + xx as usize] = acc;
                }
            }
        }
        out
    }

    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    #[test]
    fn matches_naive_loop() {
        let d = ConvDims { cin: 3, cout: 2, h: 5, w: 7, kh: 3, kw: 3 };
        let x = pseudo(d.cin * d.h * d.w, 1);
        let k = pseudo(d.cout * d.cin * 9, 2);
        let got = conv2d_forward(&x, &k, &d);
        let want = naive(&x, &k, &d);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn backward_is_adjoint_of_forward() {
        let d = ConvDims { cin: 2, cout: 3, h: 6, w: 4, kh: 3, kw: 3 };
        let x = pseudo(d.cin * d.h * d.w, 3);
        let k = pseudo(d.cout * d.cin * 9, 4);
        let g = pseudo(d.cout * d.h * d.w, 5);
        let y = conv2d_forward(&x, &k, &d);
        let (gx, gk) = conv2d_backward(&x, &k, &g, &d);
        let lhs: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
        let via_x: f64 = x.iter().zip(&gx).map(|(a, b)| a * b).sum();
        let via_k: f64 = k.iter().zip(&gk).map(|(a, b)| a * b).sum();
        assert!((lhs - via_x).abs() < 1e-12 * lhs.abs().max(1.0));
        assert!((lhs - via_k).abs() < 1e-12 * lhs.abs().max(1.0));
    }
}
