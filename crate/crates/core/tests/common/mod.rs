#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use pgdl_core::physics::{CoilMaps, ComplexImage, KSpace};
use pgdl_core::sampling::SamplingMask;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rand_c(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

pub fn random_image(h: usize, w: usize, seed: u64) -> ComplexImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ComplexImage::new(h, w, (0..h * w).map(|_| rand_c(&mut rng)).collect()).unwrap()
}

pub fn random_kspace(coils: usize, h: usize, w: usize, mask: &SamplingMask, seed: u64) -> KSpace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    KSpace::new(coils, h, w, (0..coils * h * w).map(|_| rand_c(&mut rng)).collect(), mask.clone()).unwrap()
}

pub fn rel_err(a: &ComplexImage, b: &ComplexImage) -> f64 {
    let num: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    num / b.norm()
}

/// Centered orthonormal DFT matrix from its closed form.
pub fn dft_matrix(n: usize) -> DMatrix<Complex64> {
    let c = (n / 2) as f64;
    DMatrix::from_fn(n, n, |k, m| {
        Complex64::from_polar(1.0 / (n as f64).sqrt(), -2.0 * PI * (k as f64 - c) * (m as f64 - c) / n as f64)
    })
}

/// Dense `E_c` for one coil: rows index (ky, kx), columns index (y, x).
pub fn dense_encoding(coils: &CoilMaps, c: usize, mask: &SamplingMask) -> DMatrix<Complex64> {
    let (h, w) = (coils.height(), coils.width());
    let (fh, fw) = (dft_matrix(h), dft_matrix(w));
    let s = coils.map(c);
    DMatrix::from_fn(h * w, h * w, |row, col| {
        let (ky, kx) = (row / w, row % w);
        let (y, x) = (col / w, col % w);
        if !mask.contains(kx) {
            return Complex64::default();
        }
        fh[(ky, y)] * fw[(kx, x)] * s[col]
    })
}

/// Dense system `A = EᴴE + λI`, `b = Eᴴy + λz`.
pub fn dense_system(
    z: &ComplexImage,
    y: &KSpace,
    mask: &SamplingMask,
    coils: &CoilMaps,
    lambda: f64,
) -> (DMatrix<Complex64>, DVector<Complex64>) {
    let n = z.height() * z.width();
    let mut a = DMatrix::<Complex64>::identity(n, n) * Complex64::new(lambda, 0.0);
    let mut b = DVector::from_iterator(n, z.data().iter().map(|v| v * lambda));
    for c in 0..coils.coils() {
        let e = dense_encoding(coils, c, mask);
        let eh = e.adjoint();
        a += &eh * &e;
        b += &eh * DVector::from_column_slice(y.coil(c));
    }
    (a, b)
}

pub fn dense_solve(z: &ComplexImage, y: &KSpace, mask: &SamplingMask, coils: &CoilMaps, lambda: f64) -> ComplexImage {
    let (a, b) = dense_system(z, y, mask, coils, lambda);
    let x = a.lu().solve(&b).expect("non-singular system");
    ComplexImage::new(z.height(), z.width(), x.iter().copied().collect()).unwrap()
}

/// `‖x − x*‖_A`.
pub fn energy_error(a: &DMatrix<Complex64>, xstar: &DVector<Complex64>, x: &ComplexImage) -> f64 {
    let e = DVector::from_column_slice(x.data()) - xstar;
    (e.adjoint() * a * &e)[(0, 0)].re.sqrt()
}
