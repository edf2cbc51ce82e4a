use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{CoilMaps, ComplexImage, KSpace};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Standard deviation per real and per imaginary component.
    pub sigma: f64,
    pub seed: u64,
}

/// Normalized pixel-center coordinate in (-1, 1).
fn coord(i: usize, n: usize) -> f64 {
    (i as f64 + 0.5) / n as f64 * 2.0 - 1.0
}

struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    angle: f64,
    intensity: f64,
}

impl Ellipse {
    fn contains(&self, u: f64, v: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let du = u - self.cx;
        let dv = v - self.cy;
        let x = c * du + s * dv;
        let y = -s * du + c * dv;
        (x / self.a).powi(2) + (y / self.b).powi(2) <= 1.0
    }
}

/// Separable [1, 2, 1]/4 blur with zero padding.
fn blur(img: &[f64], h: usize, w: usize) -> Vec<f64> {
    let tap = |src: &[f64], i: isize, n: usize, stride: usize, base: usize| -> f64 {
        if i < 0 || i as usize >= n {
            0.0
        } else {
            src[base + i as usize * stride]
        }
    };
    let mut rows = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let xi = x as isize;
            rows[y * w + x] = 0.25 * tap(img, xi - 1, w, 1, y * w) + 0.5 * img[y * w + x] + 0.25 * tap(img, xi + 1, w, 1, y * w);
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let yi = y as isize;
            out[y * w + x] = 0.25 * tap(&rows, yi - 1, h, w, x) + 0.5 * rows[y * w + x] + 0.25 * tap(&rows, yi + 1, h, w, x);
        }
    }
    out
}

/// Random-ellipse phantom with a smooth polynomial phase.
///
/// A large "body" ellipse is followed by 4–11 smaller structures; all
/// intensities lie in [0.2, 1.0] and overlaps add. The magnitude is blurred,
/// scaled to a maximum of exactly 1, and the phase is zero at the brightest
/// pixel.
pub fn make_phantom(height: usize, width: usize, seed: u64) -> Result<ComplexImage> {
    if height < 16 || width < 16 {
        return Err(Error::InvalidArgument(format!("phantom needs at least 16×16, got {height}×{width}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.gen_range(5..=12);
    let mut ellipses = Vec::with_capacity(count);
    ellipses.push(Ellipse {
        cx: rng.gen_range(-0.1..0.1),
        cy: rng.gen_range(-0.1..0.1),
        a: rng.gen_range(0.6..0.85),
        b: rng.gen_range(0.6..0.85),
        angle: rng.gen_range(0.0..PI),
        intensity: rng.gen_range(0.2..=1.0),
    });
    for _ in 1..count {
        ellipses.push(Ellipse {
            cx: rng.gen_range(-0.45..0.45),
            cy: rng.gen_range(-0.45..0.45),
            a: rng.gen_range(0.05..0.35),
            b: rng.gen_range(0.05..0.35),
            angle: rng.gen_range(0.0..PI),
            intensity: rng.gen_range(0.2..=1.0),
        });
    }
    let phase_coeffs: [f64; 5] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));

    let mut mag = vec![0.0; height * width];
    for y in 0..height {
        let v = coord(y, height);
        for x in 0..width {
            let u = coord(x, width);
            mag[y * width + x] = ellipses.iter().filter(|e| e.contains(u, v)).map(|e| e.intensity).sum();
        }
    }
    let mag = blur(&mag, height, width);
    let (peak_idx, peak) = mag
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::MIN), |best, (i, m)| if m > best.1 { (i, m) } else { best });

    let phase_at = |i: usize| {
        let u = coord(i % width, width);
        let v = coord(i / width, height);
        let [a1, a2, a3, a4, a5] = phase_coeffs;
        a1 * u + a2 * v + a3 * u * v + 0.5 * a4 * u * u + 0.5 * a5 * v * v
    };
    let phase_ref = phase_at(peak_idx);
    let data = mag
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let m = m / peak;
            if i == peak_idx {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::from_polar(m, phase_at(i) - phase_ref)
            }
        })
        .collect();
    ComplexImage::new(height, width, data)
}

/// Smooth synthetic receive profiles, normalized to `Σ_c |S_c|² = 1`.
///
/// Coil `c` is a Gaussian bump centered on a ring just outside the field of
/// view at angle `θ₀ + 2πc/C`, with a random linear phase ramp.
pub fn make_coil_maps(coils: usize, height: usize, width: usize, seed: u64) -> Result<CoilMaps> {
    if coils == 0 || height == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!("invalid coil map dimensions {coils}×{height}×{width}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta0 = rng.gen_range(0.0..2.0 * PI);
    let radius = 1.2;
    let sigma = 0.8;
    let n = height * width;
    let mut data = Vec::with_capacity(coils * n);
    for c in 0..coils {
        let theta = theta0 + 2.0 * PI * c as f64 / coils as f64;
        let (cy, cx) = (radius * theta.sin(), radius * theta.cos());
        let (pu, pv, p0) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-PI..PI));
        for y in 0..height {
            let v = coord(y, height);
            for x in 0..width {
                let u = coord(x, width);
                let d2 = (u - cx).powi(2) + (v - cy).powi(2);
                let m = (-d2 / (2.0 * sigma * sigma)).exp();
                data.push(Complex64::from_polar(m, p0 + pu * u + pv * v));
            }
        }
    }
    for p in 0..n {
        let energy: f64 = (0..coils).map(|c| data[c * n + p].norm_sqr()).sum();
        let scale = 1.0 / energy.sqrt();
        for c in 0..coils {
            data[c * n + p] *= scale;
        }
    }
    CoilMaps::new(coils, height, width, data)
}

/// Adds i.i.d. complex Gaussian noise to sampled entries only.
pub fn add_noise(kspace: &KSpace, spec: &NoiseSpec) -> Result<KSpace> {
    if !(spec.sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise sigma {} must be non-negative", spec.sigma)));
    }
    if spec.sigma == 0.0 {
        return Ok(kspace.clone());
    }
    let normal = Normal::new(0.0, spec.sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let flags = kspace.mask().column_flags();
    let w = kspace.width();
    let mut data = kspace.data().to_vec();
    for row in data.chunks_exact_mut(w) {
        for (v, &keep) in row.iter_mut().zip(&flags) {
            if keep {
                v.re += normal.sample(&mut rng);
                v.im += normal.sample(&mut rng);
            }
        }
    }
    KSpace::new(kspace.coils(), kspace.height(), w, data, kspace.mask().clone())
}
