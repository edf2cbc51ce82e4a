//! Image quality metrics on magnitude images and their interquartile summary.

mod report;

pub use report::{aggregate, metrics_csv, percentile, AggregateReport, MethodReport, SliceMetrics, Summary};

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::physics::ComplexImage;

fn same_shape(a: &ComplexImage, b: &ComplexImage) -> Result<()> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(Error::Shape(format!("{}×{} vs {}×{}", a.height(), a.width(), b.height(), b.width())));
    }
    Ok(())
}

fn peak(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

/// `20·log10(max|ref| / RMSE(|ref|, |rec|))`; `+∞` when the magnitudes agree.
pub fn psnr(reference: &ComplexImage, recon: &ComplexImage) -> Result<f64> {
    same_shape(reference, recon)?;
    let a = reference.magnitude();
    let b = recon.magnitude();
    let max = peak(&a);
    if max == 0.0 {
        return Err(Error::InvalidArgument("reference image is zero".into()));
    }
    let mse = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (max / mse.sqrt()).log10())
}

/// Structural similarity settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimOptions {
    /// Odd Gaussian window side.
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Use `L = max(max|a|, max|b|)` so that swapping the inputs is exact.
    pub symmetric: bool,
}

impl Default for SsimOptions {
    fn default() -> Self {
        Self { window: 11, sigma: 1.5, k1: 0.01, k2: 0.03, symmetric: false }
    }
}

/// Mean SSIM of the magnitudes with default options (`L = max|ref|`).
pub fn ssim(reference: &ComplexImage, recon: &ComplexImage) -> Result<f64> {
    ssim_with(reference, recon, &SsimOptions::default())
}

fn gaussian_window(n: usize, sigma: f64) -> Vec<f64> {
    let c = (n / 2) as f64;
    let w: Vec<f64> = (0..n).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering of an `h × w` image.
fn filter_valid(img: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = k.iter().enumerate().map(|(i, kv)| kv * img[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, kv)| kv * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

pub fn ssim_with(reference: &ComplexImage, recon: &ComplexImage, opts: &SsimOptions) -> Result<f64> {
    same_shape(reference, recon)?;
    let (h, w) = (reference.height(), reference.width());
    if opts.window % 2 == 0 || opts.window > h || opts.window > w {
        return Err(Error::InvalidArgument(format!("window {} does not fit a {h}×{w} image", opts.window)));
    }
    let a = reference.magnitude();
    let b = recon.magnitude();
    let range = if opts.symmetric { peak(&a).max(peak(&b)) } else { peak(&a) };
    if range == 0.0 {
        return Err(Error::InvalidArgument("reference image is zero".into()));
    }
    let c1 = (opts.k1 * range).powi(2);
    let c2 = (opts.k2 * range).powi(2);
    let k = gaussian_window(opts.window, opts.sigma);
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mu_a = filter_valid(&a, h, w, &k);
    let mu_b = filter_valid(&b, h, w, &k);
    let e_aa = filter_valid(&prod(&a, &a), h, w, &k);
    let e_bb = filter_valid(&prod(&b, &b), h, w, &k);
    let e_ab = filter_valid(&prod(&a, &b), h, w, &k);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let saa = e_aa[i] - ma * ma;
        let sbb = e_bb[i] - mb * mb;
        let sab = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * sab + c2)) / ((ma * ma + mb * mb + c1) * (saa + sbb + c2));
    }
    Ok(total / n as f64)
}

/// Binary 16-bit PGM of `|image|`, scaled so the peak maps to 65535.
pub fn pgm_bytes(image: &ComplexImage) -> Vec<u8> {
    let mag = image.magnitude();
    let max = peak(&mag);
    let mut out = format!("P5\n{} {}\n65535\n", image.width(), image.height()).into_bytes();
    for m in mag {
        let v = if max > 0.0 { (m / max * 65535.0).round() as u16 } else { 0 };
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn write_pgm(path: &Path, image: &ComplexImage) -> Result<()> {
    fs::write(path, pgm_bytes(image)).map_err(|e| Error::io(path, e))
}
