use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Metrics of one reconstructed slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceMetrics {
    pub slice: usize,
    pub method: String,
    pub ssim: f64,
    /// `+∞` for an exact reconstruction.
    pub psnr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub n: usize,
    pub ssim: Summary,
    pub psnr: Summary,
}

/// Per-method medians and quartiles, methods in order of first appearance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub methods: Vec<MethodReport>,
}

/// Percentile `q ∈ [0, 1]` of ascending `sorted` by linear interpolation
/// between closest ranks.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty list");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let (a, b) = (sorted[lo], sorted[hi]);
    if lo == hi || a == b {
        return a;
    }
    a + (pos - lo as f64) * (b - a)
}

fn summarize(mut values: Vec<f64>) -> Summary {
    values.sort_by(f64::total_cmp);
    Summary { median: percentile(&values, 0.5), p25: percentile(&values, 0.25), p75: percentile(&values, 0.75) }
}

pub fn aggregate(metrics: &[SliceMetrics]) -> Result<AggregateReport> {
    if metrics.is_empty() {
        return Err(Error::InvalidArgument("no metrics to aggregate".into()));
    }
    let mut order: Vec<&str> = Vec::new();
    for m in metrics {
        if !order.contains(&m.method.as_str()) {
            order.push(&m.method);
        }
    }
    let methods = order
        .into_iter()
        .map(|name| {
            let mut rows: Vec<&SliceMetrics> = metrics.iter().filter(|m| m.method == name).collect();
            rows.sort_by_key(|m| m.slice);
            MethodReport {
                method: name.to_string(),
                n: rows.len(),
                ssim: summarize(rows.iter().map(|m| m.ssim).collect()),
                psnr: summarize(rows.iter().map(|m| m.psnr).collect()),
            }
        })
        .collect();
    Ok(AggregateReport { methods })
}

fn num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.6}")
    }
}

fn cell(s: &Summary) -> String {
    let f = |v: f64| if v.is_infinite() { num(v) } else { format!("{v:.3}") };
    format!("{} [{}, {}]", f(s.median), f(s.p25), f(s.p75))
}

impl AggregateReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,n,ssim_median,ssim_p25,ssim_p75,psnr_median,psnr_p25,psnr_p75\n");
        for m in &self.methods {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                m.method,
                m.n,
                num(m.ssim.median),
                num(m.ssim.p25),
                num(m.ssim.p75),
                num(m.psnr.median),
                num(m.psnr.p25),
                num(m.psnr.p75)
            );
        }
        out
    }

    /// Fixed-width table with `median [p25, p75]` cells.
    pub fn to_table(&self) -> String {
        let name_w = self.methods.iter().map(|m| m.method.len()).max().unwrap_or(0).max("Method".len());
        let cells: Vec<(String, String)> = self.methods.iter().map(|m| (cell(&m.ssim), cell(&m.psnr))).collect();
        let ssim_w = cells.iter().map(|c| c.0.len()).max().unwrap_or(0).max("SSIM".len());
        let mut out = String::new();
        let _ = writeln!(out, "{:<name_w$}  {:<ssim_w$}  PSNR (dB)", "Method", "SSIM");
        for (m, (s, p)) in self.methods.iter().zip(&cells) {
            let _ = writeln!(out, "{:<name_w$}  {:<ssim_w$}  {}", m.method, s, p);
        }
        out
    }
}

/// Per-slice CSV (`slice_id,method,ssim,psnr`), sorted by method then slice.
pub fn metrics_csv(metrics: &[SliceMetrics]) -> String {
    let mut rows: Vec<&SliceMetrics> = metrics.iter().collect();
    rows.sort_by(|a, b| a.method.cmp(&b.method).then(a.slice.cmp(&b.slice)));
    let mut out = String::from("slice_id,method,ssim,psnr\n");
    for m in rows {
        let _ = writeln!(out, "{},{},{},{}", m.slice, m.method, num(m.ssim), num(m.psnr));
    }
    out
}
