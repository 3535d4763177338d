//! PSNR and SSIM against a reference image.
//!
//! Two-channel (complex) fields are compared by magnitude. The peak used for
//! PSNR and the SSIM dynamic range both come from the reference.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::field::Field;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Real-valued view: magnitude for two channels, the field itself otherwise.
fn real_view(x: &Field) -> Field {
    if x.channels() == 2 {
        x.magnitude()
    } else {
        x.clone()
    }
}

fn prepare(x: &Field, reference: &Field) -> Result<(Field, Field, f64)> {
    if x.shape() != reference.shape() {
        return Err(Error::ShapeMismatch(x.shape(), reference.shape()));
    }
    let (x, r) = (real_view(x), real_view(reference));
    let peak = r.max_abs();
    if peak == 0.0 {
        return Err(Error::InvalidArgument("reference is all zero; peak undefined".into()));
    }
    Ok((x, r, peak))
}

/// `10 log10(peak^2 / MSE)` with `peak = max |ref|`; `+inf` when the images are identical.
pub fn psnr(x: &Field, reference: &Field) -> Result<f64> {
    let (x, r, peak) = prepare(x, reference)?;
    let mse = x.sub(&r)?.norm_sq() / x.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..size).map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering of a single-channel image stored row-major.
fn filter_valid(img: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let n = taps.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = taps.iter().enumerate().map(|(k, t)| t * img[r * w + c + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = taps.iter().enumerate().map(|(k, t)| t * rows[(r + k) * ow + c]).sum();
        }
    }
    out
}

/// Mean local SSIM over all fully contained 11x11 Gaussian windows (std 1.5).
pub fn ssim(x: &Field, reference: &Field) -> Result<f64> {
    let (x, r, peak) = prepare(x, reference)?;
    let (h, w) = (x.height(), x.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidShape(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let taps = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    let (a, b) = (x.data(), r.data());
    let prod = |f: fn(f64, f64) -> f64| a.iter().zip(b).map(|(&p, &q)| f(p, q)).collect::<Vec<_>>();
    let mx = filter_valid(a, h, w, &taps);
    let my = filter_valid(b, h, w, &taps);
    let sxx = filter_valid(&prod(|p, _| p * p), h, w, &taps);
    let syy = filter_valid(&prod(|_, q| q * q), h, w, &taps);
    let sxy = filter_valid(&prod(|p, q| p * q), h, w, &taps);
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cxy = sxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageMetrics {
    pub name: String,
    pub psnr_db: f64,
    pub ssim: f64,
}

impl ImageMetrics {
    pub fn compute(name: impl Into<String>, x: &Field, reference: &Field) -> Result<Self> {
        Ok(Self { name: name.into(), psnr_db: psnr(x, reference)?, ssim: ssim(x, reference)? })
    }
}

/// Per-image metrics plus their aggregate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub images: Vec<ImageMetrics>,
}

fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.clone().sum::<f64>() / n as f64;
    let var = if n > 1 { v.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    (mean, var.sqrt())
}

/// Fixed-precision text for CSV; `+inf` serializes as `inf`.
pub fn format_metric(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

impl MetricReport {
    pub fn push(&mut self, m: ImageMetrics) {
        self.images.push(m);
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Mean and sample standard deviation of PSNR.
    pub fn psnr_stats(&self) -> (f64, f64) {
        mean_std(self.images.iter().map(|m| m.psnr_db))
    }

    pub fn ssim_stats(&self) -> (f64, f64) {
        mean_std(self.images.iter().map(|m| m.ssim))
    }

    /// `filename,psnr_db,ssim` with a header row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("filename,psnr_db,ssim\n");
        for m in &self.images {
            let _ = writeln!(s, "{},{},{}", m.name, format_metric(m.psnr_db), format_metric(m.ssim));
        }
        s
    }
}
