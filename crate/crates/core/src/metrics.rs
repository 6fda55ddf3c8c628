//! Full-reference metrics (PSNR on RGB and on Y, SSIM on Y) and luminance
//! histograms. Everything assumes values in `[0, 1]`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::Plane;
use crate::image::{ImageTensor, LUMA};

pub const PSNR_CAP_DB: f64 = 100.0;
const MSE_FLOOR: f64 = 1e-10;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// BT.601 Y, Cb, Cr with the chroma planes offset by 0.5.
pub fn rgb_to_ycbcr(image: &ImageTensor) -> [Plane; 3] {
    let n = image.pixel_count();
    let (mut y, mut cb, mut cr) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for px in image.data().chunks_exact(3) {
        let luma = LUMA[0] * px[0] + LUMA[1] * px[1] + LUMA[2] * px[2];
        y.push(luma);
        cb.push(0.5 + (px[2] - luma) / 1.772);
        cr.push(0.5 + (px[0] - luma) / 1.402);
    }
    let (h, w) = image.dims();
    [Plane::new(h, w, y).expect("finite"), Plane::new(h, w, cb).expect("finite"), Plane::new(h, w, cr).expect("finite")]
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse < MSE_FLOOR {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// PSNR over all channels, capped at 100 dB.
pub fn psnr(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch { expected: a.dims(), actual: b.dims() });
    }
    Ok(psnr_from_mse(mse(a.data(), b.data())))
}

pub fn psnr_plane(a: &Plane, b: &Plane) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch { expected: a.dims(), actual: b.dims() });
    }
    Ok(psnr_from_mse(mse(a.values(), b.values())))
}

/// PSNR of the BT.601 luminance planes.
pub fn psnr_y(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    psnr_plane(&a.luminance(), &b.luminance())
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let k: Vec<f64> =
        (0..SSIM_WINDOW).map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering with the normalized Gaussian window.
fn filter_valid(p: &[f64], h: usize, w: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = (0..n).map(|i| k[i] * p[r * w + c + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..n).map(|i| k[i] * rows[(r + i) * ow + c]).sum();
        }
    }
    (out, oh, ow)
}

/// Single-scale SSIM of two planes (11×11 Gaussian, σ = 1.5, valid positions).
pub fn ssim_plane(a: &Plane, b: &Plane) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch { expected: a.dims(), actual: b.dims() });
    }
    let (h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::DimensionTooSmall { height: h, width: w, min: SSIM_WINDOW });
    }
    let k = gaussian_window();
    let (x, y) = (a.values(), b.values());
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
    let (mx, _, _) = filter_valid(x, h, w, &k);
    let (my, _, _) = filter_valid(y, h, w, &k);
    let (sxx, _, _) = filter_valid(&xx, h, w, &k);
    let (syy, _, _) = filter_valid(&yy, h, w, &k);
    let (sxy, _, _) = filter_valid(&xy, h, w, &k);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = sxx[i] - ux * ux;
        let vy = syy[i] - uy * uy;
        let cov = sxy[i] - ux * uy;
        total +=
            ((2.0 * ux * uy + SSIM_C1) * (2.0 * cov + SSIM_C2)) / ((ux * ux + uy * uy + SSIM_C1) * (vx + vy + SSIM_C2));
    }
    Ok(total / mx.len() as f64)
}

/// SSIM on BT.601 luminance.
pub fn ssim(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    ssim_plane(&a.luminance(), &b.luminance())
}

/// Equal-width luminance histogram over `[0, 1]`; 1.0 lands in the last bin.
pub fn luminance_histogram(image: &ImageTensor, bins: usize) -> Result<Vec<u64>> {
    if bins < 2 {
        return Err(Error::Config("histogram needs at least 2 bins".into()));
    }
    let mut counts = vec![0u64; bins];
    for &y in image.luminance().values() {
        let idx = ((y.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub name: String,
    pub psnr_rgb: f64,
    pub psnr_y: f64,
    pub ssim: f64,
}

impl MetricRow {
    pub fn compute(name: impl Into<String>, output: &ImageTensor, reference: &ImageTensor) -> Result<Self> {
        Ok(Self {
            name: name.into(),
            psnr_rgb: psnr(output, reference)?,
            psnr_y: psnr_y(output, reference)?,
            ssim: ssim(output, reference)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub count: usize,
    pub psnr_rgb: f64,
    pub psnr_y: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    pub fn push(&mut self, row: MetricRow) {
        self.rows.push(row);
    }

    pub fn summary(&self) -> MetricSummary {
        let n = self.rows.len().max(1) as f64;
        MetricSummary {
            count: self.rows.len(),
            psnr_rgb: self.rows.iter().map(|r| r.psnr_rgb).sum::<f64>() / n,
            psnr_y: self.rows.iter().map(|r| r.psnr_y).sum::<f64>() / n,
            ssim: self.rows.iter().map(|r| r.ssim).sum::<f64>() / n,
        }
    }

    /// One JSON object per row, then `{"aggregate": {...}}`.
    pub fn write_jsonl(&self, mut out: impl Write) -> Result<()> {
        for row in &self.rows {
            serde_json::to_writer(&mut out, row)?;
            out.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut out, &serde_json::json!({ "aggregate": self.summary() }))?;
        out.write_all(b"\n")?;
        Ok(())
    }
}
