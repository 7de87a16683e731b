//! Full-reference quality metrics: PSNR and single-scale SSIM.

use crate::error::{Error, Result};
use crate::image::Image;

/// SSIM window side length.
const SSIM_WINDOW: usize = 11;
/// SSIM Gaussian window sigma.
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// PSNR in dB plus mean SSIM for an image pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityScore {
    /// Peak signal-to-noise ratio in dB; infinite for identical images.
    pub psnr: f64,
    /// Mean structural similarity in `[-1, 1]`.
    pub ssim: f64,
}

fn check_dims(a: &Image, b: &Image, context: &'static str) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            context,
            expected_h: a.height(),
            expected_w: a.width(),
            got_h: b.height(),
            got_w: b.width(),
        });
    }
    Ok(())
}

/// Peak signal-to-noise ratio `10 log10(peak^2 / MSE)` over all pixels.
/// Identical images report `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    check_dims(a, b, "psnr")?;
    let n = a.as_slice().len() as f64;
    let mse: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as i64;
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for r in -half..=half {
        for c in -half..=half {
            let d2 = (r * r + c * c) as f64;
            w.push((-d2 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Mean single-scale SSIM with the canonical parameters: 11x11 Gaussian
/// window (sigma 1.5), K1 = 0.01, K2 = 0.03, dynamic range 1.0. Averaged
/// over all fully-interior window positions.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b, "ssim")?;
    let (h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidConfig(format!(
            "ssim needs images at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let window = gaussian_window();
    let c1 = (SSIM_K1 * 1.0) * (SSIM_K1 * 1.0);
    let c2 = (SSIM_K2 * 1.0) * (SSIM_K2 * 1.0);
    let xa = a.as_slice();
    let xb = b.as_slice();

    let mut total = 0.0;
    let mut count = 0usize;
    for top in 0..=(h - SSIM_WINDOW) {
        for left in 0..=(w - SSIM_WINDOW) {
            let mut mu_a = 0.0;
            let mut mu_b = 0.0;
            let mut aa = 0.0;
            let mut bb = 0.0;
            let mut ab = 0.0;
            let mut k = 0;
            for dr in 0..SSIM_WINDOW {
                let row = (top + dr) * w + left;
                for dc in 0..SSIM_WINDOW {
                    let g = window[k];
                    k += 1;
                    let va = xa[row + dc];
                    let vb = xb[row + dc];
                    mu_a += g * va;
                    mu_b += g * vb;
                    aa += g * va * va;
                    bb += g * vb * vb;
                    ab += g * va * vb;
                }
            }
            let var_a = aa - mu_a * mu_a;
            let var_b = bb - mu_b * mu_b;
            let cov = ab - mu_a * mu_b;
            let s = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            total += s;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Convenience wrapper computing both metrics at peak 1.0.
pub fn evaluate(a: &Image, b: &Image) -> Result<QualityScore> {
    Ok(QualityScore {
        psnr: psnr(a, b, 1.0)?,
        ssim: ssim(a, b)?,
    })
}
