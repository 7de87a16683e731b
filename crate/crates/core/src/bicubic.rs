//! Bicubic upscaling by separable cubic convolution (kernel parameter
//! a = -0.5), aligned so that HR pixel `(l*r, l*c)` reproduces LR pixel
//! `(r, c)` exactly. Borders replicate the edge sample.

use crate::error::{Error, Result};
use crate::image::Image;

/// Keys cubic convolution kernel with a = -0.5.
fn cubic_kernel(s: f64) -> f64 {
    const A: f64 = -0.5;
    let s = s.abs();
    if s <= 1.0 {
        ((A + 2.0) * s - (A + 3.0)) * s * s + 1.0
    } else if s < 2.0 {
        A * (s * s * s - 5.0 * s * s + 8.0 * s - 4.0)
    } else {
        0.0
    }
}

/// Four-tap weights for each sub-pixel phase `k/factor`.
fn phase_weights(factor: usize) -> Vec<[f64; 4]> {
    (0..factor)
        .map(|k| {
            let t = k as f64 / factor as f64;
            // samples at offsets -1, 0, 1, 2 from the base LR index
            [
                cubic_kernel(t + 1.0),
                cubic_kernel(t),
                cubic_kernel(1.0 - t),
                cubic_kernel(2.0 - t),
            ]
        })
        .collect()
}

/// Upscales one axis of a row-major buffer by `factor`.
fn upscale_axis_rows(src: &[f64], height: usize, width: usize, factor: usize) -> Vec<f64> {
    // interpolates along columns: output has height*factor rows
    let weights = phase_weights(factor);
    let out_h = height * factor;
    let mut out = vec![0.0; out_h * width];
    for out_r in 0..out_h {
        let base = out_r / factor;
        let w = &weights[out_r % factor];
        let taps = [
            base.saturating_sub(1),
            base,
            (base + 1).min(height - 1),
            (base + 2).min(height - 1),
        ];
        let dst = out_r * width;
        for c in 0..width {
            out[dst + c] = w[0] * src[taps[0] * width + c]
                + w[1] * src[taps[1] * width + c]
                + w[2] * src[taps[2] * width + c]
                + w[3] * src[taps[3] * width + c];
        }
    }
    out
}

fn upscale_axis_cols(src: &[f64], height: usize, width: usize, factor: usize) -> Vec<f64> {
    let weights = phase_weights(factor);
    let out_w = width * factor;
    let mut out = vec![0.0; height * out_w];
    for r in 0..height {
        let src_row = &src[r * width..(r + 1) * width];
        let dst = r * out_w;
        for out_c in 0..out_w {
            let base = out_c / factor;
            let w = &weights[out_c % factor];
            let taps = [
                base.saturating_sub(1),
                base,
                (base + 1).min(width - 1),
                (base + 2).min(width - 1),
            ];
            out[dst + out_c] = w[0] * src_row[taps[0]]
                + w[1] * src_row[taps[1]]
                + w[2] * src_row[taps[2]]
                + w[3] * src_row[taps[3]];
        }
    }
    out
}

/// Two-pass separable bicubic upscale by an integer factor of 2 or 3.
///
/// On-grid pixels are exact copies of the input, so down-sampling the
/// result recovers the input bit-for-bit.
pub fn bicubic_upscale(lr: &Image, factor: usize) -> Result<Image> {
    if !(2..=3).contains(&factor) {
        return Err(Error::InvalidConfig(format!(
            "bicubic upscale factor must be 2 or 3, got {factor}"
        )));
    }
    let (h, w) = lr.dims();
    let rows_done = upscale_axis_rows(lr.as_slice(), h, w, factor);
    let full = upscale_axis_cols(&rows_done, h * factor, w, factor);
    Image::from_vec(h * factor, w * factor, full)
}
