//! Grayscale image representation and the direct down-sampling operator.
//!
//! Images hold luminance samples in `[0, 1]`, stored row-major. The
//! down-sampling operator keeps every `l`-th pixel starting at the origin,
//! so each low-resolution pixel equals exactly one high-resolution pixel.

use crate::error::{Error, Result};

/// A 2-D grayscale image with row-major `f64` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    /// Creates an image from row-major samples. All samples must be finite.
    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::LengthMismatch {
                context: "Image::from_vec",
                expected: height * width,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Image::from_vec"));
        }
        Ok(Self { height, width, data })
    }

    /// Creates an image filled with a constant value.
    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    /// Converts 8-bit samples to luminance in `[0, 1]` (divide by 255).
    pub fn from_bytes(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != height * width {
            return Err(Error::LengthMismatch {
                context: "Image::from_bytes",
                expected: height * width,
                got: bytes.len(),
            });
        }
        let data = bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
        Ok(Self { height, width, data })
    }

    /// Quantizes to 8-bit with round-half-up, clamping to `[0, 1]` first.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8)
            .collect()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.height && col < self.width);
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.height && col < self.width);
        self.data[row * self.width + col] = value;
    }

    /// Clamps all samples into `[0, 1]`, returning how many were moved.
    pub fn clamp_unit(&mut self) -> usize {
        let mut moved = 0;
        for v in &mut self.data {
            let c = v.clamp(0.0, 1.0);
            if c != *v {
                *v = c;
                moved += 1;
            }
        }
        moved
    }

    /// Central crop to `(height, width)`.
    pub fn center_crop(&self, height: usize, width: usize) -> Result<Image> {
        if height > self.height || width > self.width || height == 0 || width == 0 {
            return Err(Error::DimensionMismatch {
                context: "center_crop",
                expected_h: height,
                expected_w: width,
                got_h: self.height,
                got_w: self.width,
            });
        }
        let top = (self.height - height) / 2;
        let left = (self.width - width) / 2;
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            let start = (top + r) * self.width + left;
            data.extend_from_slice(&self.data[start..start + width]);
        }
        Ok(Image {
            height,
            width,
            data,
        })
    }
}

/// Direct down-sampling: keep pixel `(l*r, l*c)` of the high-resolution grid.
///
/// The operator is a selection matrix, so composing it with its adjoint is
/// the identity on low-resolution images.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DownsampleOp {
    factor: usize,
    hr_height: usize,
    hr_width: usize,
}

impl DownsampleOp {
    /// Builds the operator for the given scale factor and high-resolution
    /// dimensions. Dimensions that are not multiples of the factor are
    /// rejected, naming the offending axis.
    pub fn new(factor: usize, hr_dims: (usize, usize)) -> Result<Self> {
        if !(2..=3).contains(&factor) {
            return Err(Error::InvalidConfig(format!(
                "down-sampling factor must be 2 or 3, got {factor}"
            )));
        }
        let (h, w) = hr_dims;
        if h % factor != 0 {
            return Err(Error::NotDivisible {
                axis: "height",
                extent: h,
                factor,
            });
        }
        if w % factor != 0 {
            return Err(Error::NotDivisible {
                axis: "width",
                extent: w,
                factor,
            });
        }
        Ok(Self {
            factor,
            hr_height: h,
            hr_width: w,
        })
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn hr_dims(&self) -> (usize, usize) {
        (self.hr_height, self.hr_width)
    }

    pub fn lr_dims(&self) -> (usize, usize) {
        (self.hr_height / self.factor, self.hr_width / self.factor)
    }

    /// Applies `D`: selects every `factor`-th pixel starting at `(0, 0)`.
    pub fn downsample(&self, img: &Image) -> Result<Image> {
        if img.dims() != self.hr_dims() {
            return Err(self.dim_error("downsample", img.dims()));
        }
        let (lh, lw) = self.lr_dims();
        let mut data = vec![0.0; lh * lw];
        self.downsample_slice(img.as_slice(), &mut data);
        Ok(Image {
            height: lh,
            width: lw,
            data,
        })
    }

    /// Applies `D^T`: scatters low-resolution pixels onto the coarse grid,
    /// leaving every other high-resolution pixel zero.
    pub fn adjoint(&self, lr: &Image) -> Result<Image> {
        if lr.dims() != self.lr_dims() {
            let (eh, ew) = self.lr_dims();
            return Err(Error::DimensionMismatch {
                context: "DownsampleOp::adjoint",
                expected_h: eh,
                expected_w: ew,
                got_h: lr.height,
                got_w: lr.width,
            });
        }
        let mut data = vec![0.0; self.hr_height * self.hr_width];
        self.adjoint_slice(lr.as_slice(), &mut data);
        Ok(Image {
            height: self.hr_height,
            width: self.hr_width,
            data,
        })
    }

    /// Slice-level `D` for solver hot paths; `out` must have LR length.
    pub fn downsample_slice(&self, hr: &[f64], out: &mut [f64]) {
        let (lh, lw) = self.lr_dims();
        debug_assert_eq!(hr.len(), self.hr_height * self.hr_width);
        debug_assert_eq!(out.len(), lh * lw);
        for r in 0..lh {
            let src = r * self.factor * self.hr_width;
            let dst = r * lw;
            for c in 0..lw {
                out[dst + c] = hr[src + c * self.factor];
            }
        }
    }

    /// Slice-level `D^T`; zero-fills `out` (HR length) then scatters.
    pub fn adjoint_slice(&self, lr: &[f64], out: &mut [f64]) {
        let (lh, lw) = self.lr_dims();
        debug_assert_eq!(lr.len(), lh * lw);
        debug_assert_eq!(out.len(), self.hr_height * self.hr_width);
        out.fill(0.0);
        for r in 0..lh {
            let dst = r * self.factor * self.hr_width;
            let src = r * lw;
            for c in 0..lw {
                out[dst + c * self.factor] = lr[src + c];
            }
        }
    }

    /// Adds `value * D^T D v` into `out` without materializing intermediates:
    /// scales `v` on the retained grid positions only.
    pub fn add_scaled_dtd(&self, v: &[f64], value: f64, out: &mut [f64]) {
        let (lh, lw) = self.lr_dims();
        for r in 0..lh {
            let base = r * self.factor * self.hr_width;
            for c in 0..lw {
                let idx = base + c * self.factor;
                out[idx] += value * v[idx];
            }
        }
    }

    fn dim_error(&self, context: &'static str, got: (usize, usize)) -> Error {
        Error::DimensionMismatch {
            context,
            expected_h: self.hr_height,
            expected_w: self.hr_width,
            got_h: got.0,
            got_w: got.1,
        }
    }
}
