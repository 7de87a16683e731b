//! Patch extraction geometry: the `R_i` operators and their adjoint
//! aggregation.
//!
//! Patch origins cover the image on a stride grid; origins near the right
//! and bottom borders are clamped so every patch lies fully inside the
//! image and every pixel is covered by at least one patch.

use crate::error::{Error, Result};
use crate::image::Image;

/// Square-patch extraction grid over a fixed image size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchSystem {
    patch_size: usize,
    stride: usize,
    height: usize,
    width: usize,
    row_origins: Vec<usize>,
    col_origins: Vec<usize>,
}

fn origins_for_axis(extent: usize, patch: usize, stride: usize) -> Vec<usize> {
    let last = extent - patch;
    let mut v: Vec<usize> = (0..=last).step_by(stride).collect();
    if *v.last().unwrap() != last {
        v.push(last); // clamp the final origin to keep the border covered
    }
    v
}

impl PatchSystem {
    pub fn new(dims: (usize, usize), patch_size: usize, stride: usize) -> Result<Self> {
        let (height, width) = dims;
        if patch_size == 0 || patch_size > height || patch_size > width {
            return Err(Error::InvalidConfig(format!(
                "patch size {patch_size} does not fit a {height}x{width} image"
            )));
        }
        if stride == 0 || stride > patch_size {
            return Err(Error::InvalidConfig(format!(
                "stride {stride} must be in 1..={patch_size} to keep full coverage"
            )));
        }
        Ok(Self {
            patch_size,
            stride,
            height,
            width,
            row_origins: origins_for_axis(height, patch_size, stride),
            col_origins: origins_for_axis(width, patch_size, stride),
        })
    }

    /// Maximally overlapped grid (stride 1); the default everywhere.
    pub fn dense(dims: (usize, usize), patch_size: usize) -> Result<Self> {
        Self::new(dims, patch_size, 1)
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn patch_len(&self) -> usize {
        self.patch_size * self.patch_size
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn image_dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Number of patches K.
    pub fn len(&self) -> usize {
        self.row_origins.len() * self.col_origins.len()
    }

    pub fn is_empty(&self) -> bool {
        false // a valid system always has at least one patch
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        (self.row_origins.len(), self.col_origins.len())
    }

    /// Top-left coordinate of patch `i`, row-major over the origin grid.
    pub fn origin(&self, i: usize) -> Result<(usize, usize)> {
        if i >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.len(),
            });
        }
        let ncols = self.col_origins.len();
        Ok((self.row_origins[i / ncols], self.col_origins[i % ncols]))
    }

    /// Center pixel of patch `i` (patch size must be odd for a true center).
    pub fn center(&self, i: usize) -> Result<(usize, usize)> {
        let (r, c) = self.origin(i)?;
        let half = self.patch_size / 2;
        Ok((r + half, c + half))
    }

    /// Patch index whose origin is exactly `(row, col)`, if on the grid.
    pub fn index_of_origin(&self, row: usize, col: usize) -> Option<usize> {
        let ri = self.row_origins.binary_search(&row).ok()?;
        let ci = self.col_origins.binary_search(&col).ok()?;
        Some(ri * self.col_origins.len() + ci)
    }

    /// Extracts patch `i` as a row-major `p*p` vector.
    pub fn extract(&self, img: &Image, i: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.patch_len()];
        self.extract_into(img.as_slice(), i, &mut out)?;
        Ok(out)
    }

    /// Extracts patch `i` into a caller-provided buffer (row-major order).
    pub fn extract_into(&self, img: &[f64], i: usize, out: &mut [f64]) -> Result<()> {
        let (r0, c0) = self.origin(i)?;
        debug_assert_eq!(img.len(), self.height * self.width);
        debug_assert_eq!(out.len(), self.patch_len());
        for dr in 0..self.patch_size {
            let src = (r0 + dr) * self.width + c0;
            let dst = dr * self.patch_size;
            out[dst..dst + self.patch_size].copy_from_slice(&img[src..src + self.patch_size]);
        }
        Ok(())
    }

    /// Adds patch vector `v` back at patch `i`'s window (`R_i^T v`).
    pub fn place_add(&self, buf: &mut [f64], i: usize, v: &[f64]) -> Result<()> {
        if v.len() != self.patch_len() {
            return Err(Error::LengthMismatch {
                context: "PatchSystem::place_add",
                expected: self.patch_len(),
                got: v.len(),
            });
        }
        let (r0, c0) = self.origin(i)?;
        for dr in 0..self.patch_size {
            let dst = (r0 + dr) * self.width + c0;
            let src = dr * self.patch_size;
            for dc in 0..self.patch_size {
                buf[dst + dc] += v[src + dc];
            }
        }
        Ok(())
    }

    /// Iterates `(patch_index, origin)` for all origins inside the inclusive
    /// rectangle, in raster order.
    pub fn origins_in_rect(
        &self,
        r_lo: usize,
        r_hi: usize,
        c_lo: usize,
        c_hi: usize,
    ) -> impl Iterator<Item = (usize, (usize, usize))> + '_ {
        let ncols = self.col_origins.len();
        let r_start = self.row_origins.partition_point(|&o| o < r_lo);
        let r_end = self.row_origins.partition_point(|&o| o <= r_hi);
        let c_start = self.col_origins.partition_point(|&o| o < c_lo);
        let c_end = self.col_origins.partition_point(|&o| o <= c_hi);
        (r_start..r_end).flat_map(move |ri| {
            (c_start..c_end).map(move |ci| {
                (
                    ri * ncols + ci,
                    (self.row_origins[ri], self.col_origins[ci]),
                )
            })
        })
    }

    /// Index ranges of row/col origins whose patches cover pixel `(r, c)`.
    fn covering_ranges(&self, r: usize, c: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let lo_r = r.saturating_sub(self.patch_size - 1);
        let lo_c = c.saturating_sub(self.patch_size - 1);
        let r_start = self.row_origins.partition_point(|&o| o < lo_r);
        let r_end = self.row_origins.partition_point(|&o| o <= r);
        let c_start = self.col_origins.partition_point(|&o| o < lo_c);
        let c_end = self.col_origins.partition_point(|&o| o <= c);
        (r_start..r_end, c_start..c_end)
    }

    /// Per-pixel overlap multiplicity: the diagonal of `sum_i R_i^T R_i`.
    pub fn counts(&self) -> Image {
        let mut data = vec![0.0; self.height * self.width];
        for r in 0..self.height {
            for c in 0..self.width {
                let (rr, cr) = self.covering_ranges(r, c);
                data[r * self.width + c] = (rr.len() * cr.len()) as f64;
            }
        }
        Image::from_vec(self.height, self.width, data).expect("counts are finite")
    }

    /// Sums `R_i^T patches[i]` over all patches, returning the accumulated
    /// image and the per-pixel overlap counts.
    ///
    /// Contributions are gathered per output pixel in ascending patch order,
    /// so the result is bit-deterministic however the caller parallelizes.
    pub fn aggregate(&self, patches: &[Vec<f64>]) -> Result<(Image, Image)> {
        if patches.len() != self.len() {
            return Err(Error::LengthMismatch {
                context: "PatchSystem::aggregate",
                expected: self.len(),
                got: patches.len(),
            });
        }
        for p in patches {
            if p.len() != self.patch_len() {
                return Err(Error::LengthMismatch {
                    context: "PatchSystem::aggregate patch",
                    expected: self.patch_len(),
                    got: p.len(),
                });
            }
        }
        let mut sum = vec![0.0; self.height * self.width];
        self.aggregate_into(|i, k| patches[i][k], &mut sum);
        let sum = Image::from_vec(self.height, self.width, sum)?;
        Ok((sum, self.counts()))
    }

    /// Gather-style aggregation kernel: `value(i, k)` supplies element `k`
    /// of patch `i`'s contribution. Writes the sum image into `out`.
    pub fn aggregate_into(&self, value: impl Fn(usize, usize) -> f64 + Sync, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.height * self.width);
        let ncols = self.col_origins.len();
        let width = self.width;
        let p = self.patch_size;
        let fill_row = |r: usize, row_out: &mut [f64]| {
            for c in 0..width {
                let (rr, cr) = self.covering_ranges(r, c);
                let mut acc = 0.0;
                for ri in rr.clone() {
                    let or = self.row_origins[ri];
                    for ci in cr.clone() {
                        let oc = self.col_origins[ci];
                        let i = ri * ncols + ci;
                        acc += value(i, (r - or) * p + (c - oc));
                    }
                }
                row_out[c] = acc;
            }
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            out.par_chunks_mut(width)
                .enumerate()
                .for_each(|(r, row_out)| fill_row(r, row_out));
        }
        #[cfg(not(feature = "parallel"))]
        for (r, row_out) in out.chunks_mut(width).enumerate() {
            fill_row(r, row_out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_origins_cover_six_by_six() {
        let sys = PatchSystem::dense((6, 6), 5).unwrap();
        assert_eq!(sys.len(), 4);
        let origins: Vec<_> = (0..4).map(|i| sys.origin(i).unwrap()).collect();
        assert_eq!(origins, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    }

    #[test]
    fn clamped_origin_added_when_stride_overshoots() {
        let sys = PatchSystem::new((10, 10), 5, 3).unwrap();
        // rows 0, 3 then clamp to 5
        assert_eq!(sys.grid_dims(), (3, 3));
        assert_eq!(sys.origin(2).unwrap(), (0, 5));
    }

    #[test]
    fn extract_constant_patch() {
        let img = Image::filled(5, 5, 7.0);
        let sys = PatchSystem::dense((5, 5), 5).unwrap();
        let v = sys.extract(&img, 0).unwrap();
        assert_eq!(v, vec![7.0; 25]);
    }

    #[test]
    fn extract_then_place_reproduces_window() {
        let mut data = Vec::new();
        for i in 0..36 {
            data.push(i as f64 / 36.0);
        }
        let img = Image::from_vec(6, 6, data).unwrap();
        let sys = PatchSystem::dense((6, 6), 5).unwrap();
        for i in 0..sys.len() {
            let v = sys.extract(&img, i).unwrap();
            let mut buf = vec![0.0; 36];
            sys.place_add(&mut buf, i, &v).unwrap();
            let (r0, c0) = sys.origin(i).unwrap();
            for dr in 0..5 {
                for dc in 0..5 {
                    assert_eq!(buf[(r0 + dr) * 6 + c0 + dc], img.get(r0 + dr, c0 + dc));
                }
            }
        }
    }

    #[test]
    fn extract_rejects_bad_index() {
        let img = Image::filled(5, 5, 0.0);
        let sys = PatchSystem::dense((5, 5), 5).unwrap();
        assert!(sys.extract(&img, 1).is_err());
    }

    #[test]
    fn aggregate_single_full_patch() {
        let sys = PatchSystem::dense((3, 3), 3).unwrap();
        let patch = vec![0.5; 9];
        let (sum, counts) = sys.aggregate(&[patch.clone()]).unwrap();
        assert_eq!(sum.as_slice(), &patch[..]);
        assert!(counts.as_slice().iter().all(|&c| c == 1.0));
    }

    #[test]
    fn aggregate_overlapping_identical_patches() {
        // stride 3 on a 3-wide, 6-tall image with p=3 gives two stacked
        // patches; widen to overlap instead:
        let sys = PatchSystem::new((3, 4), 3, 1).unwrap();
        assert_eq!(sys.len(), 2);
        let a = vec![1.0; 9];
        let (sum, counts) = sys.aggregate(&[a.clone(), a]).unwrap();
        // middle columns are covered twice
        for r in 0..3 {
            assert_eq!(counts.get(r, 0), 1.0);
            assert_eq!(counts.get(r, 1), 2.0);
            assert_eq!(counts.get(r, 2), 2.0);
            assert_eq!(counts.get(r, 3), 1.0);
            assert_eq!(sum.get(r, 1), 2.0);
        }
    }

    #[test]
    fn partition_of_unity_identity_exact_on_dyadic_samples() {
        // Small integer multiples of k/256 are exact in f64, so the
        // sum-then-divide reconstruction must be bit-exact here.
        let mut data = Vec::new();
        for i in 0..(9 * 8) {
            data.push(((i * 37) % 256) as f64 / 256.0);
        }
        let img = Image::from_vec(9, 8, data).unwrap();
        let sys = PatchSystem::dense((9, 8), 5).unwrap();
        let patches: Vec<Vec<f64>> = (0..sys.len()).map(|i| sys.extract(&img, i).unwrap()).collect();
        let (sum, counts) = sys.aggregate(&patches).unwrap();
        for (idx, (&s, &c)) in sum.as_slice().iter().zip(counts.as_slice()).enumerate() {
            assert_eq!(s / c, img.as_slice()[idx], "pixel {idx}");
        }
    }

    #[test]
    fn coverage_counts_at_least_one_everywhere() {
        for (dims, p, stride) in [((7, 11), 3, 2), ((16, 9), 5, 5), ((6, 6), 5, 4)] {
            let sys = PatchSystem::new(dims, p, stride).unwrap();
            let counts = sys.counts();
            assert!(counts.as_slice().iter().all(|&c| c >= 1.0), "{dims:?} p={p} s={stride}");
        }
    }

    #[test]
    fn extract_place_adjoint_identity() {
        // <extract(x, i), v> == <x, place(v, i)> exactly: both sides sum the
        // same products.
        let mut data = Vec::new();
        for i in 0..64 {
            data.push(((i * 29) % 256) as f64 / 256.0);
        }
        let img = Image::from_vec(8, 8, data).unwrap();
        let sys = PatchSystem::dense((8, 8), 3).unwrap();
        let v: Vec<f64> = (0..9).map(|k| (k as f64 - 4.0) / 8.0).collect();
        for i in [0usize, 7, sys.len() - 1] {
            let x_i = sys.extract(&img, i).unwrap();
            let lhs: f64 = x_i.iter().zip(&v).map(|(a, b)| a * b).sum();
            let mut placed = vec![0.0; 64];
            sys.place_add(&mut placed, i, &v).unwrap();
            let rhs: f64 = img.as_slice().iter().zip(&placed).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-15);
        }
    }

    #[test]
    fn counts_match_brute_force_sum_of_rtr() {
        let sys = PatchSystem::new((9, 7), 4, 3).unwrap();
        let ones = vec![vec![1.0; 16]; sys.len()];
        let (sum, counts) = sys.aggregate(&ones).unwrap();
        assert_eq!(sum.as_slice(), counts.as_slice());
    }
}
