//! The nonlocal linear regression operator.
//!
//! Each pixel that is a patch center is predicted as an affine combination
//! of the center pixels of its most similar nonlocal patches. The per-patch
//! weights come from a kernel-weighted ridge regression fit on full patch
//! vectors; assembled globally this gives a row-sparse affine map
//! `x -> H x + b`. Border pixels that are never a patch center get identity
//! rows.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::numerics::ridge_solve;
use crate::patch::PatchSystem;
use crate::search::{find_similar, SearchConfig};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// In-patch kernel weights emphasizing samples near the patch center during
/// the regression fit: `exp(-(dr^2 + dc^2) / sigma^2)` at offset `(dr, dc)`.
#[derive(Debug, Clone)]
pub struct KernelWeights {
    values: Vec<f64>,
    patch_size: usize,
    sigma: f64,
}

impl KernelWeights {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Builds the spatial kernel for an odd patch size.
pub fn kernel_weights(patch_size: usize, sigma: f64) -> Result<KernelWeights> {
    if patch_size % 2 == 0 || patch_size == 0 {
        return Err(Error::InvalidConfig(format!(
            "kernel patch size must be odd, got {patch_size}"
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidConfig(format!("kernel sigma must be positive, got {sigma}")));
    }
    let half = (patch_size / 2) as i64;
    let mut values = Vec::with_capacity(patch_size * patch_size);
    for dr in -half..=half {
        for dc in -half..=half {
            let d2 = (dr * dr + dc * dc) as f64;
            values.push((-d2 / (sigma * sigma)).exp());
        }
    }
    Ok(KernelWeights {
        values,
        patch_size,
        sigma,
    })
}

/// Fits the kernel-weighted ridge regression of `target` on `neighbors`
/// plus a constant column, returning the neighbor weights and the bias.
///
/// Solves the normal equations `(X^T k X + chi I) w = X^T k t` where
/// `X = [n_1, ..., n_m, 1]`; the ridge term covers the bias as well.
pub fn fit_patch_regression(
    target: &[f64],
    neighbors: &[&[f64]],
    kernel: &KernelWeights,
    chi: f64,
) -> Result<(Vec<f64>, f64)> {
    let p2 = kernel.values.len();
    if target.len() != p2 {
        return Err(Error::LengthMismatch {
            context: "fit_patch_regression target",
            expected: p2,
            got: target.len(),
        });
    }
    if neighbors.is_empty() {
        return Err(Error::EmptyInput("fit_patch_regression neighbors"));
    }
    for nb in neighbors {
        if nb.len() != p2 {
            return Err(Error::LengthMismatch {
                context: "fit_patch_regression neighbor",
                expected: p2,
                got: nb.len(),
            });
        }
    }
    if !(chi > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "ridge parameter chi must be positive, got {chi}"
        )));
    }

    let m = neighbors.len();
    let n = m + 1; // +1 for the constant column
    let k = &kernel.values;
    let mut g = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    for a in 0..m {
        for b in a..m {
            let mut s = 0.0;
            for l in 0..p2 {
                s += k[l] * neighbors[a][l] * neighbors[b][l];
            }
            g[a * n + b] = s;
            g[b * n + a] = s;
        }
        let mut s1 = 0.0;
        let mut st = 0.0;
        for l in 0..p2 {
            s1 += k[l] * neighbors[a][l];
            st += k[l] * neighbors[a][l] * target[l];
        }
        g[a * n + m] = s1;
        g[m * n + a] = s1;
        rhs[a] = st;
    }
    let ksum: f64 = k.iter().sum();
    g[m * n + m] = ksum;
    rhs[m] = k.iter().zip(target).map(|(w, t)| w * t).sum();
    for d in 0..n {
        g[d * n + d] += chi;
    }

    let omega = ridge_solve(&g, &rhs)?;
    let bias = omega[m];
    let mut a = omega;
    a.truncate(m);
    Ok((a, bias))
}

/// Row-sparse affine operator `x -> H x + b` over a fixed image size.
#[derive(Debug, Clone, PartialEq)]
pub struct NlrOperator {
    height: usize,
    width: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    weights: Vec<f64>,
    bias: Vec<f64>,
    // transpose of the linear part, for H^T applications
    t_row_ptr: Vec<usize>,
    t_cols: Vec<u32>,
    t_weights: Vec<f64>,
}

impl NlrOperator {
    pub fn hr_dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    /// Per-pixel bias vector b.
    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Sparse row `i`: parallel column/weight slices.
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[span.clone()], &self.weights[span])
    }

    /// Applies the affine map: `out = H v + b`.
    pub fn apply_slice(&self, v: &[f64], out: &mut [f64]) {
        self.apply_linear(v, out);
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
    }

    /// Applies only the linear part: `out = H v`.
    pub fn apply_linear(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.pixel_count());
        debug_assert_eq!(out.len(), self.pixel_count());
        let kernel = |i: usize, o: &mut f64| {
            let (cols, weights) = self.row(i);
            let mut acc = 0.0;
            for (c, w) in cols.iter().zip(weights) {
                acc += w * v[*c as usize];
            }
            *o = acc;
        };
        #[cfg(feature = "parallel")]
        out.par_iter_mut().enumerate().for_each(|(i, o)| kernel(i, o));
        #[cfg(not(feature = "parallel"))]
        out.iter_mut().enumerate().for_each(|(i, o)| kernel(i, o));
    }

    /// Applies the adjoint of the linear part: `out = H^T v`.
    pub fn apply_adjoint(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.pixel_count());
        debug_assert_eq!(out.len(), self.pixel_count());
        let kernel = |j: usize, o: &mut f64| {
            let span = self.t_row_ptr[j]..self.t_row_ptr[j + 1];
            let mut acc = 0.0;
            for (r, w) in self.t_cols[span.clone()].iter().zip(&self.t_weights[span]) {
                acc += w * v[*r as usize];
            }
            *o = acc;
        };
        #[cfg(feature = "parallel")]
        out.par_iter_mut().enumerate().for_each(|(j, o)| kernel(j, o));
        #[cfg(not(feature = "parallel"))]
        out.iter_mut().enumerate().for_each(|(j, o)| kernel(j, o));
    }

    /// Applies the affine map to an image.
    pub fn apply(&self, img: &Image) -> Result<Image> {
        if img.dims() != self.hr_dims() {
            return Err(Error::DimensionMismatch {
                context: "NlrOperator::apply",
                expected_h: self.height,
                expected_w: self.width,
                got_h: img.height(),
                got_w: img.width(),
            });
        }
        let mut out = vec![0.0; self.pixel_count()];
        self.apply_slice(img.as_slice(), &mut out);
        Image::from_vec(self.height, self.width, out)
    }

    fn from_rows(height: usize, width: usize, rows: Vec<(Vec<u32>, Vec<f64>, f64)>) -> Self {
        let n = height * width;
        debug_assert_eq!(rows.len(), n);
        let nnz: usize = rows.iter().map(|(c, _, _)| c.len()).sum();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut weights = Vec::with_capacity(nnz);
        let mut bias = Vec::with_capacity(n);
        row_ptr.push(0);
        for (c, w, b) in &rows {
            cols.extend_from_slice(c);
            weights.extend_from_slice(w);
            bias.push(*b);
            row_ptr.push(cols.len());
        }

        // build the transpose by counting then scattering in row order, so
        // each transpose row lists source rows in ascending order
        let mut t_counts = vec![0usize; n];
        for &c in &cols {
            t_counts[c as usize] += 1;
        }
        let mut t_row_ptr = Vec::with_capacity(n + 1);
        t_row_ptr.push(0usize);
        for j in 0..n {
            t_row_ptr.push(t_row_ptr[j] + t_counts[j]);
        }
        let mut fill = t_row_ptr.clone();
        let mut t_cols = vec![0u32; nnz];
        let mut t_weights = vec![0.0; nnz];
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                let j = cols[k] as usize;
                t_cols[fill[j]] = i as u32;
                t_weights[fill[j]] = weights[k];
                fill[j] += 1;
            }
        }

        Self {
            height,
            width,
            row_ptr,
            cols,
            weights,
            bias,
            t_row_ptr,
            t_cols,
            t_weights,
        }
    }
}

/// Builds the operator from per-patch regressions fitted on the current
/// image estimate, running its own similar-patch searches.
///
/// `cfg.exclude_self` should be true: including the query patch among the
/// regression predictors collapses the fit to the identity.
pub fn build_nlr_operator(
    img: &Image,
    sys: &PatchSystem,
    cfg: &SearchConfig,
    m: usize,
    sigma: f64,
    chi: f64,
) -> Result<NlrOperator> {
    if m == 0 {
        return Err(Error::InvalidConfig("neighbor count m must be >= 1".into()));
    }
    let kernel = kernel_weights(sys.patch_size(), sigma)?;
    let k = sys.len();
    let collect = |i: usize| -> Result<(usize, Vec<usize>)> {
        let found = find_similar(img, sys, i, cfg, m)?;
        Ok((i, found.neighbor_indices))
    };
    #[cfg(feature = "parallel")]
    let neighbor_lists: Result<Vec<_>> = (0..k).into_par_iter().map(collect).collect();
    #[cfg(not(feature = "parallel"))]
    let neighbor_lists: Result<Vec<_>> = (0..k).map(collect).collect();
    let mut lists = vec![Vec::new(); k];
    for (i, l) in neighbor_lists? {
        lists[i] = l;
    }
    build_from_neighbors(img, sys, &lists, &kernel, chi)
}

/// Operator assembly given precomputed per-patch neighbor lists (patch
/// indices into `sys`, the query itself excluded).
pub fn build_from_neighbors(
    img: &Image,
    sys: &PatchSystem,
    neighbor_lists: &[Vec<usize>],
    kernel: &KernelWeights,
    chi: f64,
) -> Result<NlrOperator> {
    if neighbor_lists.len() != sys.len() {
        return Err(Error::LengthMismatch {
            context: "build_from_neighbors",
            expected: sys.len(),
            got: neighbor_lists.len(),
        });
    }
    let (height, width) = sys.image_dims();
    let n = height * width;
    let p2 = sys.patch_len();

    // identity rows everywhere, regression rows at patch centers
    let fit_row = |i: usize| -> Result<(usize, Vec<u32>, Vec<f64>, f64)> {
        let (cr, cc) = sys.center(i)?;
        let pixel = cr * width + cc;
        let nbrs = &neighbor_lists[i];
        if nbrs.is_empty() {
            return Ok((pixel, vec![pixel as u32], vec![1.0], 0.0));
        }
        let mut target = vec![0.0; p2];
        sys.extract_into(img.as_slice(), i, &mut target)?;
        let mut nvecs: Vec<Vec<f64>> = Vec::with_capacity(nbrs.len());
        let mut centers: Vec<u32> = Vec::with_capacity(nbrs.len());
        for &j in nbrs {
            let mut v = vec![0.0; p2];
            sys.extract_into(img.as_slice(), j, &mut v)?;
            nvecs.push(v);
            let (r, c) = sys.center(j)?;
            centers.push((r * width + c) as u32);
        }
        let refs: Vec<&[f64]> = nvecs.iter().map(|v| v.as_slice()).collect();
        let (a, b) = fit_patch_regression(&target, &refs, kernel, chi)?;
        Ok((pixel, centers, a, b))
    };

    #[cfg(feature = "parallel")]
    let fitted: Result<Vec<_>> = (0..sys.len()).into_par_iter().map(fit_row).collect();
    #[cfg(not(feature = "parallel"))]
    let fitted: Result<Vec<_>> = (0..sys.len()).map(fit_row).collect();

    let mut rows: Vec<(Vec<u32>, Vec<f64>, f64)> = (0..n)
        .map(|i| (vec![i as u32], vec![1.0], 0.0))
        .collect();
    for (pixel, cols, weights, bias) in fitted? {
        rows[pixel] = (cols, weights, bias);
    }
    Ok(NlrOperator::from_rows(height, width, rows))
}
