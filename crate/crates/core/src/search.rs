//! Nonlocal similar-patch search inside a square window.
//!
//! One engine serves three consumers: regression neighbor selection, prior
//! neighbor selection, and dictionary training-set grouping. The scan is
//! exhaustive over the window; there is no approximate index.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::patch::PatchSystem;

/// Window search parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// Side length L of the search window, in pixels. Must be odd and at
    /// least the patch size.
    pub window: usize,
    /// Hard cap on how many neighbors a search may return.
    pub max_candidates: usize,
    /// Drop the query patch itself from the results.
    pub exclude_self: bool,
    /// Optional hard cut on squared distance; `None` keeps pure top-k.
    pub distance_threshold: Option<f64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            window: 31,
            max_candidates: 4096,
            exclude_self: false,
            distance_threshold: None,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self, patch_size: usize) -> Result<()> {
        if self.window % 2 == 0 || self.window < patch_size {
            return Err(Error::InvalidConfig(format!(
                "search window {} must be odd and >= patch size {patch_size}",
                self.window
            )));
        }
        if self.max_candidates == 0 {
            return Err(Error::InvalidConfig("max_candidates must be >= 1".into()));
        }
        Ok(())
    }
}

/// Result of one similar-patch query: neighbor indices with their squared
/// Euclidean distances, ascending. Ties are broken by raster order of the
/// neighbor origin, so results are deterministic.
#[derive(Debug, Clone)]
pub struct SimilarPatchSet {
    pub query_index: usize,
    pub neighbor_indices: Vec<usize>,
    pub distances: Vec<f64>,
}

impl SimilarPatchSet {
    pub fn len(&self) -> usize {
        self.neighbor_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbor_indices.is_empty()
    }
}

#[inline]
fn patch_sq_distance(
    img: &[f64],
    width: usize,
    p: usize,
    a: (usize, usize),
    b: (usize, usize),
) -> f64 {
    let mut acc = 0.0;
    for dr in 0..p {
        let ra = (a.0 + dr) * width + a.1;
        let rb = (b.0 + dr) * width + b.1;
        for dc in 0..p {
            let d = img[ra + dc] - img[rb + dc];
            acc += d * d;
        }
    }
    acc
}

/// Finds up to `count` patches of `sys` most similar to patch `i`, searching
/// origins inside the `L x L` window centered on patch `i`'s center pixel.
///
/// Returns fewer than `count` neighbors when the window holds fewer
/// candidates; callers check the length.
pub fn find_similar(
    img: &Image,
    sys: &PatchSystem,
    i: usize,
    cfg: &SearchConfig,
    count: usize,
) -> Result<SimilarPatchSet> {
    cfg.validate(sys.patch_size())?;
    if count == 0 {
        return Err(Error::InvalidConfig("requested neighbor count must be >= 1".into()));
    }
    if img.dims() != sys.image_dims() {
        let (eh, ew) = sys.image_dims();
        return Err(Error::DimensionMismatch {
            context: "find_similar",
            expected_h: eh,
            expected_w: ew,
            got_h: img.height(),
            got_w: img.width(),
        });
    }
    let (cr, cc) = sys.center(i)?;
    let query = sys.origin(i)?;
    let half = cfg.window / 2;
    let data = img.as_slice();
    let width = img.width();
    let p = sys.patch_size();

    let mut candidates: Vec<(f64, usize)> = Vec::new();
    for (j, origin) in sys.origins_in_rect(
        cr.saturating_sub(half),
        cr + half,
        cc.saturating_sub(half),
        cc + half,
    ) {
        if cfg.exclude_self && j == i {
            continue;
        }
        let d = patch_sq_distance(data, width, p, query, origin);
        if cfg.distance_threshold.is_some_and(|t| d > t) {
            continue;
        }
        candidates.push((d, j));
    }

    let keep = count.min(cfg.max_candidates).min(candidates.len());
    // total order: distance then patch index (= raster order of origin)
    let by_dist_then_index = |a: &(f64, usize), b: &(f64, usize)| {
        a.0.partial_cmp(&b.0)
            .expect("distances are finite")
            .then(a.1.cmp(&b.1))
    };
    if keep > 0 && keep < candidates.len() {
        candidates.select_nth_unstable_by(keep - 1, by_dist_then_index);
        candidates.truncate(keep);
    }
    candidates.sort_unstable_by(by_dist_then_index);

    Ok(SimilarPatchSet {
        query_index: i,
        neighbor_indices: candidates.iter().map(|&(_, j)| j).collect(),
        distances: candidates.iter().map(|&(d, _)| d).collect(),
    })
}

/// Turns ascending squared distances into normalized similarity weights
/// `w_k = exp(-d_k / h1) / sum_j exp(-d_j / h1)`.
pub fn similarity_weights(distances: &[f64], h1: f64) -> Result<Vec<f64>> {
    if distances.is_empty() {
        return Err(Error::EmptyInput("similarity_weights distances"));
    }
    if !(h1 > 0.0) {
        return Err(Error::InvalidConfig(format!("h1 must be positive, got {h1}")));
    }
    // shift by the smallest distance before exponentiating; cancels in the
    // normalization but avoids underflow to an all-zero sum
    let d0 = distances.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut weights: Vec<f64> = distances.iter().map(|&d| (-(d - d0) / h1).exp()).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(weights)
}
