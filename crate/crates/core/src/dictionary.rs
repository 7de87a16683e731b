//! Online adaptive PCA sub-dictionaries.
//!
//! Each patch gets its own orthonormal basis, trained on its grouped
//! nonlocal similar patches: subtract the group mean, form the covariance,
//! eigendecompose. Coding against the owning sub-dictionary is so sparse by
//! construction that no extra thresholding of coefficients is applied.

use crate::error::{Error, Result};
use crate::numerics::sym_eig;

/// Per-patch orthonormal transform. Row `k` of `basis` is the principal
/// direction with the `k`-th largest eigenvalue of the training covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct SubDictionary {
    basis: Vec<f64>,
    mean: Vec<f64>,
    eigenvalues: Vec<f64>,
    dim: usize,
}

/// The sub-dictionary code of the similarity-weighted average of a patch's
/// nonlocal neighbors; the coding update pulls coefficients toward it.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorCoefficient {
    pub beta: Vec<f64>,
}

impl SubDictionary {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Eigenvalues of the training covariance, descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Row-major orthonormal basis; row k = k-th principal direction.
    pub fn basis(&self) -> &[f64] {
        &self.basis
    }

    /// Analysis transform: `alpha = Phi (patch - mean)`.
    pub fn code(&self, patch: &[f64]) -> Result<Vec<f64>> {
        if patch.len() != self.dim {
            return Err(Error::LengthMismatch {
                context: "SubDictionary::code",
                expected: self.dim,
                got: patch.len(),
            });
        }
        let mut alpha = vec![0.0; self.dim];
        self.code_into(patch, &mut alpha);
        Ok(alpha)
    }

    pub fn code_into(&self, patch: &[f64], alpha: &mut [f64]) {
        let n = self.dim;
        for k in 0..n {
            let row = &self.basis[k * n..(k + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += row[j] * (patch[j] - self.mean[j]);
            }
            alpha[k] = acc;
        }
    }

    /// Synthesis transform: `patch = Phi^T alpha + mean`.
    pub fn decode(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        if alpha.len() != self.dim {
            return Err(Error::LengthMismatch {
                context: "SubDictionary::decode",
                expected: self.dim,
                got: alpha.len(),
            });
        }
        let mut patch = vec![0.0; self.dim];
        self.decode_into(alpha, &mut patch);
        Ok(patch)
    }

    pub fn decode_into(&self, alpha: &[f64], patch: &mut [f64]) {
        let n = self.dim;
        patch.copy_from_slice(&self.mean);
        for k in 0..n {
            let a = alpha[k];
            if a == 0.0 {
                continue;
            }
            let row = &self.basis[k * n..(k + 1) * n];
            for j in 0..n {
                patch[j] += a * row[j];
            }
        }
    }
}

/// Trains a PCA sub-dictionary from grouped similar patches.
///
/// Requires at least two samples. A zero-variance group (all samples equal)
/// yields the identity basis, which codes the group exactly; that falls out
/// of the Jacobi sweep on the zero covariance without a special case.
pub fn train_subdictionary(samples: &[&[f64]]) -> Result<SubDictionary> {
    if samples.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "dictionary training needs >= 2 samples, got {}",
            samples.len()
        )));
    }
    let dim = samples[0].len();
    for s in samples {
        if s.len() != dim {
            return Err(Error::LengthMismatch {
                context: "train_subdictionary sample",
                expected: dim,
                got: s.len(),
            });
        }
    }
    let n = samples.len() as f64;
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(*s) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }

    // covariance C = (1/n) sum (s - mean)(s - mean)^T, upper triangle
    let mut cov = vec![0.0; dim * dim];
    let mut centered = vec![0.0; dim];
    for s in samples {
        for j in 0..dim {
            centered[j] = s[j] - mean[j];
        }
        for i in 0..dim {
            let ci = centered[i];
            for j in i..dim {
                cov[i * dim + j] += ci * centered[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let v = cov[i * dim + j] / n;
            cov[i * dim + j] = v;
            cov[j * dim + i] = v;
        }
    }

    let eig = sym_eig(&cov, dim)?;
    Ok(SubDictionary {
        basis: eig.vectors().to_vec(),
        eigenvalues: eig.eigenvalues,
        mean,
        dim,
    })
}

/// Codes the similarity-weighted average of the neighbors under `dict`.
pub fn prior_coefficient(
    dict: &SubDictionary,
    neighbors: &[&[f64]],
    weights: &[f64],
) -> Result<PriorCoefficient> {
    if neighbors.is_empty() {
        return Err(Error::EmptyInput("prior_coefficient neighbors"));
    }
    if neighbors.len() != weights.len() {
        return Err(Error::LengthMismatch {
            context: "prior_coefficient weights",
            expected: neighbors.len(),
            got: weights.len(),
        });
    }
    let dim = dict.dim();
    let mut avg = vec![0.0; dim];
    for (nb, &w) in neighbors.iter().zip(weights) {
        if nb.len() != dim {
            return Err(Error::LengthMismatch {
                context: "prior_coefficient neighbor",
                expected: dim,
                got: nb.len(),
            });
        }
        for (a, v) in avg.iter_mut().zip(*nb) {
            *a += w * v;
        }
    }
    Ok(PriorCoefficient {
        beta: dict.code(&avg)?,
    })
}
