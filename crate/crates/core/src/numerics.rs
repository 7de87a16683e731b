//! Small dense linear algebra: symmetric eigendecomposition (cyclic Jacobi),
//! SPD solves via Cholesky, and a matrix-free conjugate-gradient solver for
//! the large image-update system.
//!
//! Matrices are flat row-major slices. Everything here is deterministic:
//! same input bits, same output bits.

use crate::error::{Error, Result};

/// Largest matrix order accepted by [`sym_eig`]; patch covariances are at
/// most `p^2 = 25` square, so this is generous.
pub const MAX_EIG_ORDER: usize = 64;

/// Eigendecomposition of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Eigenvalues in descending order.
    pub eigenvalues: Vec<f64>,
    /// Row `k` (length `n`) is the unit eigenvector paired with
    /// `eigenvalues[k]`. Sign convention: the entry of largest magnitude
    /// (first such index on ties) is positive.
    vectors: Vec<f64>,
    n: usize,
}

impl SymEig {
    pub fn order(&self) -> usize {
        self.n
    }

    /// Eigenvector paired with `eigenvalues[k]`.
    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.n..(k + 1) * self.n]
    }

    /// All eigenvectors as a row-major `n x n` matrix (row k = vector k).
    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }
}

/// Full eigendecomposition of a symmetric matrix (Householder reduction to
/// tridiagonal form, then implicit-shift QL).
///
/// Requires `a` symmetric to `1e-10` relative and order at most
/// [`MAX_EIG_ORDER`]. Ordering and eigenvector signs are deterministic.
pub fn sym_eig(a: &[f64], n: usize) -> Result<SymEig> {
    if n == 0 || a.len() != n * n {
        return Err(Error::LengthMismatch {
            context: "sym_eig",
            expected: n * n,
            got: a.len(),
        });
    }
    if n > MAX_EIG_ORDER {
        return Err(Error::MatrixTooLarge {
            n,
            max: MAX_EIG_ORDER,
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sym_eig input"));
    }
    let scale = a.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let mut max_dev = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            max_dev = max_dev.max((a[i * n + j] - a[j * n + i]).abs());
        }
    }
    if max_dev > 1e-10 * scale.max(1e-300) {
        return Err(Error::NotSymmetric { max_dev });
    }

    let (d, z) = tridiagonal_eig(a, n)?;

    // sort descending; stable so repeated eigenvalues keep their order
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).expect("eigenvalues are finite"));

    let mut eigenvalues = Vec::with_capacity(n);
    let mut vectors = vec![0.0; n * n];
    for (row, &col) in order.iter().enumerate() {
        eigenvalues.push(d[col]);
        // column `col` of z becomes row `row`, signed so the first
        // largest-magnitude component is positive
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for k in 0..n {
            let abs = z[k * n + col].abs();
            if abs > best_abs {
                best_abs = abs;
                best = k;
            }
        }
        let flip = if z[best * n + col] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            vectors[row * n + k] = flip * z[k * n + col];
        }
    }

    Ok(SymEig {
        eigenvalues,
        vectors,
        n,
    })
}

/// Householder reduction to tridiagonal form followed by implicit-shift QL,
/// accumulating the transformations. Returns unsorted eigenvalues and the
/// eigenvector matrix (columns are eigenvectors).
fn tridiagonal_eig(a: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut z = a.to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];

    // Householder reduction (tred2)
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let mut scale = 0.0;
            for k in 0..=l {
                scale += z[i * n + k].abs();
            }
            if scale == 0.0 {
                e[i] = z[i * n + l];
            } else {
                for k in 0..=l {
                    z[i * n + k] /= scale;
                    h += z[i * n + k] * z[i * n + k];
                }
                let f = z[i * n + l];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                z[i * n + l] = f - g;
                let mut f_acc = 0.0;
                for j in 0..=l {
                    z[j * n + i] = z[i * n + j] / h;
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += z[j * n + k] * z[i * n + k];
                    }
                    for k in (j + 1)..=l {
                        g += z[k * n + j] * z[i * n + k];
                    }
                    e[j] = g / h;
                    f_acc += e[j] * z[i * n + j];
                }
                let hh = f_acc / (h + h);
                for j in 0..=l {
                    let f = z[i * n + j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        z[j * n + k] -= f * e[k] + g * z[i * n + k];
                    }
                }
            }
        } else {
            e[i] = z[i * n + l];
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    for i in 0..n {
        if d[i] != 0.0 {
            for j in 0..i {
                let mut g = 0.0;
                for k in 0..i {
                    g += z[i * n + k] * z[k * n + j];
                }
                for k in 0..i {
                    z[k * n + j] -= g * z[k * n + i];
                }
            }
        }
        d[i] = z[i * n + i];
        z[i * n + i] = 1.0;
        for j in 0..i {
            z[j * n + i] = 0.0;
            z[i * n + j] = 0.0;
        }
    }

    // implicit-shift QL with eigenvector accumulation (tql2)
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 64 {
                return Err(Error::NonFinite("eigensolver failed to converge"));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut i = m;
            while i > l {
                i -= 1;
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    f = z[k * n + i + 1];
                    z[k * n + i + 1] = s * z[k * n + i] + c * f;
                    z[k * n + i] = c * z[k * n + i] - s * f;
                }
            }
            if r == 0.0 && i > l {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    Ok((d, z))
}

/// Solves `G z = r` for symmetric positive definite `G` by Cholesky
/// factorization with one step of iterative refinement.
pub fn ridge_solve(g: &[f64], r: &[f64]) -> Result<Vec<f64>> {
    let n = r.len();
    if g.len() != n * n {
        return Err(Error::LengthMismatch {
            context: "ridge_solve",
            expected: n * n,
            got: g.len(),
        });
    }
    let chol = cholesky(g, n)?;
    let mut z = chol_solve(&chol, n, r);
    // refinement: z += G \ (r - G z)
    let mut resid = r.to_vec();
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += g[i * n + j] * z[j];
        }
        resid[i] -= acc;
    }
    let corr = chol_solve(&chol, n, &resid);
    for i in 0..n {
        z[i] += corr[i];
    }
    Ok(z)
}

fn cholesky(g: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = g[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err(Error::SingularSystem);
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Ok(l)
}

fn chol_solve(l: &[f64], n: usize, r: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = r[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut z = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * z[k];
        }
        z[i] = sum / l[i * n + i];
    }
    z
}

/// Matrix-free symmetric positive definite operator.
pub trait LinearOperator: Sync {
    /// Dimension `n` of the square operator.
    fn dim(&self) -> usize;
    /// Computes `out = A v`.
    fn apply(&self, v: &[f64], out: &mut [f64]);
}

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final residual norm relative to the right-hand side norm.
    pub relative_residual: f64,
    /// False when `max_iter` was reached before the tolerance.
    pub converged: bool,
}

/// Conjugate gradients for `A x = rhs` with warm start `x0`.
///
/// Stops when the residual drops to `tol * ||rhs||` or after `max_iter`
/// iterations (reported via `converged`). A residual growing tenfold past
/// the best seen, or any non-finite value, is an error.
pub fn conjugate_gradient(
    a: &dyn LinearOperator,
    rhs: &[f64],
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgResult> {
    let n = a.dim();
    if rhs.len() != n || x0.len() != n {
        return Err(Error::LengthMismatch {
            context: "conjugate_gradient",
            expected: n,
            got: if rhs.len() != n { rhs.len() } else { x0.len() },
        });
    }
    if tol <= 0.0 {
        return Err(Error::InvalidConfig(format!("cg tolerance must be positive, got {tol}")));
    }
    let rhs_norm = norm(rhs);
    if rhs_norm == 0.0 {
        return Ok(CgResult {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        });
    }

    let mut x = x0.to_vec();
    let mut ax = vec![0.0; n];
    a.apply(&x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, av)| b - av).collect();
    let mut rs_old = dot(&r, &r);
    if !rs_old.is_finite() {
        return Err(Error::NonFinite("conjugate_gradient residual"));
    }
    let target = tol * rhs_norm;
    if rs_old.sqrt() <= target {
        return Ok(CgResult {
            x,
            iterations: 0,
            relative_residual: rs_old.sqrt() / rhs_norm,
            converged: true,
        });
    }

    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let initial = rs_old.sqrt();
    let mut best = initial;
    for iter in 1..=max_iter {
        a.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !pap.is_finite() {
            return Err(Error::NonFinite("conjugate_gradient operator output"));
        }
        if pap <= 0.0 {
            return Err(Error::SingularSystem);
        }
        let alpha = rs_old / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(&r, &r);
        if !rs_new.is_finite() {
            return Err(Error::NonFinite("conjugate_gradient residual"));
        }
        let rnorm = rs_new.sqrt();
        if rnorm <= target {
            return Ok(CgResult {
                x,
                iterations: iter,
                relative_residual: rnorm / rhs_norm,
                converged: true,
            });
        }
        // 2-norm residuals of convergent CG runs oscillate on ill-conditioned
        // systems, so growth past the best alone is not proof of divergence;
        // require the residual to also exceed where the solve started.
        if rnorm > 10.0 * best && rnorm > initial {
            return Err(Error::CgDiverged {
                best,
                current: rnorm,
            });
        }
        best = best.min(rnorm);
        let beta = rs_new / rs_old;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs_old = rs_new;
    }
    Ok(CgResult {
        relative_residual: rs_old.sqrt() / rhs_norm,
        x,
        iterations: max_iter,
        converged: false,
    })
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    struct DenseOp {
        n: usize,
        a: Vec<f64>,
    }

    impl LinearOperator for DenseOp {
        fn dim(&self) -> usize {
            self.n
        }
        fn apply(&self, v: &[f64], out: &mut [f64]) {
            for i in 0..self.n {
                out[i] = dot(&self.a[i * self.n..(i + 1) * self.n], v);
            }
        }
    }

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let b: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += b[k * n + i] * b[k * n + j];
                }
                a[i * n + j] = s + if i == j { n as f64 * 0.1 } else { 0.0 };
            }
        }
        a
    }

    fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = rng.gen_range(-1.0..1.0);
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }
        a
    }

    #[test]
    fn identity_eigenpairs() {
        let a = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let e = sym_eig(&a, 3).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0, 1.0]);
        // vectors form an orthonormal basis
        for i in 0..3 {
            for j in 0..3 {
                let d = dot(e.vector(i), e.vector(j));
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn diagonal_matrix_sorted_descending() {
        let a = vec![3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0];
        let e = sym_eig(&a, 3).unwrap();
        assert_eq!(e.eigenvalues, vec![3.0, 2.0, 1.0]);
        assert_eq!(e.vector(0), &[1.0, 0.0, 0.0]);
        assert_eq!(e.vector(1), &[0.0, 0.0, 1.0]);
        assert_eq!(e.vector(2), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn random_symmetric_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 25;
        let a = random_symmetric(n, &mut rng);
        let e = sym_eig(&a, n).unwrap();
        let norm_a: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        // A = sum_k lambda_k q_k q_k^T
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += e.eigenvalues[k] * e.vector(k)[i] * e.vector(k)[j];
                }
                assert!((s - a[i * n + j]).abs() <= 1e-8 * norm_a.max(1.0));
            }
        }
        // eigenvalue equation per pair
        for k in 0..n {
            for i in 0..n {
                let av = dot(&a[i * n..(i + 1) * n], e.vector(k));
                assert!((av - e.eigenvalues[k] * e.vector(k)[i]).abs() <= 1e-8 * norm_a);
            }
        }
    }

    #[test]
    fn eigenvalue_sum_matches_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2usize, 5, 13, 25] {
            let a = random_symmetric(n, &mut rng);
            let e = sym_eig(&a, n).unwrap();
            let trace: f64 = (0..n).map(|i| a[i * n + i]).sum();
            let sum: f64 = e.eigenvalues.iter().sum();
            assert!((trace - sum).abs() <= 1e-9 * trace.abs().max(1.0));
        }
    }

    #[test]
    fn sign_convention_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_symmetric(8, &mut rng);
        let e1 = sym_eig(&a, 8).unwrap();
        let e2 = sym_eig(&a, 8).unwrap();
        assert_eq!(e1.vectors(), e2.vectors());
        for k in 0..8 {
            let v = e1.vector(k);
            let mut best = 0;
            for i in 0..8 {
                if v[i].abs() > v[best].abs() {
                    best = i;
                }
            }
            assert!(v[best] > 0.0);
        }
    }

    #[test]
    fn asymmetric_and_nonfinite_rejected() {
        let a = vec![1.0, 2.0, 0.0, 1.0];
        assert!(matches!(sym_eig(&a, 2), Err(Error::NotSymmetric { .. })));
        let b = vec![1.0, f64::NAN, f64::NAN, 1.0];
        assert!(matches!(sym_eig(&b, 2), Err(Error::NonFinite(_))));
    }

    #[test]
    fn ridge_identity_and_scaled() {
        let g = vec![1.0, 0.0, 0.0, 1.0];
        let z = ridge_solve(&g, &[0.3, -0.7]).unwrap();
        assert_eq!(z, vec![0.3, -0.7]);
        let g2 = vec![2.0, 0.0, 0.0, 2.0];
        let z2 = ridge_solve(&g2, &[4.0, 6.0]).unwrap();
        assert!((z2[0] - 2.0).abs() < 1e-14 && (z2[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn ridge_random_spd_residual_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let n = 16;
        let g = random_spd(n, &mut rng);
        let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let z = ridge_solve(&g, &r).unwrap();
        let mut resid = 0.0f64;
        for i in 0..n {
            let gz = dot(&g[i * n..(i + 1) * n], &z);
            resid += (gz - r[i]) * (gz - r[i]);
        }
        assert!(resid.sqrt() <= 1e-10 * norm(&r));
    }

    #[test]
    fn ridge_stationarity_gradient_small() {
        // gradient of 0.5 z^T G z - r^T z at the solution is G z - r
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 12;
        let g = random_spd(n, &mut rng);
        let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let z = ridge_solve(&g, &r).unwrap();
        let mut grad = vec![0.0; n];
        for i in 0..n {
            grad[i] = dot(&g[i * n..(i + 1) * n], &z) - r[i];
        }
        assert!(norm(&grad) <= 1e-8 * norm(&r));
    }

    #[test]
    fn singular_system_detected() {
        let g = vec![1.0, 1.0, 1.0, 1.0]; // rank 1
        assert!(matches!(ridge_solve(&g, &[1.0, 2.0]), Err(Error::SingularSystem)));
    }

    #[test]
    fn cg_identity_converges_immediately() {
        let op = DenseOp {
            n: 3,
            a: vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        };
        let res = conjugate_gradient(&op, &[1.0, 2.0, 3.0], &[0.0; 3], 1e-12, 10).unwrap();
        assert!(res.converged);
        assert!(res.iterations <= 1);
        for (xi, bi) in res.x.iter().zip([1.0, 2.0, 3.0]) {
            assert!((xi - bi).abs() < 1e-10);
        }
    }

    #[test]
    fn cg_exact_start_takes_zero_iterations() {
        let a: Vec<f64> = {
            let mut m = vec![0.0; 16];
            for i in 0..4 {
                m[i * 4 + i] = (i + 1) as f64;
            }
            m
        };
        let op = DenseOp { n: 4, a };
        let x_exact = vec![1.0, 0.5, 1.0 / 3.0, 0.25];
        let res = conjugate_gradient(&op, &[1.0; 4], &x_exact, 1e-10, 10).unwrap();
        assert_eq!(res.iterations, 0);
        assert!(res.relative_residual <= 1e-10);
    }

    #[test]
    fn cg_diagonal_matches_direct() {
        let n = 10;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = (i + 1) as f64;
        }
        let op = DenseOp { n, a };
        let rhs = vec![1.0; n];
        let res = conjugate_gradient(&op, &rhs, &vec![0.0; n], 1e-12, 100).unwrap();
        for i in 0..n {
            assert!((res.x[i] - 1.0 / (i + 1) as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn cg_matches_dense_oracle_on_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for n in [20usize, 64, 200] {
            let a = random_spd(n, &mut rng);
            let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let direct = ridge_solve(&a, &rhs).unwrap();
            let op = DenseOp { n, a };
            let res = conjugate_gradient(&op, &rhs, &vec![0.0; n], 1e-10, 4 * n).unwrap();
            assert!(res.converged, "n={n}");
            let num: f64 = res
                .x
                .iter()
                .zip(&direct)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(num <= 1e-6 * norm(&direct), "n={n} err={num}");
        }
    }

    #[test]
    fn cg_rejects_indefinite_operator() {
        let op = DenseOp {
            n: 2,
            a: vec![1.0, 0.0, 0.0, -1.0],
        };
        let err = conjugate_gradient(&op, &[0.0, 1.0], &[0.0; 2], 1e-10, 50);
        assert!(err.is_err());
    }

    #[test]
    fn cg_zero_rhs_returns_zero() {
        let op = DenseOp {
            n: 2,
            a: vec![2.0, 0.0, 0.0, 2.0],
        };
        let res = conjugate_gradient(&op, &[0.0, 0.0], &[5.0, 5.0], 1e-10, 10).unwrap();
        assert_eq!(res.x, vec![0.0, 0.0]);
    }

    #[test]
    fn linear_operator_linearity_probe() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let n = 16;
        let a = random_spd(n, &mut rng);
        let op = DenseOp { n, a };
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (ca, cb) = (0.7, -1.3);
        let mut lhs = vec![0.0; n];
        let w: Vec<f64> = u.iter().zip(&v).map(|(x, y)| ca * x + cb * y).collect();
        op.apply(&w, &mut lhs);
        let mut au = vec![0.0; n];
        let mut av = vec![0.0; n];
        op.apply(&u, &mut au);
        op.apply(&v, &mut av);
        for i in 0..n {
            assert!((lhs[i] - (ca * au[i] + cb * av[i])).abs() < 1e-10);
        }
    }
}
