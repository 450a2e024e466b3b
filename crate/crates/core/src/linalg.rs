//! Spectral primitives: a thin SVD adapter, soft thresholding, the
//! tail-singular-value functional and its proximal operator.
//!
//! The tail functional of a matrix `A` is
//!
//! ```text
//! f_k(A) = sum_{i > k} sigma_i(A) = ||A||_* - ||A||_{Ky-Fan(k)}
//! ```
//!
//! and its proximal map (tail singular value thresholding) keeps the leading
//! `k` singular values untouched while soft-thresholding the rest. With
//! `k = 0` it is ordinary singular value thresholding.
//!
//! The thresholding operator is applied as a spectral filter
//! `A -> U diag(g) U^T A` with gains `g_i = s'_i / s_i` in `[0, 1]`, where `U`
//! diagonalizes the Gram matrix of the shorter side of `A`. That needs only a
//! small symmetric eigendecomposition per call, which is what makes the ADMM
//! loop affordable, and the gains stay well defined for vanishing singular
//! values. [`thin_svd`] is a full SVD and is used wherever singular vectors
//! are reported.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// Thin singular value decomposition `A = U diag(s) V^T` with
/// `r = min(rows, cols)` columns in each factor.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    /// `rows x r`, orthonormal columns.
    pub left_vectors: DMatrix<f64>,
    /// Nonincreasing, nonnegative.
    pub singular_values: DVector<f64>,
    /// `cols x r`, orthonormal columns.
    pub right_vectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.singular_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.singular_values.is_empty()
    }

    /// Leading `k` left singular vectors.
    pub fn leading_left(&self, k: usize) -> DMatrix<f64> {
        self.left_vectors.columns(0, k.min(self.len())).into_owned()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        compose(
            &self.left_vectors,
            self.singular_values.as_slice(),
            &self.right_vectors,
        )
    }

    /// Rank-`k` truncation `U_k diag(s_k) V_k^T`.
    pub fn truncate(&self, k: usize) -> DMatrix<f64> {
        let k = k.min(self.len());
        let mut s = self.singular_values.as_slice().to_vec();
        s[k..].iter_mut().for_each(|v| *v = 0.0);
        compose(&self.left_vectors, &s, &self.right_vectors)
    }
}

/// `U diag(s) V^T`, skipping zero singular values.
fn compose(u: &DMatrix<f64>, s: &[f64], v: &DMatrix<f64>) -> DMatrix<f64> {
    let active = s.iter().take_while(|&&x| x > 0.0).count();
    if active == 0 {
        return DMatrix::zeros(u.nrows(), v.nrows());
    }
    let mut us = u.columns(0, active).into_owned();
    for (j, mut col) in us.column_iter_mut().enumerate() {
        col *= s[j];
    }
    us * v.columns(0, active).transpose()
}

fn check_finite(a: &DMatrix<f64>) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(invalid("matrix has non-finite entries"))
    }
}

/// Thin SVD. Singular values are returned in nonincreasing order; equal
/// values keep the order the backend produced them in.
pub fn thin_svd(a: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    check_finite(a)?;
    let (m, n) = a.shape();
    let r = m.min(n);
    if r == 0 {
        return Ok(SpectralDecomposition {
            left_vectors: DMatrix::zeros(m, 0),
            singular_values: DVector::zeros(0),
            right_vectors: DMatrix::zeros(n, 0),
        });
    }
    // nalgebra's SVD with vectors loses accuracy on exactly rank deficient
    // input (the usual output of thresholding), so vectors come from faer.
    let mat = faer::Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)]);
    let svd = mat
        .thin_svd()
        .map_err(|_| Error::SvdNoConvergence { iteration: None })?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());

    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]).then(i.cmp(&j)));

    let mut left = DMatrix::zeros(m, r);
    let mut right = DMatrix::zeros(n, r);
    let mut values = DVector::zeros(r);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = s[src];
        for i in 0..m {
            left[(i, dst)] = u[(i, src)];
        }
        for j in 0..n {
            right[(j, dst)] = v[(j, src)];
        }
    }
    Ok(SpectralDecomposition {
        left_vectors: left,
        singular_values: values,
        right_vectors: right,
    })
}

/// Singular values only, nonincreasing.
pub fn singular_values(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_finite(a)?;
    if a.nrows().min(a.ncols()) == 0 {
        return Ok(Vec::new());
    }
    let svd = nalgebra::linalg::SVD::try_new_unordered(a.clone(), false, false, f64::EPSILON, 0)
        .ok_or(Error::SvdNoConvergence { iteration: None })?;
    let mut s: Vec<f64> = svd.singular_values.iter().map(|v| v.abs()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// `sign(x) * max(|x| - tau, 0)`.
#[inline]
pub fn shrink(x: f64, tau: f64) -> f64 {
    x.signum() * (x.abs() - tau).max(0.0)
}

/// Elementwise soft thresholding.
pub fn soft_threshold(x: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau >= 0.0) {
        return Err(invalid(format!("threshold must be nonnegative, got {tau}")));
    }
    Ok(x.iter().map(|&v| shrink(v, tau)).collect())
}

/// Sum of the singular values past index `k` of an already sorted spectrum.
pub fn tail_of(singular_values: &[f64], k: usize) -> f64 {
    singular_values.iter().skip(k).sum()
}

/// `f_k(A)`: the sum of all singular values after the `k` largest.
/// `k >= min(rows, cols)` gives 0.
pub fn tail_sum(a: &DMatrix<f64>, k: usize) -> Result<f64> {
    Ok(tail_of(&singular_values(a)?, k))
}

/// Result of a tail thresholding step, with the spectrum of the output.
#[derive(Clone, Debug)]
pub struct Thresholded {
    pub matrix: DMatrix<f64>,
    /// Singular values of `matrix`, nonincreasing.
    pub singular_values: Vec<f64>,
}

/// Eigenpairs of the Gram matrix of the shorter side, sorted by
/// nonincreasing eigenvalue (ties by index).
fn gram_eigen(a: &DMatrix<f64>, wide: bool) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let gram = if wide { a * a.transpose() } else { a.transpose() * a };
    let r = gram.nrows();
    let eig = faer::MatRef::from_column_major_slice(gram.as_slice(), r, r)
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|_| Error::SvdNoConvergence { iteration: None })?;
    let (lambda, vectors) = (eig.S().column_vector(), eig.U());
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| lambda[j].total_cmp(&lambda[i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| lambda[i].max(0.0).sqrt()).collect();
    Ok((values, DMatrix::from_fn(r, r, |i, j| vectors[(i, order[j])])))
}

/// Tail singular value thresholding, keeping the spectrum of the output.
pub fn tsvt_full(a: &DMatrix<f64>, tau: f64, k: usize) -> Result<Thresholded> {
    if !(tau >= 0.0) {
        return Err(invalid(format!("threshold must be nonnegative, got {tau}")));
    }
    check_finite(a)?;
    let (m, n) = a.shape();
    let r = m.min(n);
    if r == 0 {
        return Ok(Thresholded {
            matrix: a.clone(),
            singular_values: Vec::new(),
        });
    }
    let wide = m <= n;
    let (sigma, vectors) = gram_eigen(a, wide)?;
    if k >= r || tau == 0.0 {
        return Ok(Thresholded {
            matrix: a.clone(),
            singular_values: sigma,
        });
    }
    // Split by index: the head keeps its values, the tail is shrunk. Shrinking
    // only the tail keeps the sequence nonincreasing.
    let mut shrunk = sigma.clone();
    for v in shrunk.iter_mut().skip(k) {
        *v = (*v - tau).max(0.0);
    }
    let gains: Vec<f64> = sigma
        .iter()
        .zip(&shrunk)
        .map(|(&s, &t)| if s > 0.0 { t / s } else { 1.0 })
        .collect();
    let mut scaled = vectors.clone();
    for (mut col, g) in scaled.column_iter_mut().zip(&gains) {
        col *= *g;
    }
    let filter = scaled * vectors.transpose();
    let matrix = if wide { filter * a } else { a * filter };
    Ok(Thresholded {
        matrix,
        singular_values: shrunk,
    })
}

/// Proximal map of `tau * f_k`: `U (D_head + S_tau[D_tail]) V^T`.
pub fn tsvt(a: &DMatrix<f64>, tau: f64, k: usize) -> Result<DMatrix<f64>> {
    Ok(tsvt_full(a, tau, k)?.matrix)
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> Result<f64> {
    Ok(singular_values(a)?.first().copied().unwrap_or(0.0))
}
