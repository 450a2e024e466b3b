//! Comparison estimators: PCA, PCA on a subset of samples, weighted PCA with
//! known variances, and robust PCA.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, shrink};
use crate::model::{DataMatrix, SubspaceEstimate};

fn check_rank(k: usize, d: usize, n: usize) -> Result<()> {
    if k == 0 || k > d.min(n) {
        return Err(invalid(format!(
            "rank {k} must be in 1..=min(D, N) = {}",
            d.min(n)
        )));
    }
    Ok(())
}

/// Per-sample residual energy `||y_i - x_i||^2 / D`.
fn residual_variances(y: &DMatrix<f64>, x: &DMatrix<f64>) -> Vec<f64> {
    let d = y.nrows() as f64;
    (y - x).column_iter().map(|c| c.norm_squared() / d).collect()
}

/// Leading `k` left singular vectors of `Y`.
pub fn pca(y: &DataMatrix, k: usize) -> Result<SubspaceEstimate> {
    check_rank(k, y.ambient_dim(), y.n_samples())?;
    let svd = linalg::thin_svd(y.values())?;
    let denoised = svd.truncate(k);
    Ok(SubspaceEstimate {
        basis: svd.leading_left(k),
        singular_values: svd.singular_values.iter().take(k).copied().collect(),
        estimated_variances: residual_variances(y.values(), &denoised),
        denoised,
    })
}

/// PCA on the columns listed in `keep` only.
pub fn pca_subset(y: &DataMatrix, keep: &[usize], k: usize) -> Result<SubspaceEstimate> {
    let sub = y.select_columns(keep)?;
    if k > y.ambient_dim().min(keep.len()) {
        return Err(invalid(format!(
            "rank {k} exceeds min(D, |keep|) = {}",
            y.ambient_dim().min(keep.len())
        )));
    }
    pca(&sub, k)
}

/// Weighted PCA: leading eigenvectors of `sum_i y_i y_i^T / nu_i`, computed
/// as the left singular vectors of `Y Pi^{-1/2}`.
pub fn wpca(y: &DataMatrix, variances: &[f64], k: usize) -> Result<SubspaceEstimate> {
    check_rank(k, y.ambient_dim(), y.n_samples())?;
    if variances.len() != y.n_samples() {
        return Err(invalid(format!(
            "{} variances for {} samples",
            variances.len(),
            y.n_samples()
        )));
    }
    if let Some(bad) = variances.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(invalid(format!("variances must be positive, got {bad}")));
    }
    let scale = DVector::from_iterator(variances.len(), variances.iter().map(|v| v.sqrt()));
    let mut weighted = y.values().clone();
    for (mut col, s) in weighted.column_iter_mut().zip(scale.iter()) {
        col /= *s;
    }
    let svd = linalg::thin_svd(&weighted)?;
    let mut denoised = svd.truncate(k);
    for (mut col, s) in denoised.column_iter_mut().zip(scale.iter()) {
        col *= *s;
    }
    Ok(SubspaceEstimate {
        basis: svd.leading_left(k),
        singular_values: svd.singular_values.iter().take(k).copied().collect(),
        denoised,
        estimated_variances: variances.to_vec(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RpcaOptions {
    /// Stop once `||Y - L - S||_F <= tol * ||Y||_F`.
    pub tol: f64,
    pub max_iters: usize,
    /// Growth factor of the penalty per iteration.
    pub rho: f64,
}

impl Default for RpcaOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iters: 1000,
            rho: 1.5,
        }
    }
}

/// `Y = L + S` split returned by [`rpca`].
#[derive(Clone, Debug)]
pub struct RpcaDecomposition {
    pub low_rank: DMatrix<f64>,
    pub sparse: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub sparsity_weight: f64,
}

impl RpcaDecomposition {
    /// Leading `k` left singular vectors of the low-rank part.
    pub fn subspace(&self, k: usize) -> Result<SubspaceEstimate> {
        let (d, n) = self.low_rank.shape();
        check_rank(k, d, n)?;
        let svd = linalg::thin_svd(&self.low_rank)?;
        Ok(SubspaceEstimate {
            basis: svd.leading_left(k),
            singular_values: svd.singular_values.iter().take(k).copied().collect(),
            estimated_variances: residual_variances(&(&self.low_rank + &self.sparse), &self.low_rank),
            denoised: self.low_rank.clone(),
        })
    }
}

/// The usual sparsity weight `1 / sqrt(max(D, N))`.
pub fn default_sparsity_weight(d: usize, n: usize) -> f64 {
    1.0 / (d.max(n) as f64).sqrt()
}

/// Robust PCA, `min ||L||_* + w ||S||_1  s.t.  Y = L + S`, by the inexact
/// augmented Lagrangian method with an increasing penalty.
pub fn rpca(y: &DataMatrix, sparsity_weight: f64, opts: &RpcaOptions) -> Result<RpcaDecomposition> {
    if !(sparsity_weight > 0.0 && sparsity_weight.is_finite()) {
        return Err(invalid(format!(
            "sparsity weight must be positive, got {sparsity_weight}"
        )));
    }
    let data = y.values();
    let (d, n) = data.shape();
    let data_norm = data.norm();
    let spectral = linalg::spectral_norm(data)?;
    if data_norm == 0.0 {
        return Ok(RpcaDecomposition {
            low_rank: DMatrix::zeros(d, n),
            sparse: DMatrix::zeros(d, n),
            iterations: 0,
            converged: true,
            sparsity_weight,
        });
    }
    let inf_norm = data.amax() / sparsity_weight;
    let mut dual = data / spectral.max(inf_norm);
    let mut mu = 1.25 / spectral;
    let mu_max = mu * 1e7;

    let mut low_rank = DMatrix::zeros(d, n);
    let mut sparse = DMatrix::zeros(d, n);
    for iter in 1..=opts.max_iters {
        let target = data - &low_rank + &dual / mu;
        sparse = target.map(|v| shrink(v, sparsity_weight / mu));
        let target = data - &sparse + &dual / mu;
        low_rank = linalg::tsvt(&target, 1.0 / mu, 0).map_err(|e| match e {
            Error::SvdNoConvergence { .. } => Error::SvdNoConvergence {
                iteration: Some(iter),
            },
            other => other,
        })?;
        let gap = data - &low_rank - &sparse;
        dual += &gap * mu;
        mu = (mu * opts.rho).min(mu_max);
        let residual = gap.norm();
        if !residual.is_finite() {
            return Err(Error::Diverged { iteration: iter });
        }
        if residual <= opts.tol * data_norm {
            return Ok(RpcaDecomposition {
                low_rank,
                sparse,
                iterations: iter,
                converged: true,
                sparsity_weight,
            });
        }
    }
    Ok(RpcaDecomposition {
        low_rank,
        sparse,
        iterations: opts.max_iters,
        converged: false,
        sparsity_weight,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::affinity_error;
    use crate::synth::{generate, SynthSpec};

    fn low_rank_instance() -> (DataMatrix, DMatrix<f64>) {
        let spec = SynthSpec {
            group_variances: [1e-30, 1e-30],
            group_sizes: [20, 20],
            ambient_dim: 30,
            subspace_dim: 3,
            ..SynthSpec::default()
        };
        let inst = generate(&spec).unwrap();
        (DataMatrix::new(inst.clean).unwrap(), inst.basis)
    }

    fn orthonormal(u: &DMatrix<f64>) -> bool {
        let k = u.ncols();
        (u.transpose() * u - DMatrix::<f64>::identity(k, k)).amax() < 1e-8
    }

    #[test]
    fn pca_recovers_exact_low_rank() {
        let (y, u) = low_rank_instance();
        let est = pca(&y, 3).unwrap();
        assert!(orthonormal(&est.basis));
        assert!(affinity_error(&u, &est.basis).unwrap() < 1e-8);
    }

    #[test]
    fn pca_full_rank_identity() {
        let y = DataMatrix::new(DMatrix::identity(4, 4)).unwrap();
        let est = pca(&y, 4).unwrap();
        let err = affinity_error(&DMatrix::identity(4, 4), &est.basis).unwrap();
        assert!(err < 1e-12);
        assert!(pca(&y, 5).is_err());
        assert!(pca(&y, 0).is_err());
    }

    #[test]
    fn pca_subset_all_columns_matches_pca() {
        let inst = generate(&SynthSpec::default()).unwrap();
        let all: Vec<usize> = (0..inst.data.n_samples()).collect();
        let a = pca(&inst.data, 10).unwrap();
        let b = pca_subset(&inst.data, &all, 10).unwrap();
        assert!(affinity_error(&a.basis, &b.basis).unwrap() < 1e-10);
    }

    #[test]
    fn pca_subset_noiseless_good_points() {
        let spec = SynthSpec {
            group_variances: [1e-30, 100.0],
            ..SynthSpec::default()
        };
        let inst = generate(&spec).unwrap();
        let good = inst.group_members(1);
        let est = pca_subset(&inst.data, &good, 10).unwrap();
        assert!(affinity_error(&inst.basis, &est.basis).unwrap() < 1e-8);
        assert!(pca_subset(&inst.data, &good[..5], 10).is_err());
        assert!(pca_subset(&inst.data, &[], 1).is_err());
    }

    #[test]
    fn wpca_uniform_weights_is_pca() {
        let inst = generate(&SynthSpec::default()).unwrap();
        let a = pca(&inst.data, 10).unwrap();
        let b = wpca(&inst.data, &vec![3.0; inst.data.n_samples()], 10).unwrap();
        assert!(orthonormal(&b.basis));
        assert!(affinity_error(&a.basis, &b.basis).unwrap() < 1e-8);
    }

    #[test]
    fn wpca_vanishing_weight_drops_sample() {
        let inst = generate(&SynthSpec::default().with_seed(4)).unwrap();
        let n = inst.data.n_samples();
        let mut vars = vec![1.0; n];
        vars[n - 1] = 1e12;
        let w = wpca(&inst.data, &vars, 10).unwrap();
        let keep: Vec<usize> = (0..n - 1).collect();
        let p = pca_subset(&inst.data, &keep, 10).unwrap();
        assert!(affinity_error(&p.basis, &w.basis).unwrap() <= 1e-4);
    }

    #[test]
    fn wpca_rejects_bad_variances() {
        let inst = generate(&SynthSpec::default()).unwrap();
        assert!(wpca(&inst.data, &[1.0; 3], 2).is_err());
        let mut v = vec![1.0; inst.data.n_samples()];
        v[0] = 0.0;
        assert!(wpca(&inst.data, &v, 2).is_err());
    }

    #[test]
    fn rpca_exact_low_rank_has_no_sparse_part() {
        let (y, u) = low_rank_instance();
        let w = default_sparsity_weight(y.ambient_dim(), y.n_samples());
        let out = rpca(&y, w, &RpcaOptions::default()).unwrap();
        assert!(out.converged);
        let scale = y.values().norm();
        assert!(out.sparse.norm() <= 1e-5 * scale, "{}", out.sparse.norm() / scale);
        assert!((y.values() - &out.low_rank - &out.sparse).norm() <= 1e-7 * scale);
        let est = out.subspace(3).unwrap();
        assert!(orthonormal(&est.basis));
        assert!(affinity_error(&u, &est.basis).unwrap() < 1e-6);
    }

    #[test]
    fn rpca_captures_a_spike() {
        let (y, _) = low_rank_instance();
        let mut m = y.into_inner();
        m[(7, 11)] += 1e3;
        let y = DataMatrix::new(m).unwrap();
        let w = default_sparsity_weight(y.ambient_dim(), y.n_samples());
        let out = rpca(&y, w, &RpcaOptions::default()).unwrap();
        assert!(out.sparse[(7, 11)].abs() >= 0.9e3, "{}", out.sparse[(7, 11)]);
    }

    #[test]
    fn rpca_rejects_bad_weight() {
        let (y, _) = low_rank_instance();
        assert!(rpca(&y, 0.0, &RpcaOptions::default()).is_err());
        assert!(rpca(&y, f64::NAN, &RpcaOptions::default()).is_err());
    }
}
