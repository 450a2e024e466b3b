//! Subspace affinity error and variance-recovery diagnostics.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};

/// Orthonormality tolerance accepted at the metric boundary.
pub const ORTHONORMAL_TOL: f64 = 1e-6;

fn check_orthonormal(u: &DMatrix<f64>, name: &str) -> Result<()> {
    let k = u.ncols();
    let gram = u.transpose() * u;
    let dev = (gram - DMatrix::<f64>::identity(k, k)).amax();
    if dev > ORTHONORMAL_TOL {
        return Err(invalid(format!(
            "{name} is not orthonormal (max |U^T U - I| = {dev:.3e})"
        )));
    }
    Ok(())
}

/// `||U U^T - V V^T||_F / ||U U^T||_F`, in `[0, sqrt(2)]` for equal ranks.
///
/// Depends only on the spans, so it is invariant under `U -> U Q` for any
/// orthogonal `Q`.
pub fn affinity_error(u_true: &DMatrix<f64>, u_est: &DMatrix<f64>) -> Result<f64> {
    if u_true.nrows() != u_est.nrows() {
        return Err(invalid(format!(
            "bases live in different ambient dimensions ({} vs {})",
            u_true.nrows(),
            u_est.nrows()
        )));
    }
    if u_true.ncols() == 0 {
        return Err(invalid("reference basis is empty"));
    }
    check_orthonormal(u_true, "reference basis")?;
    check_orthonormal(u_est, "estimated basis")?;
    // The difference of projectors is formed explicitly; the cheaper
    // k + k - 2||U^T V||^2 form loses all precision near zero.
    let p_true = u_true * u_true.transpose();
    let p_est = u_est * u_est.transpose();
    Ok((&p_true - p_est).norm() / p_true.norm())
}

/// Median over samples of `|nu_hat - nu| / nu`.
pub fn variance_recovery_error(true_vars: &[f64], est_vars: &[f64]) -> Result<f64> {
    if true_vars.len() != est_vars.len() {
        return Err(invalid(format!(
            "length mismatch: {} true vs {} estimated variances",
            true_vars.len(),
            est_vars.len()
        )));
    }
    if true_vars.is_empty() {
        return Err(invalid("no variances to compare"));
    }
    let mut rel: Vec<f64> = true_vars
        .iter()
        .zip(est_vars)
        .map(|(&t, &e)| (e - t).abs() / t)
        .collect();
    rel.sort_by(f64::total_cmp);
    let n = rel.len();
    Ok(if n % 2 == 1 {
        rel[n / 2]
    } else {
        0.5 * (rel[n / 2 - 1] + rel[n / 2])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn unit(d: usize, i: usize) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(d, 1);
        e[(i, 0)] = 1.0;
        e
    }

    #[test]
    fn identical_bases() {
        let u = dmatrix![1.0, 0.0; 0.0, 1.0; 0.0, 0.0];
        assert_eq!(affinity_error(&u, &u).unwrap(), 0.0);
    }

    #[test]
    fn orthogonal_lines() {
        let err = affinity_error(&unit(4, 0), &unit(4, 1)).unwrap();
        assert!((err - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rotation_invariant() {
        let c = 0.6;
        let s = 0.8;
        let u = dmatrix![1.0, 0.0; 0.0, 1.0; 0.0, 0.0; 0.0, 0.0];
        let q = dmatrix![c, -s; s, c];
        assert!(affinity_error(&u, &(&u * q)).unwrap() < 1e-12);
    }

    #[test]
    fn rejects_non_orthonormal() {
        let u = unit(3, 0);
        let bad = u.clone() * 1.1;
        assert!(affinity_error(&u, &bad).is_err());
        assert!(affinity_error(&bad, &u).is_err());
        assert!(affinity_error(&u, &unit(4, 0)).is_err());
    }

    #[test]
    fn projector_norm_is_sqrt_rank() {
        let u = dmatrix![1.0, 0.0, 0.0; 0.0, 1.0, 0.0; 0.0, 0.0, 1.0; 0.0, 0.0, 0.0];
        let p: DMatrix<f64> = &u * u.transpose();
        assert!((p.norm() - 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn variance_recovery_examples() {
        let t = vec![1.0, 4.0, 0.5];
        assert_eq!(variance_recovery_error(&t, &t).unwrap(), 0.0);
        let twice: Vec<f64> = t.iter().map(|v| 2.0 * v).collect();
        assert!((variance_recovery_error(&t, &twice).unwrap() - 1.0).abs() < 1e-15);
        assert!(variance_recovery_error(&t, &[1.0]).is_err());
        // even count: mean of the middle pair
        let e = variance_recovery_error(&[1.0; 4], &[1.0, 1.1, 1.3, 2.0]).unwrap();
        assert!((e - 0.2).abs() < 1e-12);
    }
}
