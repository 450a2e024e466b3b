//! Problem description, solver configuration, and result types.
//!
//! The estimator minimizes, jointly over the denoised matrix `X` and the
//! diagonal noise covariance `Pi = diag(nu_1, ..., nu_N)`,
//!
//! ```text
//! lambda * f_k(X) + 1/2 ||(Y - X) Pi^{-1/2}||_F^2 + D/2 * log det(Pi)
//! ```
//!
//! `Pi` is always stored as its diagonal.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg;

/// Default lower bound on every variance estimate.
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-6;

/// A `D x N` observation matrix, one sample per column.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(invalid("data matrix must have at least one row and one column"));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(invalid("data matrix has non-finite entries"));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    /// `D`.
    pub fn ambient_dim(&self) -> usize {
        self.values.nrows()
    }

    /// `N`.
    pub fn n_samples(&self) -> usize {
        self.values.ncols()
    }

    pub fn spectral_norm(&self) -> Result<f64> {
        linalg::spectral_norm(&self.values)
    }

    /// Keep only the listed columns, in the given order.
    pub fn select_columns(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(invalid("column selection is empty"));
        }
        if let Some(&bad) = keep.iter().find(|&&j| j >= self.n_samples()) {
            return Err(invalid(format!(
                "column index {bad} out of range for {} samples",
                self.n_samples()
            )));
        }
        Ok(Self {
            values: self.values.select_columns(keep),
        })
    }
}

/// Group labels `1..=L` for every sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupAssignment {
    labels: Vec<usize>,
    groups: Vec<Vec<usize>>,
}

impl GroupAssignment {
    /// Every label must be in `1..=L` where `L` is the largest label, and
    /// every group must have at least one member.
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(invalid("group assignment is empty"));
        }
        if labels.contains(&0) {
            return Err(invalid("group labels start at 1"));
        }
        let n_groups = *labels.iter().max().unwrap();
        let mut groups = vec![Vec::new(); n_groups];
        for (i, &g) in labels.iter().enumerate() {
            groups[g - 1].push(i);
        }
        if let Some(empty) = groups.iter().position(Vec::is_empty) {
            return Err(invalid(format!("group {} has no members", empty + 1)));
        }
        Ok(Self { labels, groups })
    }

    /// One group per sample.
    pub fn singletons(n: usize) -> Result<Self> {
        Self::new((1..=n).collect())
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Member sample indices of each group, group `l` at index `l - 1`.
    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }
}

/// How the per-sample noise variances are treated.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseModel {
    /// Variances are given and held fixed.
    Known(Vec<f64>),
    /// Every sample has its own unknown variance.
    UnknownPerSample,
    /// Samples in the same group share one unknown variance.
    UnknownGrouped(GroupAssignment),
}

impl NoiseModel {
    pub fn is_known(&self) -> bool {
        matches!(self, NoiseModel::Known(_))
    }

    pub fn validate(&self, n_samples: usize, variance_floor: f64) -> Result<()> {
        match self {
            NoiseModel::Known(v) => {
                if v.len() != n_samples {
                    return Err(invalid(format!(
                        "{} known variances for {n_samples} samples",
                        v.len()
                    )));
                }
                if let Some((i, bad)) = v
                    .iter()
                    .enumerate()
                    .find(|(_, &x)| !(x.is_finite() && x >= variance_floor))
                {
                    return Err(invalid(format!(
                        "variance {bad} of sample {i} is below the floor {variance_floor}"
                    )));
                }
                Ok(())
            }
            NoiseModel::UnknownPerSample => Ok(()),
            NoiseModel::UnknownGrouped(g) => {
                if g.n_samples() != n_samples {
                    return Err(invalid(format!(
                        "group assignment covers {} samples, data has {n_samples}",
                        g.n_samples()
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Choice of the ADMM penalty `mu`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum MuPolicy {
    /// `mu = multiplier * max_i 1/nu_i`; convergence needs `multiplier > 2`.
    FixedSafe { multiplier: f64 },
    /// A user supplied constant.
    Manual { mu: f64 },
}

impl Default for MuPolicy {
    fn default() -> Self {
        MuPolicy::FixedSafe { multiplier: 2.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Weight of the tail singular value penalty.
    pub lambda: f64,
    /// Number of leading singular values left unpenalized. `0` penalizes
    /// the full nuclear norm.
    pub rank_hint: usize,
    /// Dimension of the returned basis. Defaults to `rank_hint`; required
    /// when `rank_hint` is 0.
    pub output_rank: Option<usize>,
    pub mu_policy: MuPolicy,
    pub variance_floor: f64,
    pub max_iters: usize,
    /// Stop once `||Y - X - Z||_F <= tol_residual * ||Y||_F`.
    pub tol_residual: f64,
    /// Update unknown variances every this many iterations.
    pub variance_update_period: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            rank_hint: 0,
            output_rank: None,
            mu_policy: MuPolicy::default(),
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            max_iters: 2000,
            tol_residual: 1e-7,
            variance_update_period: 1,
        }
    }
}

impl SolverConfig {
    pub fn new(lambda: f64, rank_hint: usize) -> Self {
        Self {
            lambda,
            rank_hint,
            ..Self::default()
        }
    }

    pub fn with_output_rank(mut self, rank: usize) -> Self {
        self.output_rank = Some(rank);
        self
    }

    /// Rank of the basis extracted from the solution.
    pub fn basis_rank(&self) -> Result<usize> {
        match (self.output_rank, self.rank_hint) {
            (Some(r), _) => Ok(r),
            (None, 0) => Err(invalid(
                "output_rank is required when rank_hint is 0 (nuclear norm mode)",
            )),
            (None, k) => Ok(k),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        match self.mu_policy {
            MuPolicy::FixedSafe { multiplier } if !(multiplier > 2.0) => {
                return Err(invalid(format!(
                    "safe mu multiplier must exceed 2, got {multiplier}"
                )))
            }
            MuPolicy::Manual { mu } if !(mu > 0.0 && mu.is_finite()) => {
                return Err(invalid(format!("manual mu must be positive, got {mu}")))
            }
            _ => {}
        }
        if !(self.variance_floor > 0.0) {
            return Err(invalid("variance_floor must be positive"));
        }
        if !(self.tol_residual > 0.0) {
            return Err(invalid("tol_residual must be positive"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be positive"));
        }
        if self.variance_update_period == 0 {
            return Err(invalid("variance_update_period must be positive"));
        }
        if self.output_rank == Some(0) {
            return Err(invalid("output_rank must be positive"));
        }
        self.basis_rank().map(|_| ())
    }
}

/// Iterates of the ADMM loop.
#[derive(Clone, Debug)]
pub struct SolverState {
    /// Denoised estimate.
    pub x: DMatrix<f64>,
    /// Residual block, constrained to `Y - X`.
    pub z: DMatrix<f64>,
    /// Dual variable for `Y = X + Z`.
    pub dual: DMatrix<f64>,
    pub variances: Vec<f64>,
    pub mu: f64,
    pub iter: usize,
    pub primal_residual_history: Vec<f64>,
    pub lagrangian_history: Vec<f64>,
}

/// An estimated subspace together with the denoised data.
#[derive(Clone, Debug)]
pub struct SubspaceEstimate {
    /// `D x k`, orthonormal columns.
    pub basis: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub denoised: DMatrix<f64>,
    pub estimated_variances: Vec<f64>,
}

impl SubspaceEstimate {
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }
}

fn check_variances(variances: &[f64], n: usize) -> Result<()> {
    if variances.len() != n {
        return Err(invalid(format!("{} variances for {n} samples", variances.len())));
    }
    if let Some(bad) = variances.iter().find(|&&v| !(v > 0.0)) {
        return Err(invalid(format!("variances must be positive, got {bad}")));
    }
    Ok(())
}

/// `1/2 sum_i ||r_i||^2 / nu_i` over the columns of `residual`.
pub(crate) fn weighted_residual(residual: &DMatrix<f64>, variances: &[f64]) -> f64 {
    residual
        .column_iter()
        .zip(variances)
        .map(|(c, &v)| c.norm_squared() / v)
        .sum::<f64>()
        * 0.5
}

/// `D/2 * log det(Pi)`.
pub(crate) fn log_det_term(d: usize, variances: &[f64]) -> f64 {
    0.5 * d as f64 * variances.iter().map(|v| v.ln()).sum::<f64>()
}

/// Objective value at `(X, Pi)`, with constants of the Gaussian likelihood
/// dropped.
pub fn cost(
    y: &DataMatrix,
    x: &DMatrix<f64>,
    variances: &[f64],
    lambda: f64,
    k: usize,
) -> Result<f64> {
    check_variances(variances, y.n_samples())?;
    if x.shape() != y.values().shape() {
        return Err(invalid("X and Y shapes differ"));
    }
    let tail = if lambda == 0.0 {
        0.0
    } else {
        lambda * linalg::tail_sum(x, k)?
    };
    let residual = y.values() - x;
    Ok(tail + weighted_residual(&residual, variances) + log_det_term(y.ambient_dim(), variances))
}

/// Augmented Lagrangian at the current iterate, using `state.mu`.
pub fn augmented_lagrangian(
    state: &SolverState,
    y: &DataMatrix,
    config: &SolverConfig,
) -> Result<f64> {
    let tail = linalg::tail_sum(&state.x, config.rank_hint)?;
    Ok(lagrangian_with_tail(state, y, config.lambda, tail))
}

/// Augmented Lagrangian given a precomputed `f_k(X)`.
pub(crate) fn lagrangian_with_tail(
    state: &SolverState,
    y: &DataMatrix,
    lambda: f64,
    tail: f64,
) -> f64 {
    let constraint = y.values() - &state.x - &state.z;
    lambda * tail
        + weighted_residual(&state.z, &state.variances)
        + log_det_term(y.ambient_dim(), &state.variances)
        + state.dual.dot(&constraint)
        + 0.5 * state.mu * constraint.norm_squared()
}
