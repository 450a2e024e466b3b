//! The ADMM iteration for heteroscedastic low-rank estimation.
//!
//! With the splitting `Z = Y - X` the augmented Lagrangian is
//!
//! ```text
//! L(X, Z, Lambda, Pi) = lambda f_k(X) + 1/2 ||Z Pi^{-1/2}||_F^2 + D/2 log det Pi
//!                     + <Lambda, Y - X - Z> + mu/2 ||Y - X - Z||_F^2
//! ```
//!
//! and one pass updates `Z`, then `X`, then `Lambda`, each block using the
//! freshest values of the others. In the unknown-variance modes the
//! variances are then re-estimated from the residual and `mu` is refreshed.

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::model::{
    lagrangian_with_tail, DataMatrix, GroupAssignment, MuPolicy, NoiseModel, SolverConfig,
    SolverState, SubspaceEstimate,
};

/// `Z = [mu (Y - X) + Lambda] (Pi^{-1} + mu I)^{-1}`. `Pi` is diagonal, so
/// column `i` is scaled by `1 / (1/nu_i + mu)`.
pub fn update_z(
    x: &DMatrix<f64>,
    dual: &DMatrix<f64>,
    y: &DMatrix<f64>,
    variances: &[f64],
    mu: f64,
) -> DMatrix<f64> {
    let mut z = (y - x) * mu + dual;
    for (mut col, &v) in z.column_iter_mut().zip(variances) {
        col /= 1.0 / v + mu;
    }
    z
}

/// `X = TSVT(Y - Z + Lambda/mu, lambda/mu, k)`.
pub fn update_x(
    z: &DMatrix<f64>,
    dual: &DMatrix<f64>,
    y: &DMatrix<f64>,
    mu: f64,
    lambda: f64,
    k: usize,
) -> Result<DMatrix<f64>> {
    Ok(update_x_full(z, dual, y, mu, lambda, k)?.matrix)
}

fn update_x_full(
    z: &DMatrix<f64>,
    dual: &DMatrix<f64>,
    y: &DMatrix<f64>,
    mu: f64,
    lambda: f64,
    k: usize,
) -> Result<linalg::Thresholded> {
    if !(mu > 0.0) {
        return Err(invalid("mu must be positive"));
    }
    let target = y - z + dual / mu;
    linalg::tsvt_full(&target, lambda / mu, k)
}

/// `Lambda + mu (Y - X - Z)`.
pub fn update_dual(
    dual: &DMatrix<f64>,
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    mu: f64,
) -> DMatrix<f64> {
    dual + (y - x - z) * mu
}

/// `nu_i = max(||z_i||^2 / D, floor)`, the diagonal of `Z^T Z / D`.
pub fn update_variances_per_sample(z: &DMatrix<f64>, floor: f64) -> Vec<f64> {
    let d = z.nrows() as f64;
    z.column_iter()
        .map(|c| (c.norm_squared() / d).max(floor))
        .collect()
}

/// `nu_l = max(||Z_l||_F^2 / (D n_l), floor)` for each group, broadcast
/// back to the members.
pub fn update_variances_grouped(
    z: &DMatrix<f64>,
    groups: &GroupAssignment,
    floor: f64,
) -> Result<Vec<f64>> {
    if groups.n_samples() != z.ncols() {
        return Err(invalid(format!(
            "group assignment covers {} samples, residual has {}",
            groups.n_samples(),
            z.ncols()
        )));
    }
    let d = z.nrows() as f64;
    let mut out = vec![0.0; z.ncols()];
    for members in groups.groups() {
        if members.is_empty() {
            return Err(invalid("empty group"));
        }
        let energy: f64 = members.iter().map(|&i| z.column(i).norm_squared()).sum();
        let nu = (energy / (d * members.len() as f64)).max(floor);
        for &i in members {
            out[i] = nu;
        }
    }
    Ok(out)
}

/// Penalty parameter for the current variances. The safe policy tracks the
/// Lipschitz constant `max_i 1/nu_i` of the smooth block.
pub fn choose_mu(variances: &[f64], policy: MuPolicy) -> f64 {
    match policy {
        MuPolicy::FixedSafe { multiplier } => multiplier * lipschitz(variances),
        MuPolicy::Manual { mu } => mu,
    }
}

fn lipschitz(variances: &[f64]) -> f64 {
    variances.iter().map(|v| 1.0 / v).fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub estimate: SubspaceEstimate,
    pub iterations_used: usize,
    pub final_primal_residual: f64,
    pub converged: bool,
    pub residual_history: Vec<f64>,
    pub lagrangian_history: Vec<f64>,
    /// Penalty in effect at termination.
    pub mu: f64,
    /// Non-fatal contract violations, e.g. a manual `mu` below the bound.
    pub warnings: Vec<String>,
}

/// An ADMM run that can be advanced one pass at a time.
#[derive(Clone, Debug)]
pub struct Alpcah<'a> {
    y: &'a DataMatrix,
    noise: &'a NoiseModel,
    config: SolverConfig,
    state: SolverState,
    y_norm: f64,
    warnings: Vec<String>,
}

impl<'a> Alpcah<'a> {
    /// Starts from the feasible point `X = Y`, `Z = 0`, `Lambda = 0` with
    /// unit variances when they are unknown.
    pub fn new(y: &'a DataMatrix, noise: &'a NoiseModel, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        noise.validate(y.n_samples(), config.variance_floor)?;
        let k = config.basis_rank()?;
        if k > y.ambient_dim().min(y.n_samples()) {
            return Err(invalid(format!(
                "basis rank {k} exceeds min(D, N) = {}",
                y.ambient_dim().min(y.n_samples())
            )));
        }
        let (d, n) = (y.ambient_dim(), y.n_samples());
        let variances = match noise {
            NoiseModel::Known(v) => v.clone(),
            _ => vec![1.0; n],
        };
        let mu = choose_mu(&variances, config.mu_policy);
        let mut warnings = Vec::new();
        if let (MuPolicy::Manual { mu }, true) = (config.mu_policy, noise.is_known()) {
            let bound = 2.0 * lipschitz(&variances);
            if mu <= bound {
                warnings.push(format!(
                    "manual mu = {mu} does not exceed 2 * ||Pi^-1||_2 = {bound}; convergence is not guaranteed"
                ));
            }
        }
        let state = SolverState {
            x: y.values().clone(),
            z: DMatrix::zeros(d, n),
            dual: DMatrix::zeros(d, n),
            variances,
            mu,
            iter: 0,
            primal_residual_history: Vec::new(),
            lagrangian_history: Vec::new(),
        };
        Ok(Self {
            y,
            noise,
            y_norm: y.values().norm(),
            config,
            state,
            warnings,
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// One full pass. Returns the primal residual `||Y - X - Z||_F`.
    pub fn step(&mut self) -> Result<f64> {
        let y = self.y.values();
        let iteration = self.state.iter + 1;
        let s = &mut self.state;

        s.z = update_z(&s.x, &s.dual, y, &s.variances, s.mu);
        let thresholded = update_x_full(
            &s.z,
            &s.dual,
            y,
            s.mu,
            self.config.lambda,
            self.config.rank_hint,
        )
        .map_err(|e| match e {
            Error::SvdNoConvergence { .. } => Error::SvdNoConvergence {
                iteration: Some(iteration),
            },
            Error::InvalidArgument(_) if !s.mu.is_finite() => Error::Diverged { iteration },
            other => other,
        })?;
        s.x = thresholded.matrix;
        s.dual = update_dual(&s.dual, y, &s.x, &s.z, s.mu);

        if !self.noise.is_known() && iteration % self.config.variance_update_period == 0 {
            let floor = self.config.variance_floor;
            let fit = y - &s.x;
            s.variances = match self.noise {
                NoiseModel::UnknownGrouped(groups) => update_variances_grouped(&fit, groups, floor)?,
                _ => update_variances_per_sample(&fit, floor),
            };
            s.mu = choose_mu(&s.variances, self.config.mu_policy);
        }

        let residual = (y - &s.x - &s.z).norm();
        if !residual.is_finite() || !s.dual.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { iteration });
        }
        let tail = linalg::tail_of(&thresholded.singular_values, self.config.rank_hint);
        let lagrangian = lagrangian_with_tail(s, self.y, self.config.lambda, tail);
        s.iter = iteration;
        s.primal_residual_history.push(residual);
        s.lagrangian_history.push(lagrangian);
        Ok(residual)
    }

    pub fn is_converged(&self) -> bool {
        self.state
            .primal_residual_history
            .last()
            .is_some_and(|&r| r <= self.config.tol_residual * self.y_norm)
    }

    /// Iterate to convergence or `max_iters` and extract the subspace.
    pub fn run(mut self) -> Result<SolveReport> {
        while self.state.iter < self.config.max_iters && !self.is_converged() {
            self.step()?;
        }
        self.finish()
    }

    /// Extract the leading left singular vectors of the current `X`.
    pub fn finish(self) -> Result<SolveReport> {
        let k = self.config.basis_rank()?;
        let converged = self.is_converged();
        let svd = linalg::thin_svd(&self.state.x).map_err(|e| match e {
            Error::SvdNoConvergence { .. } => Error::SvdNoConvergence {
                iteration: Some(self.state.iter),
            },
            other => other,
        })?;
        let s = self.state;
        let estimate = SubspaceEstimate {
            basis: svd.leading_left(k),
            singular_values: svd.singular_values.iter().take(k).copied().collect(),
            denoised: s.x,
            estimated_variances: s.variances,
        };
        Ok(SolveReport {
            estimate,
            iterations_used: s.iter,
            final_primal_residual: s.primal_residual_history.last().copied().unwrap_or(0.0),
            converged,
            residual_history: s.primal_residual_history,
            lagrangian_history: s.lagrangian_history,
            mu: s.mu,
            warnings: self.warnings,
        })
    }
}

/// Run the estimator to completion.
pub fn solve(y: &DataMatrix, noise: &NoiseModel, config: &SolverConfig) -> Result<SolveReport> {
    Alpcah::new(y, noise, config.clone())?.run()
}
