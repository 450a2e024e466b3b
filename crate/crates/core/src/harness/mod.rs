//! Experiment driver: seeded Monte Carlo sweeps over point and variance
//! ratios, regularization curves, cross-validation of the regularization
//! weight, and CSV artifacts.
//!
//! Every synthetic instance is generated from a seed derived from the base
//! seed, the cell coordinates and the trial index, so a cell produces the
//! same data regardless of which grid it belongs to or which worker ran it.

mod config;
mod curve;
mod cv;
mod io;
mod sweep;

pub use config::{CurveSettings, CvSettings, ExperimentConfig, LambdaGrid, SolverSettings};
pub use curve::{run_lambda_curve, CurveRow};
pub use cv::{cross_validate_lambda, run_cv_matrix, CvCell, CvMatrix, CvOutcome, CvScore};
pub use io::{
    import_external_results, merge_rows, read_sweep_csv, write_curve_csv, write_cv_matrix_csv,
    write_ratios_csv, write_sweep_csv, SWEEP_COLUMNS,
};
pub use sweep::{compute_ratios, run_sweep, RatioRow, SweepGrid, SweepResult, SweepRow};

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::error::{invalid, Result};
use crate::metrics::affinity_error;
use crate::model::NoiseModel;
use crate::solver;
use crate::synth::{SynthInstance, SynthSpec};

/// How the noise variances are handed to the estimator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NoiseMode {
    Known,
    PerSample,
    Grouped,
}

/// An estimator the harness knows how to run.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Pca,
    /// PCA on the group-1 samples only.
    PcaGood,
    /// Weighted PCA with the true variances.
    Wpca,
    Rpca,
    /// `nuclear` selects `k = 0` in the penalty; the basis rank stays the
    /// subspace dimension.
    Alpcah { noise: NoiseMode, nuclear: bool },
    /// Results produced elsewhere and imported from CSV.
    External(String),
}

impl Method {
    pub fn is_alpcah(&self) -> bool {
        matches!(self, Method::Alpcah { .. })
    }

    /// Whether the method takes a regularization weight.
    pub fn is_regularized(&self) -> bool {
        matches!(self, Method::Alpcah { .. } | Method::Rpca)
    }

    pub fn default_lambda(&self) -> LambdaPolicy {
        match self {
            Method::Alpcah { noise: NoiseMode::Known, .. } => LambdaPolicy::Relative(2.0),
            Method::Alpcah { .. } => LambdaPolicy::CrossValidated,
            Method::Rpca => LambdaPolicy::Relative(1.0),
            _ => LambdaPolicy::None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Pca => f.write_str("pca"),
            Method::PcaGood => f.write_str("pca-good"),
            Method::Wpca => f.write_str("wpca"),
            Method::Rpca => f.write_str("rpca"),
            Method::Alpcah { noise, nuclear } => {
                let mode = match noise {
                    NoiseMode::Known => "known",
                    NoiseMode::PerSample => "unknown",
                    NoiseMode::Grouped => "grouped",
                };
                write!(f, "alpcah-{mode}{}", if *nuclear { "-k0" } else { "" })
            }
            Method::External(name) => write!(f, "external:{name}"),
        }
    }
}

impl FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(name) = s.strip_prefix("external:") {
            if name.is_empty() {
                return Err(invalid("external method needs a name"));
            }
            return Ok(Method::External(name.to_string()));
        }
        let (body, nuclear) = match s.strip_suffix("-k0") {
            Some(b) => (b, true),
            None => (s, false),
        };
        let alpcah = |noise| Method::Alpcah { noise, nuclear };
        let m = match body {
            "pca" => Method::Pca,
            "pca-good" => Method::PcaGood,
            "wpca" => Method::Wpca,
            "rpca" => Method::Rpca,
            "alpcah-known" => alpcah(NoiseMode::Known),
            "alpcah-unknown" => alpcah(NoiseMode::PerSample),
            "alpcah-grouped" => alpcah(NoiseMode::Grouped),
            _ => return Err(invalid(format!("unknown method {s:?}"))),
        };
        if nuclear && !m.is_alpcah() {
            return Err(invalid(format!("unknown method {s:?}")));
        }
        Ok(m)
    }
}

impl TryFrom<String> for Method {
    type Error = crate::Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

/// How a method's regularization weight is chosen.
///
/// Relative weights are multiples of a per-instance scale: `||Y||_2` for
/// the ALPCAH variants and `1/sqrt(max(D, N))` for robust PCA.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaPolicy {
    /// Not regularized.
    None,
    Fixed(f64),
    Relative(f64),
    /// Picked per cell on fresh validation instances.
    CrossValidated,
}

/// A method together with its weight policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub method: Method,
    #[serde(default)]
    pub lambda: Option<LambdaPolicy>,
}

impl MethodSpec {
    pub fn new(method: Method) -> Self {
        Self { method, lambda: None }
    }

    pub fn with_lambda(method: Method, lambda: LambdaPolicy) -> Self {
        Self {
            method,
            lambda: Some(lambda),
        }
    }

    pub fn policy(&self) -> LambdaPolicy {
        self.lambda.unwrap_or_else(|| self.method.default_lambda())
    }

    pub fn validate(&self) -> Result<()> {
        let policy = self.policy();
        match (self.method.is_regularized(), policy) {
            (_, _) if matches!(self.method, Method::External(_)) => {
                Err(invalid(format!("{} cannot be run, only imported", self.method)))
            }
            (false, LambdaPolicy::None) => Ok(()),
            (false, _) => Err(invalid(format!("{} takes no regularization weight", self.method))),
            (true, LambdaPolicy::None) => Err(invalid(format!("{} needs a regularization weight", self.method))),
            (true, LambdaPolicy::Fixed(v) | LambdaPolicy::Relative(v)) if !(v > 0.0 && v.is_finite()) => {
                Err(invalid(format!("{}: weight must be positive, got {v}", self.method)))
            }
            _ => Ok(()),
        }
    }
}

/// The concrete weight used for one run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaChoice {
    None,
    Absolute(f64),
    /// Multiple of the method's per-instance scale.
    Relative(f64),
}

/// Per-instance scale of relative weights.
pub fn lambda_scale(method: &Method, instance: &SynthInstance) -> Result<f64> {
    let y = &instance.data;
    match method {
        Method::Rpca => Ok(baselines::default_sparsity_weight(y.ambient_dim(), y.n_samples())),
        _ => y.spectral_norm(),
    }
}

/// Outcome of one estimator run on one instance.
#[derive(Clone, Debug)]
pub struct MethodRun {
    pub basis: DMatrix<f64>,
    pub affinity_error: f64,
    pub lambda_used: Option<f64>,
    pub iterations: usize,
    pub wall_time: f64,
    pub estimated_variances: Vec<f64>,
}

/// Run `method` on `instance` and score it against the true basis.
pub fn run_method(
    method: &Method,
    instance: &SynthInstance,
    choice: LambdaChoice,
    rank: usize,
    settings: &SolverSettings,
) -> Result<MethodRun> {
    let start = Instant::now();
    let lambda = match choice {
        LambdaChoice::None => None,
        LambdaChoice::Absolute(v) => Some(v),
        LambdaChoice::Relative(c) => Some(c * lambda_scale(method, instance)?),
    };
    if method.is_regularized() != lambda.is_some() {
        return Err(invalid(format!(
            "{method}: regularization weight {}",
            if lambda.is_some() { "not accepted" } else { "missing" }
        )));
    }
    let y = &instance.data;
    let (estimate, iterations) = match method {
        Method::Pca => (baselines::pca(y, rank)?, 0),
        Method::PcaGood => (baselines::pca_subset(y, &instance.group_members(1), rank)?, 0),
        Method::Wpca => (baselines::wpca(y, &instance.variances, rank)?, 0),
        Method::Rpca => {
            let out = baselines::rpca(y, lambda.unwrap(), &settings.rpca_options())?;
            (out.subspace(rank)?, out.iterations)
        }
        Method::Alpcah { noise, nuclear } => {
            let noise = match noise {
                NoiseMode::Known => NoiseModel::Known(instance.variances.clone()),
                NoiseMode::PerSample => NoiseModel::UnknownPerSample,
                NoiseMode::Grouped => NoiseModel::UnknownGrouped(instance.groups()?),
            };
            let k = if *nuclear { 0 } else { rank };
            let config = settings.solver_config(lambda.unwrap(), k).with_output_rank(rank);
            let report = solver::solve(y, &noise, &config)?;
            (report.estimate, report.iterations_used)
        }
        Method::External(name) => {
            return Err(invalid(format!("external method {name} cannot be run")))
        }
    };
    let err = affinity_error(&instance.basis, &estimate.basis)?;
    Ok(MethodRun {
        basis: estimate.basis,
        affinity_error: err,
        lambda_used: lambda,
        iterations,
        wall_time: start.elapsed().as_secs_f64(),
        estimated_variances: estimate.estimated_variances,
    })
}

/// Stream tags mixed into derived seeds.
pub(crate) mod stream {
    pub const TRIAL: u64 = 0x7472_6961;
    pub const VALIDATION: u64 = 0x7661_6c69;
    pub const CURVE: u64 = 0x6375_7276;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive hash of `base` and `parts`.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Seed of trial `trial` in the cell at the given ratios.
pub fn trial_seed(base: u64, point_ratio: f64, variance_ratio: f64, trial: usize) -> u64 {
    derive_seed(
        base,
        &[stream::TRIAL, point_ratio.to_bits(), variance_ratio.to_bits(), trial as u64],
    )
}

/// Seed of validation instance `index` for the cell at the given ratios.
pub fn validation_seed(base: u64, point_ratio: f64, variance_ratio: f64, index: usize) -> u64 {
    derive_seed(
        base,
        &[stream::VALIDATION, point_ratio.to_bits(), variance_ratio.to_bits(), index as u64],
    )
}

/// Synthetic spec of a grid cell: group 1 keeps the base size and variance,
/// group 2 has `round(point_ratio * n1)` samples at `variance_ratio * nu1`.
pub fn cell_spec(base: &SynthSpec, point_ratio: f64, variance_ratio: f64) -> Result<SynthSpec> {
    if !(point_ratio > 0.0 && point_ratio.is_finite()) {
        return Err(invalid(format!("point ratio must be positive, got {point_ratio}")));
    }
    if !(variance_ratio > 0.0 && variance_ratio.is_finite()) {
        return Err(invalid(format!("variance ratio must be positive, got {variance_ratio}")));
    }
    let n1 = base.group_sizes[0];
    let nu1 = base.group_variances[0];
    let spec = SynthSpec {
        group_sizes: [n1, (point_ratio * n1 as f64).round() as usize],
        group_variances: [nu1, variance_ratio * nu1],
        ..base.clone()
    };
    spec.validate()?;
    Ok(spec)
}

/// Run `f` on a pool of `workers` threads (0 = rayon default).
pub(crate) fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate;

    #[test]
    fn method_ids_round_trip() {
        for s in [
            "pca",
            "pca-good",
            "wpca",
            "rpca",
            "alpcah-known",
            "alpcah-unknown-k0",
            "alpcah-grouped",
            "external:heppcat",
        ] {
            assert_eq!(s.parse::<Method>().unwrap().to_string(), s);
        }
        for bad in ["", "pca-k0", "alpcah", "external:", "PCA"] {
            assert!(bad.parse::<Method>().is_err(), "{bad}");
        }
    }

    #[test]
    fn method_spec_validation() {
        assert!(MethodSpec::new(Method::Pca).validate().is_ok());
        assert!(MethodSpec::with_lambda(Method::Pca, LambdaPolicy::Fixed(1.0)).validate().is_err());
        assert!(MethodSpec::with_lambda(Method::Rpca, LambdaPolicy::None).validate().is_err());
        assert!(MethodSpec::with_lambda(Method::Rpca, LambdaPolicy::Relative(-1.0)).validate().is_err());
        assert!(MethodSpec::new(Method::External("x".into())).validate().is_err());
        let alpcah = Method::Alpcah { noise: NoiseMode::PerSample, nuclear: false };
        assert_eq!(MethodSpec::new(alpcah).policy(), LambdaPolicy::CrossValidated);
    }

    #[test]
    fn seeds_depend_on_every_part() {
        let a = trial_seed(1, 2.0, 4.0, 0);
        assert_eq!(a, trial_seed(1, 2.0, 4.0, 0));
        assert_ne!(a, trial_seed(2, 2.0, 4.0, 0));
        assert_ne!(a, trial_seed(1, 4.0, 2.0, 0));
        assert_ne!(a, trial_seed(1, 2.0, 4.0, 1));
        assert_ne!(a, validation_seed(1, 2.0, 4.0, 0));
    }

    #[test]
    fn cell_spec_scales_group_two() {
        let spec = cell_spec(&SynthSpec::default(), 9.0, 100.0).unwrap();
        assert_eq!(spec.group_sizes, [10, 90]);
        assert_eq!(spec.group_variances, [1.0, 100.0]);
        assert!(cell_spec(&SynthSpec::default(), 0.0, 1.0).is_err());
        assert!(cell_spec(&SynthSpec::default(), 1.0, -1.0).is_err());
    }

    #[test]
    fn run_method_checks_weight() {
        let inst = generate(&SynthSpec { group_sizes: [10, 10], ..SynthSpec::default() }).unwrap();
        let s = SolverSettings::default();
        assert!(run_method(&Method::Pca, &inst, LambdaChoice::Relative(1.0), 10, &s).is_err());
        assert!(run_method(&Method::Rpca, &inst, LambdaChoice::None, 10, &s).is_err());
        let run = run_method(&Method::Pca, &inst, LambdaChoice::None, 10, &s).unwrap();
        assert!(run.affinity_error.is_finite());
        assert_eq!(run.lambda_used, None);
        let run = run_method(&Method::Rpca, &inst, LambdaChoice::Relative(2.0), 10, &s).unwrap();
        let w = 2.0 / (100f64).sqrt();
        assert!((run.lambda_used.unwrap() - w).abs() < 1e-15);
    }
}
