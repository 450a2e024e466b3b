use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LambdaPolicy, Method, MethodSpec, NoiseMode, SweepGrid};
use crate::baselines::RpcaOptions;
use crate::error::{invalid, Error, Result};
use crate::model::{MuPolicy, SolverConfig, DEFAULT_VARIANCE_FLOOR};
use crate::synth::SynthSpec;

/// Candidate weight multipliers, either listed or log-spaced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum LambdaGrid {
    Explicit { values: Vec<f64> },
    LogSpaced { min: f64, max: f64, points: usize },
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid::LogSpaced {
            min: 1e-2,
            max: 1e2,
            points: 20,
        }
    }
}

impl LambdaGrid {
    pub fn log_spaced(min: f64, max: f64, points: usize) -> Self {
        LambdaGrid::LogSpaced { min, max, points }
    }

    /// Sorted, deduplicated multipliers.
    pub fn values(&self) -> Result<Vec<f64>> {
        let mut out = match self {
            LambdaGrid::Explicit { values } => values.clone(),
            &LambdaGrid::LogSpaced { min, max, points } => {
                if !(min > 0.0 && max >= min && max.is_finite()) {
                    return Err(invalid(format!("bad lambda grid bounds [{min}, {max}]")));
                }
                match points {
                    0 => Vec::new(),
                    1 => vec![min],
                    _ => {
                        // base 10 so decade endpoints come out exact
                        let (a, b) = (min.log10(), max.log10());
                        (0..points)
                            .map(|i| 10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64))
                            .collect()
                    }
                }
            }
        };
        if out.is_empty() {
            return Err(invalid("lambda grid is empty"));
        }
        if let Some(bad) = out.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(invalid(format!("lambda grid values must be positive, got {bad}")));
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSettings {
    pub grid: LambdaGrid,
    /// Independent validation instances per cell.
    pub validation_sets: usize,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self {
            grid: LambdaGrid::default(),
            validation_sets: 5,
        }
    }
}

/// Iteration controls shared by every run in an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub tol_residual: f64,
    pub max_iters: usize,
    pub variance_floor: f64,
    pub mu_multiplier: f64,
    pub variance_update_period: usize,
    pub rpca_tol: f64,
    pub rpca_max_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let rpca = RpcaOptions::default();
        Self {
            tol_residual: 1e-7,
            max_iters: 2000,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            mu_multiplier: 2.5,
            variance_update_period: 1,
            rpca_tol: rpca.tol,
            rpca_max_iters: rpca.max_iters,
        }
    }
}

impl SolverSettings {
    pub fn solver_config(&self, lambda: f64, rank_hint: usize) -> SolverConfig {
        SolverConfig {
            lambda,
            rank_hint,
            output_rank: None,
            mu_policy: MuPolicy::FixedSafe {
                multiplier: self.mu_multiplier,
            },
            variance_floor: self.variance_floor,
            max_iters: self.max_iters,
            tol_residual: self.tol_residual,
            variance_update_period: self.variance_update_period,
        }
    }

    pub fn rpca_options(&self) -> RpcaOptions {
        RpcaOptions {
            tol: self.rpca_tol,
            max_iters: self.rpca_max_iters,
            ..RpcaOptions::default()
        }
    }
}

/// Settings of the weight-versus-error curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveSettings {
    pub synth: SynthSpec,
    pub grid: LambdaGrid,
    pub trials: usize,
    pub methods: Vec<Method>,
}

impl Default for CurveSettings {
    fn default() -> Self {
        Self {
            synth: SynthSpec {
                group_sizes: [10, 490],
                group_variances: [0.25, 100.0],
                ..SynthSpec::default()
            },
            grid: LambdaGrid::default(),
            trials: 25,
            methods: vec![
                Method::Pca,
                Method::Wpca,
                Method::Alpcah { noise: NoiseMode::Known, nuclear: false },
                Method::Alpcah { noise: NoiseMode::Known, nuclear: true },
            ],
        }
    }
}

/// A complete experiment description, usually read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    /// Worker threads; 0 picks the number of cores.
    pub workers: usize,
    /// Base instance: group 1 size and variance, dimensions, base seed.
    pub synth: SynthSpec,
    pub sweep: SweepGrid,
    pub cv: CvSettings,
    pub curve: CurveSettings,
    pub solver: SolverSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("results"),
            workers: 0,
            synth: SynthSpec::default(),
            sweep: SweepGrid::default(),
            cv: CvSettings::default(),
            curve: CurveSettings::default(),
            solver: SolverSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.curve.synth.validate()?;
        for m in &self.sweep.methods {
            m.validate()?;
        }
        for m in &self.curve.methods {
            MethodSpec::new(m.clone()).validate().or_else(|e| {
                // curve methods take their weight from the grid
                if m.is_regularized() {
                    Ok(())
                } else {
                    Err(e)
                }
            })?;
        }
        if self.solver.max_iters == 0 {
            return Err(invalid("solver.max_iters must be positive"));
        }
        if self.solver.variance_update_period == 0 {
            return Err(invalid("solver.variance_update_period must be positive"));
        }
        if self.sweep.methods.iter().any(|m| m.policy() == LambdaPolicy::CrossValidated)
            && self.cv.validation_sets == 0
        {
            return Err(invalid("cv.validation_sets must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            output_dir = "out"
            workers = 2

            [synth]
            ambient_dim = 50
            subspace_dim = 3
            group_sizes = [5, 0]
            group_variances = [1.0, 1.0]
            seed = 7

            [sweep]
            point_ratios = [1, 4]
            variance_ratios = [1, 16]
            trials = 3

            [[sweep.methods]]
            method = "pca"

            [[sweep.methods]]
            method = "alpcah-known"
            lambda = { relative = 2.0 }

            [[sweep.methods]]
            method = "alpcah-unknown"
            lambda = "cross-validated"

            [[sweep.methods]]
            method = "rpca"
            lambda = { fixed = 0.1 }

            [cv]
            grid = { values = [0.1, 1.0, 10.0] }
            validation_sets = 2

            [curve]
            grid = { min = 0.1, max = 10.0, points = 3 }
            trials = 1
            "#,
        )
        .unwrap();
        assert_eq!(cfg.workers, 2);
        assert_eq!(cfg.synth.seed, 7);
        assert_eq!(cfg.sweep.point_ratios, vec![1.0, 4.0]);
        assert_eq!(cfg.sweep.methods[1].policy(), LambdaPolicy::Relative(2.0));
        assert_eq!(cfg.sweep.methods[2].policy(), LambdaPolicy::CrossValidated);
        assert_eq!(cfg.sweep.methods[3].policy(), LambdaPolicy::Fixed(0.1));
        assert_eq!(cfg.cv.grid.values().unwrap(), vec![0.1, 1.0, 10.0]);
        let curve = cfg.curve.grid.values().unwrap();
        assert!((curve[1] - 1.0).abs() < 1e-12);
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml("[[sweep.methods]]\nmethod = \"nope\"").is_err());
        assert!(ExperimentConfig::from_toml(
            "[[sweep.methods]]\nmethod = \"pca\"\nlambda = { fixed = 1.0 }"
        )
        .is_err());
        assert!(ExperimentConfig::from_toml("[solver]\nmax_iters = 0").is_err());
    }

    #[test]
    fn grid_values() {
        let g = LambdaGrid::log_spaced(0.01, 100.0, 5).values().unwrap();
        assert_eq!(g, vec![0.01, 0.1, 1.0, 10.0, 100.0]);
        assert!(LambdaGrid::log_spaced(1.0, 2.0, 0).values().is_err());
        assert!(LambdaGrid::Explicit { values: vec![1.0, -1.0] }.values().is_err());
        assert_eq!(
            LambdaGrid::Explicit { values: vec![3.0, 1.0, 3.0] }.values().unwrap(),
            vec![1.0, 3.0]
        );
    }
}
