use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    cell_spec, run_method, trial_seed, validation_seed, with_pool, ExperimentConfig, LambdaChoice,
    Method, SolverSettings,
};
use crate::error::{invalid, Error, Result};
use crate::synth::{generate, SynthSpec};

/// Mean validation error of one candidate multiplier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub multiplier: f64,
    /// `None` when the candidate failed on some validation instance.
    pub mean_error: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub best_multiplier: f64,
    pub best_error: f64,
    pub scores: Vec<CvScore>,
}

/// Pick the weight multiplier with the lowest mean affinity error over
/// validation instances drawn from `spec` with the given seeds. Ties go to
/// the smallest multiplier.
pub fn cross_validate_lambda(
    spec: &SynthSpec,
    method: &Method,
    multipliers: &[f64],
    validation_seeds: &[u64],
    rank: usize,
    settings: &SolverSettings,
) -> Result<CvOutcome> {
    if !method.is_regularized() {
        return Err(invalid(format!("{method} has no weight to cross-validate")));
    }
    if multipliers.is_empty() {
        return Err(invalid("lambda grid is empty"));
    }
    if validation_seeds.is_empty() {
        return Err(invalid("no validation instances"));
    }
    let mut grid = multipliers.to_vec();
    grid.sort_by(f64::total_cmp);
    let instances = validation_seeds
        .iter()
        .map(|&s| generate(&spec.with_seed(s)))
        .collect::<Result<Vec<_>>>()?;

    let scores: Vec<CvScore> = grid
        .iter()
        .map(|&c| {
            let mut total = 0.0;
            for inst in &instances {
                match run_method(method, inst, LambdaChoice::Relative(c), rank, settings) {
                    Ok(run) => total += run.affinity_error,
                    Err(e) => {
                        return CvScore { multiplier: c, mean_error: None, failure: Some(e.to_string()) }
                    }
                }
            }
            CvScore {
                multiplier: c,
                mean_error: Some(total / instances.len() as f64),
                failure: None,
            }
        })
        .collect();

    let best = scores
        .iter()
        .filter_map(|s| s.mean_error.map(|e| (s.multiplier, e)))
        .fold(None, |acc: Option<(f64, f64)>, (c, e)| match acc {
            Some((_, be)) if be <= e => acc,
            _ => Some((c, e)),
        });
    match best {
        Some((best_multiplier, best_error)) => Ok(CvOutcome {
            best_multiplier,
            best_error,
            scores,
        }),
        None => Err(Error::AllCandidatesFailed(
            scores
                .iter()
                .map(|s| format!("{}: {}", s.multiplier, s.failure.as_deref().unwrap_or("?")))
                .collect::<Vec<_>>()
                .join("; "),
        )),
    }
}

/// Per-cell cross-validation result and its comparison with one global
/// weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub point_ratio: f64,
    pub variance_ratio: f64,
    pub best_multiplier: f64,
    /// Mean test error at the cell's own pick.
    pub tuned_error: f64,
    /// Mean test error at the global multiplier.
    pub global_error: f64,
    pub trials: usize,
    /// Fewer than two test trials back the means.
    pub high_variance: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvMatrix {
    pub method: Method,
    pub cells: Vec<CvCell>,
    /// Median of the per-cell picks. With an even number of cells this is
    /// the mean of the two middle picks and may fall between grid points.
    pub global_multiplier: f64,
    /// `max / min` of the per-cell picks.
    pub spread: f64,
}

impl CvMatrix {
    /// Share of cells whose global-weight error is within `tol` (relative)
    /// of the tuned error.
    pub fn fraction_within(&self, tol: f64) -> f64 {
        if self.cells.is_empty() {
            return 0.0;
        }
        let hits = self
            .cells
            .iter()
            .filter(|c| c.global_error <= (1.0 + tol) * c.tuned_error)
            .count();
        hits as f64 / self.cells.len() as f64
    }
}

fn mean_test_error(
    cfg: &ExperimentConfig,
    method: &Method,
    p: f64,
    v: f64,
    multiplier: f64,
) -> Result<f64> {
    let spec = cell_spec(&cfg.synth, p, v)?;
    let mut total = 0.0;
    for t in 0..cfg.sweep.trials {
        let inst = generate(&spec.with_seed(trial_seed(cfg.synth.seed, p, v, t)))?;
        let run = run_method(
            method,
            &inst,
            LambdaChoice::Relative(multiplier),
            cfg.synth.subspace_dim,
            &cfg.solver,
        )?;
        total += run.affinity_error;
    }
    Ok(total / cfg.sweep.trials as f64)
}

/// Median of a sorted, nonempty slice.
fn median(sorted: &[f64]) -> f64 {
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 0 {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    }
}

/// Cross-validate `method` in every sweep cell, then re-evaluate every cell
/// at the median pick to see how much a single weight loses.
pub fn run_cv_matrix(cfg: &ExperimentConfig, method: &Method) -> Result<CvMatrix> {
    if cfg.sweep.trials == 0 {
        return Err(invalid("cv matrix needs at least one test trial"));
    }
    let cells = cfg.sweep.cells();
    if cells.is_empty() {
        return Err(invalid("sweep grid has no cells"));
    }
    let multipliers = cfg.cv.grid.values()?;
    let rank = cfg.synth.subspace_dim;
    with_pool(cfg.workers, || {
        let picks: Vec<(f64, f64, f64, f64)> = cells
            .par_iter()
            .map(|&(p, v)| {
                let spec = cell_spec(&cfg.synth, p, v)?;
                let seeds: Vec<u64> = (0..cfg.cv.validation_sets)
                    .map(|i| validation_seed(cfg.synth.seed, p, v, i))
                    .collect();
                let out = cross_validate_lambda(&spec, method, &multipliers, &seeds, rank, &cfg.solver)?;
                let tuned = mean_test_error(cfg, method, p, v, out.best_multiplier)?;
                Ok((p, v, out.best_multiplier, tuned))
            })
            .collect::<Result<_>>()?;

        let mut sorted: Vec<f64> = picks.iter().map(|c| c.2).collect();
        sorted.sort_by(f64::total_cmp);
        let global = median(&sorted);
        let spread = sorted[sorted.len() - 1] / sorted[0];

        let cells: Vec<CvCell> = picks
            .par_iter()
            .map(|&(p, v, best, tuned)| {
                let global_error = if best == global {
                    tuned
                } else {
                    mean_test_error(cfg, method, p, v, global)?
                };
                Ok(CvCell {
                    point_ratio: p,
                    variance_ratio: v,
                    best_multiplier: best,
                    tuned_error: tuned,
                    global_error,
                    trials: cfg.sweep.trials,
                    high_variance: cfg.sweep.trials < 2,
                })
            })
            .collect::<Result<_>>()?;
        Ok(CvMatrix {
            method: method.clone(),
            cells,
            global_multiplier: global,
            spread,
        })
    })?
}
