use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{cross_validate_lambda, CvOutcome};
use super::{
    cell_spec, run_method, trial_seed, validation_seed, with_pool, ExperimentConfig, LambdaChoice,
    LambdaPolicy, Method, MethodSpec, NoiseMode,
};
use crate::error::{invalid, Result};
use crate::synth::generate;

/// The Monte Carlo grid: every `(point_ratio, variance_ratio)` cell runs
/// `trials` fresh instances through each method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub point_ratios: Vec<f64>,
    pub variance_ratios: Vec<f64>,
    pub trials: usize,
    pub methods: Vec<MethodSpec>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        let alpcah = |noise| Method::Alpcah { noise, nuclear: false };
        Self {
            point_ratios: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
            variance_ratios: vec![1.0, 4.0, 16.0, 64.0, 256.0],
            trials: 25,
            methods: vec![
                MethodSpec::new(Method::Pca),
                MethodSpec::new(Method::PcaGood),
                MethodSpec::new(Method::Wpca),
                MethodSpec::new(Method::Rpca),
                MethodSpec::new(alpcah(NoiseMode::Known)),
                MethodSpec::new(alpcah(NoiseMode::PerSample)),
            ],
        }
    }
}

impl SweepGrid {
    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.point_ratios
            .iter()
            .flat_map(|&p| self.variance_ratios.iter().map(move |&v| (p, v)))
            .collect()
    }
}

/// One `(cell, trial, method)` result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point_ratio: f64,
    pub variance_ratio: f64,
    pub trial: usize,
    pub seed: u64,
    pub method: String,
    pub lambda_used: Option<f64>,
    /// Empty when the run failed.
    pub affinity_error: Option<f64>,
    pub iterations: usize,
    pub wall_time: f64,
    /// `ok`, or the failure message.
    #[serde(default = "ok_status")]
    pub status: String,
}

fn ok_status() -> String {
    "ok".to_string()
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok" && self.affinity_error.is_some_and(f64::is_finite)
    }

    pub(crate) fn sort_key(&self) -> (u64, u64, usize, &str) {
        (
            self.point_ratio.to_bits(),
            self.variance_ratio.to_bits(),
            self.trial,
            &self.method,
        )
    }
}

/// Rows sorted by cell, trial and method.
pub(crate) fn sort_rows(rows: &mut [SweepRow]) {
    rows.sort_by(|a, b| {
        a.point_ratio
            .total_cmp(&b.point_ratio)
            .then(a.variance_ratio.total_cmp(&b.variance_ratio))
            .then(a.trial.cmp(&b.trial))
            .then(a.method.cmp(&b.method))
    });
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Cross-validation outcome per `(point_ratio, variance_ratio, method)`.
    pub cv: Vec<(f64, f64, Method, CvOutcome)>,
}

/// Mean error of one method relative to another in one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub point_ratio: f64,
    pub variance_ratio: f64,
    /// `numerator/denominator`.
    pub method_pair: String,
    pub mean_ratio: f64,
}

/// Run every method of `cfg.sweep` over the grid.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    let grid = &cfg.sweep;
    if grid.point_ratios.is_empty() || grid.variance_ratios.is_empty() {
        return Err(invalid("sweep grid has no cells"));
    }
    for m in &grid.methods {
        m.validate()?;
    }
    let cells = grid.cells();
    for &(p, v) in &cells {
        cell_spec(&cfg.synth, p, v)?;
    }
    if grid.methods.is_empty() || grid.trials == 0 {
        return Ok(SweepResult { rows: Vec::new(), cv: Vec::new() });
    }
    let base_seed = cfg.synth.seed;
    let rank = cfg.synth.subspace_dim;

    with_pool(cfg.workers, || {
        // Cross-validate first so every trial of a cell shares one weight.
        let cv_jobs: Vec<(f64, f64, &Method)> = cells
            .iter()
            .flat_map(|&(p, v)| {
                grid.methods
                    .iter()
                    .filter(|m| m.policy() == LambdaPolicy::CrossValidated)
                    .map(move |m| (p, v, &m.method))
            })
            .collect();
        let multipliers = cfg.cv.grid.values()?;
        let cv: Vec<(f64, f64, Method, CvOutcome)> = cv_jobs
            .par_iter()
            .map(|&(p, v, method)| {
                let spec = cell_spec(&cfg.synth, p, v)?;
                let seeds: Vec<u64> = (0..cfg.cv.validation_sets)
                    .map(|i| validation_seed(base_seed, p, v, i))
                    .collect();
                let out = cross_validate_lambda(&spec, method, &multipliers, &seeds, rank, &cfg.solver)?;
                Ok((p, v, method.clone(), out))
            })
            .collect::<Result<_>>()?;
        let picked: BTreeMap<(u64, u64, &Method), f64> = cv
            .iter()
            .map(|(p, v, m, o)| ((p.to_bits(), v.to_bits(), m), o.best_multiplier))
            .collect();

        let trials: Vec<(f64, f64, usize)> = cells
            .iter()
            .flat_map(|&(p, v)| (0..grid.trials).map(move |t| (p, v, t)))
            .collect();
        let mut rows: Vec<SweepRow> = trials
            .par_iter()
            .map(|&(p, v, t)| {
                let seed = trial_seed(base_seed, p, v, t);
                let instance = generate(&cell_spec(&cfg.synth, p, v)?.with_seed(seed))?;
                let rows = grid.methods.iter().map(|spec| {
                    let choice = match spec.policy() {
                        LambdaPolicy::None => LambdaChoice::None,
                        LambdaPolicy::Fixed(w) => LambdaChoice::Absolute(w),
                        LambdaPolicy::Relative(c) => LambdaChoice::Relative(c),
                        LambdaPolicy::CrossValidated => {
                            LambdaChoice::Relative(picked[&(p.to_bits(), v.to_bits(), &spec.method)])
                        }
                    };
                    let row = SweepRow {
                        point_ratio: p,
                        variance_ratio: v,
                        trial: t,
                        seed,
                        method: spec.method.to_string(),
                        lambda_used: None,
                        affinity_error: None,
                        iterations: 0,
                        wall_time: 0.0,
                        status: ok_status(),
                    };
                    match run_method(&spec.method, &instance, choice, rank, &cfg.solver) {
                        Ok(run) => SweepRow {
                            lambda_used: run.lambda_used,
                            affinity_error: Some(run.affinity_error),
                            iterations: run.iterations,
                            wall_time: run.wall_time,
                            ..row
                        },
                        Err(e) => SweepRow { status: e.to_string(), ..row },
                    }
                });
                Ok(rows.collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        sort_rows(&mut rows);
        Ok(SweepResult { rows, cv })
    })?
}

/// Per-cell ratios `mean(numerator) / mean(denominator)` for every ALPCAH
/// method against every other method present, over successful rows.
pub fn compute_ratios(rows: &[SweepRow]) -> Vec<RatioRow> {
    let mut sums: BTreeMap<(u64, u64), BTreeMap<&str, (f64, usize)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.is_ok()) {
        let e = sums
            .entry((r.point_ratio.to_bits(), r.variance_ratio.to_bits()))
            .or_default()
            .entry(r.method.as_str())
            .or_insert((0.0, 0));
        e.0 += r.affinity_error.unwrap();
        e.1 += 1;
    }
    let mut out = Vec::new();
    for ((p, v), methods) in sums {
        let means: Vec<(&str, f64)> = methods.iter().map(|(m, (s, n))| (*m, s / *n as f64)).collect();
        for &(num, a) in means.iter().filter(|(m, _)| m.starts_with("alpcah")) {
            for &(den, b) in means.iter().filter(|(m, _)| *m != num) {
                if b > 0.0 {
                    out.push(RatioRow {
                        point_ratio: f64::from_bits(p),
                        variance_ratio: f64::from_bits(v),
                        method_pair: format!("{num}/{den}"),
                        mean_ratio: a / b,
                    });
                }
            }
        }
    }
    out.sort_by(|a, b| {
        a.point_ratio
            .total_cmp(&b.point_ratio)
            .then(a.variance_ratio.total_cmp(&b.variance_ratio))
            .then(a.method_pair.cmp(&b.method_pair))
    });
    out
}
