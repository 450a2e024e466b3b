use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, run_method, stream, with_pool, ExperimentConfig, LambdaChoice};
use crate::error::{invalid, Result};
use crate::synth::generate;

/// Mean error of one method at one weight multiplier. Unregularized methods
/// repeat the same value at every multiplier as a reference line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub method: String,
    pub lambda_multiplier: f64,
    /// Average absolute weight over the trials.
    pub lambda_mean: Option<f64>,
    pub mean_error: Option<f64>,
    pub max_error: Option<f64>,
    pub trials: usize,
    pub failures: usize,
}

/// Sweep the weight multiplier over `cfg.curve.grid` on instances drawn
/// from `cfg.curve.synth`.
pub fn run_lambda_curve(cfg: &ExperimentConfig) -> Result<Vec<CurveRow>> {
    let curve = &cfg.curve;
    let grid = curve.grid.values()?;
    if curve.trials == 0 {
        return Err(invalid("curve needs at least one trial"));
    }
    if curve.methods.is_empty() {
        return Ok(Vec::new());
    }
    curve.synth.validate()?;
    let rank = curve.synth.subspace_dim;

    // results[trial][method][grid index] = (lambda, error) or failure
    type Cell = Option<(Option<f64>, f64)>;
    let results: Vec<Vec<Vec<Cell>>> = with_pool(cfg.workers, || {
        (0..curve.trials)
            .into_par_iter()
            .map(|t| {
                let seed = derive_seed(curve.synth.seed, &[stream::CURVE, t as u64]);
                let inst = generate(&curve.synth.with_seed(seed))?;
                Ok(curve
                    .methods
                    .iter()
                    .map(|m| {
                        if m.is_regularized() {
                            grid.iter()
                                .map(|&c| {
                                    run_method(m, &inst, LambdaChoice::Relative(c), rank, &cfg.solver)
                                        .ok()
                                        .map(|r| (r.lambda_used, r.affinity_error))
                                })
                                .collect()
                        } else {
                            let r = run_method(m, &inst, LambdaChoice::None, rank, &cfg.solver)
                                .ok()
                                .map(|r| (None, r.affinity_error));
                            vec![r; grid.len()]
                        }
                    })
                    .collect())
            })
            .collect::<Result<_>>()
    })??;

    let mut rows = Vec::new();
    for (mi, m) in curve.methods.iter().enumerate() {
        for (gi, &c) in grid.iter().enumerate() {
            let ok: Vec<(Option<f64>, f64)> = results.iter().filter_map(|r| r[mi][gi]).collect();
            let n = ok.len();
            let mean = |xs: &mut dyn Iterator<Item = f64>| (n > 0).then(|| xs.sum::<f64>() / n as f64);
            rows.push(CurveRow {
                method: m.to_string(),
                lambda_multiplier: c,
                lambda_mean: if m.is_regularized() {
                    mean(&mut ok.iter().filter_map(|x| x.0))
                } else {
                    None
                },
                mean_error: mean(&mut ok.iter().map(|x| x.1)),
                max_error: ok.iter().map(|x| x.1).reduce(f64::max),
                trials: n,
                failures: curve.trials - n,
            });
        }
    }
    Ok(rows)
}
