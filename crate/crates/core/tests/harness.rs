use alpcah::harness::{
    cell_spec, compute_ratios, cross_validate_lambda, run_cv_matrix, run_lambda_curve, run_sweep,
    validation_seed, ExperimentConfig, LambdaGrid, LambdaPolicy, Method, MethodSpec, NoiseMode,
    SweepGrid, SweepRow,
};
use alpcah::synth::SynthSpec;

fn small_synth() -> SynthSpec {
    SynthSpec {
        ambient_dim: 30,
        subspace_dim: 3,
        group_sizes: [6, 6],
        group_variances: [1.0, 1.0],
        seed: 17,
        ..SynthSpec::default()
    }
}

fn one_cell(p: f64, v: f64, trials: usize, methods: Vec<MethodSpec>) -> ExperimentConfig {
    ExperimentConfig {
        workers: 1,
        synth: small_synth(),
        sweep: SweepGrid {
            point_ratios: vec![p],
            variance_ratios: vec![v],
            trials,
            methods,
        },
        ..ExperimentConfig::default()
    }
}

fn known(mult: f64) -> MethodSpec {
    MethodSpec::with_lambda(
        Method::Alpcah { noise: NoiseMode::Known, nuclear: false },
        LambdaPolicy::Relative(mult),
    )
}

fn ratio(rows: &[SweepRow], pair: &str) -> f64 {
    compute_ratios(rows)
        .into_iter()
        .find(|r| r.method_pair == pair)
        .unwrap_or_else(|| panic!("no {pair}"))
        .mean_ratio
}

fn mean_error(rows: &[SweepRow], method: &str) -> f64 {
    let errs: Vec<f64> = rows
        .iter()
        .filter(|r| r.method == method)
        .map(|r| r.affinity_error.unwrap())
        .collect();
    errs.iter().sum::<f64>() / errs.len() as f64
}

#[test]
fn homoscedastic_cell_matches_pca() {
    let cfg = one_cell(4.0, 1.0, 4, vec![MethodSpec::new(Method::Pca), known(2.0)]);
    let rows = run_sweep(&cfg).unwrap().rows;
    let r = ratio(&rows, "alpcah-known/pca");
    assert!((0.8..=1.1).contains(&r), "{r}");
}

#[test]
fn heteroscedastic_cell_beats_pca() {
    let cfg = one_cell(4.0, 64.0, 4, vec![MethodSpec::new(Method::Pca), known(2.0)]);
    let rows = run_sweep(&cfg).unwrap().rows;
    assert!(ratio(&rows, "alpcah-known/pca") < 1.0);
}

#[test]
fn ratios_are_ratios_of_means() {
    let cfg = one_cell(2.0, 16.0, 3, vec![MethodSpec::new(Method::Pca), MethodSpec::new(Method::Wpca), known(1.0)]);
    let rows = run_sweep(&cfg).unwrap().rows;
    let ours = mean_error(&rows, "alpcah-known");
    for den in ["pca", "wpca"] {
        let want = ours / mean_error(&rows, den);
        let got = ratio(&rows, &format!("alpcah-known/{den}"));
        assert!((got - want).abs() <= 1e-12 * want, "{den}: {got} vs {want}");
    }
}

#[test]
fn sweep_ignores_worker_count() {
    let methods = vec![
        MethodSpec::new(Method::Pca),
        MethodSpec::with_lambda(Method::Rpca, LambdaPolicy::CrossValidated),
        MethodSpec::with_lambda(
            Method::Alpcah { noise: NoiseMode::PerSample, nuclear: false },
            LambdaPolicy::Relative(1.0),
        ),
    ];
    let mut cfg = one_cell(2.0, 16.0, 3, methods);
    cfg.sweep.point_ratios = vec![1.0, 2.0];
    cfg.cv.grid = LambdaGrid::Explicit { values: vec![0.5, 1.0, 2.0] };
    cfg.cv.validation_sets = 2;
    let strip = |mut rows: Vec<SweepRow>| {
        rows.iter_mut().for_each(|r| r.wall_time = 0.0);
        rows
    };
    let a = strip(run_sweep(&cfg).unwrap().rows);
    cfg.workers = 3;
    let b = strip(run_sweep(&cfg).unwrap().rows);
    assert_eq!(a.len(), 2 * 3 * 3);
    assert_eq!(a, b);
}

#[test]
fn single_cell_matrix_matches_direct_cv() {
    let method = Method::Alpcah { noise: NoiseMode::PerSample, nuclear: false };
    let mut cfg = one_cell(4.0, 16.0, 2, vec![]);
    cfg.cv.grid = LambdaGrid::Explicit { values: vec![0.3, 1.0, 3.0] };
    cfg.cv.validation_sets = 2;

    let m = run_cv_matrix(&cfg, &method).unwrap();
    let seeds: Vec<u64> = (0..2).map(|i| validation_seed(cfg.synth.seed, 4.0, 16.0, i)).collect();
    let spec = cell_spec(&cfg.synth, 4.0, 16.0).unwrap();
    let direct = cross_validate_lambda(&spec, &method, &[0.3, 1.0, 3.0], &seeds, 3, &cfg.solver).unwrap();

    assert_eq!(m.cells.len(), 1);
    assert_eq!(m.cells[0].best_multiplier, direct.best_multiplier);
    assert_eq!(m.global_multiplier, direct.best_multiplier);
    assert_eq!(m.cells[0].global_error, m.cells[0].tuned_error);
    assert_eq!(m.fraction_within(0.0), 1.0);
}

#[test]
fn known_variance_cv_prefers_weights_of_spectral_scale() {
    let method = Method::Alpcah { noise: NoiseMode::Known, nuclear: false };
    let spec = cell_spec(&small_synth(), 8.0, 64.0).unwrap();
    let grid = [0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0];
    let out = cross_validate_lambda(&spec, &method, &grid, &[1, 2, 3], 3, &Default::default()).unwrap();
    assert!(out.best_multiplier >= 1.0, "{:?}", out.scores);
}

#[test]
fn curve_shapes() {
    let mut cfg = ExperimentConfig { workers: 1, ..ExperimentConfig::default() };
    cfg.curve.synth = SynthSpec {
        ambient_dim: 30,
        subspace_dim: 3,
        group_sizes: [5, 100],
        group_variances: [0.25, 100.0],
        seed: 5,
        ..SynthSpec::default()
    };
    cfg.curve.trials = 3;
    cfg.curve.grid = LambdaGrid::Explicit { values: vec![2.0, 5.0, 10.0, 20.0] };
    cfg.curve.methods = ["pca", "alpcah-known", "alpcah-known-k0"]
        .iter()
        .map(|m| m.parse().unwrap())
        .collect();
    let rows = run_lambda_curve(&cfg).unwrap();
    let at = |m: &str, c: f64| {
        rows.iter()
            .find(|r| r.method == m && r.lambda_multiplier == c)
            .and_then(|r| r.mean_error)
            .unwrap()
    };

    // the tail variant is flat once the weight is large
    let tail: Vec<f64> = [2.0, 5.0, 10.0, 20.0].iter().map(|&c| at("alpcah-known", c)).collect();
    let spread = tail.iter().cloned().fold(f64::MIN, f64::max) - tail.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread <= 0.02, "{tail:?}");
    assert!(tail[3] < at("pca", 20.0));
    // the full nuclear norm shrinks the signal away
    assert!(at("alpcah-known-k0", 20.0) > at("pca", 20.0));
}
