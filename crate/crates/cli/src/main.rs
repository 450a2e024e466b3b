use std::path::{Path, PathBuf};
use std::process::ExitCode;

use alpcah::harness::{
    compute_ratios, import_external_results, merge_rows, read_sweep_csv, run_cv_matrix,
    run_lambda_curve, run_sweep, write_curve_csv, write_cv_matrix_csv, write_ratios_csv,
    write_sweep_csv, ExperimentConfig, Method,
};
use alpcah::metrics::affinity_error;
use alpcah::model::{DataMatrix, GroupAssignment, NoiseModel};
use alpcah::solver::solve;
use alpcah::synth::{self, generate};
use alpcah::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Subspace estimation for data whose samples carry different noise levels.
#[derive(Parser)]
#[command(name = "alpcah", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with its ground truth.
    Synth(SynthArgs),
    /// Estimate a subspace from one data matrix.
    Fit(FitArgs),
    /// Run the point-ratio x variance-ratio Monte Carlo sweep.
    Sweep(RunArgs),
    /// Error against the regularization weight on a fixed instance family.
    LambdaCurve(RunArgs),
    /// Cross-validated weight per sweep cell and the cost of one global weight.
    CvMatrix(CvMatrixArgs),
    /// Merge results produced by another tool into the sweep output.
    Import(ImportArgs),
}

#[derive(Args)]
struct Common {
    /// Experiment description (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.synth.seed = seed;
            cfg.curve.synth.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    /// File name stem of the written files.
    #[arg(long, default_value = "data")]
    stem: String,
    /// Use the lambda-curve instance family instead of the base instance.
    #[arg(long)]
    curve: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Known,
    PerSample,
    Grouped,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    /// Data matrix (headerless CSV, one sample per column). Without it a
    /// synthetic instance is drawn from the config.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Regularization weight.
    #[arg(long, conflicts_with = "lambda_scale")]
    lambda: Option<f64>,
    /// Regularization weight as a multiple of the spectral norm of the data.
    #[arg(long)]
    lambda_scale: Option<f64>,
    /// Number of unpenalized singular values; 0 penalizes the nuclear norm.
    #[arg(long)]
    rank: Option<usize>,
    /// Dimension of the returned basis (defaults to --rank).
    #[arg(long)]
    output_rank: Option<usize>,
    #[arg(long, value_enum, default_value = "per-sample")]
    noise_mode: NoiseArg,
    /// Known per-sample variances, one per line.
    #[arg(long)]
    variances: Option<PathBuf>,
    /// Group label (1..=L) of every sample, one per line.
    #[arg(long)]
    groups: Option<PathBuf>,
    /// True basis (CSV) to score the estimate against.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
}

impl RunArgs {
    fn load(&self, curve: bool) -> Result<ExperimentConfig, Error> {
        let mut cfg = self.common.load()?;
        if let Some(t) = self.trials {
            if curve {
                cfg.curve.trials = t;
            } else {
                cfg.sweep.trials = t;
            }
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct CvMatrixArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Method whose weight is cross-validated.
    #[arg(long, default_value = "alpcah-unknown")]
    method: String,
}

#[derive(Args)]
struct ImportArgs {
    #[command(flatten)]
    common: Common,
    /// CSV in the sweep schema.
    #[arg(long)]
    input: PathBuf,
    /// Name used in the `external:<name>` tag (defaults to the file's method column).
    #[arg(long)]
    name: Option<String>,
}

fn read_labels(path: &Path) -> Result<Vec<usize>, Error> {
    synth::read_vector_csv(path)?
        .into_iter()
        .map(|v| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidArgument(format!(
                    "{}: group labels must be positive integers, got {v}",
                    path.display()
                )))
            }
        })
        .collect()
}

fn cmd_synth(args: &SynthArgs) -> Result<(), Error> {
    let cfg = args.common.load()?;
    let spec = if args.curve { cfg.curve.synth } else { cfg.synth };
    let instance = generate(&spec)?;
    let paths = synth::export(&instance, &spec, &cfg.output_dir, &args.stem)?;
    println!("wrote {}", paths.data.display());
    Ok(())
}

fn cmd_fit(args: &FitArgs) -> Result<(), Error> {
    let cfg = args.common.load()?;
    let (y, truth, synthetic) = match &args.input {
        Some(p) => (DataMatrix::new(synth::read_matrix_csv(p)?)?, None, None),
        None => {
            let inst = generate(&cfg.synth)?;
            (inst.data.clone(), Some(inst.basis.clone()), Some(inst))
        }
    };
    let truth = match &args.truth {
        Some(p) => Some(synth::read_matrix_csv(p)?),
        None => truth,
    };
    let noise = match args.noise_mode {
        NoiseArg::Known => {
            let v = match (&args.variances, &synthetic) {
                (Some(p), _) => synth::read_vector_csv(p)?,
                (None, Some(inst)) => inst.variances.clone(),
                (None, None) => {
                    return Err(Error::InvalidArgument(
                        "--noise-mode known needs --variances".into(),
                    ))
                }
            };
            NoiseModel::Known(v)
        }
        NoiseArg::PerSample => NoiseModel::UnknownPerSample,
        NoiseArg::Grouped => {
            let labels = match (&args.groups, &synthetic) {
                (Some(p), _) => read_labels(p)?,
                (None, Some(inst)) => inst.assignment.clone(),
                (None, None) => {
                    return Err(Error::InvalidArgument(
                        "--noise-mode grouped needs --groups".into(),
                    ))
                }
            };
            NoiseModel::UnknownGrouped(GroupAssignment::new(labels)?)
        }
    };
    let lambda = match (args.lambda, args.lambda_scale) {
        (Some(l), _) => l,
        (None, Some(c)) => c * y.spectral_norm()?,
        (None, None) => y.spectral_norm()?,
    };
    let rank = args.rank.unwrap_or(cfg.synth.subspace_dim);
    let mut solver_cfg = cfg.solver.solver_config(lambda, rank);
    solver_cfg.output_rank = args.output_rank;
    if let Some(t) = args.tol {
        solver_cfg.tol_residual = t;
    }
    if let Some(m) = args.max_iters {
        solver_cfg.max_iters = m;
    }
    let report = solve(&y, &noise, &solver_cfg)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }

    std::fs::create_dir_all(&cfg.output_dir)?;
    let basis_path = cfg.output_dir.join("basis.csv");
    synth::write_matrix_csv(&basis_path, &report.estimate.basis)?;
    let vars = nalgebra::DMatrix::from_column_slice(
        report.estimate.estimated_variances.len(),
        1,
        &report.estimate.estimated_variances,
    );
    synth::write_matrix_csv(&cfg.output_dir.join("variances.csv"), &vars)?;

    println!("lambda = {lambda}");
    println!("iterations = {}", report.iterations_used);
    println!("converged = {}", report.converged);
    println!("primal_residual = {:e}", report.final_primal_residual);
    if let Some(u) = truth {
        println!("affinity_error = {}", affinity_error(&u, &report.estimate.basis)?);
    }
    println!("wrote {}", basis_path.display());
    Ok(())
}

fn cmd_sweep(args: &RunArgs) -> Result<(), Error> {
    let cfg = args.load(false)?;
    let result = run_sweep(&cfg)?;
    let sweep = cfg.output_dir.join("sweep.csv");
    write_sweep_csv(&sweep, &result.rows)?;
    write_ratios_csv(&cfg.output_dir.join("ratios.csv"), &compute_ratios(&result.rows))?;
    let failed = result.rows.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        eprintln!("warning: {failed} of {} runs failed", result.rows.len());
    }
    println!("wrote {} rows to {}", result.rows.len(), sweep.display());
    Ok(())
}

fn cmd_curve(args: &RunArgs) -> Result<(), Error> {
    let cfg = args.load(true)?;
    let rows = run_lambda_curve(&cfg)?;
    let path = cfg.output_dir.join("lambda_curve.csv");
    write_curve_csv(&path, &rows)?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}

fn cmd_cv_matrix(args: &CvMatrixArgs) -> Result<(), Error> {
    let cfg = args.run.load(false)?;
    let method: Method = args.method.parse()?;
    let m = run_cv_matrix(&cfg, &method)?;
    let path = cfg.output_dir.join("cv_matrix.csv");
    write_cv_matrix_csv(&path, &m)?;
    println!(
        "global multiplier {} (spread {:.3}), {:.0}% of cells within 10% of tuned error",
        m.global_multiplier,
        m.spread,
        100.0 * m.fraction_within(0.10)
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_import(args: &ImportArgs) -> Result<(), Error> {
    let cfg = args.common.load()?;
    let imported = import_external_results(&args.input, args.name.as_deref())?;
    let n = imported.len();
    let sweep = cfg.output_dir.join("sweep.csv");
    let existing = if sweep.exists() { read_sweep_csv(&sweep)? } else { Vec::new() };
    let rows = merge_rows(existing, imported)?;
    write_sweep_csv(&sweep, &rows)?;
    write_ratios_csv(&cfg.output_dir.join("ratios.csv"), &compute_ratios(&rows))?;
    println!("merged {n} rows into {}", sweep.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::LambdaCurve(a) => cmd_curve(a),
        Command::CvMatrix(a) => cmd_cv_matrix(a),
        Command::Import(a) => cmd_import(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
