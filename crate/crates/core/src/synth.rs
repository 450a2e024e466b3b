//! Seeded two-group heteroscedastic datasets.
//!
//! A basis `U` is taken from the left singular vectors of a `D x k` matrix
//! with i.i.d. `U[0, 1]` entries, coordinates are i.i.d.
//! `U[-coord_range, coord_range]`, and sample `i` receives isotropic Gaussian
//! noise with the variance of its group. Group 1 occupies the first `n1`
//! columns.
//!
//! Randomness comes from ChaCha8 seeded with `seed`, using stream 0 for the
//! basis, stream 1 for the coordinates and stream 2 for the noise, so each
//! can be reproduced on its own. Normal draws use the Box-Muller transform
//! of uniforms.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::model::{DataMatrix, GroupAssignment};

const BASIS_STREAM: u64 = 0;
const COORD_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub ambient_dim: usize,
    pub subspace_dim: usize,
    pub group_sizes: [usize; 2],
    pub group_variances: [f64; 2],
    pub coord_range: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            ambient_dim: 100,
            subspace_dim: 10,
            group_sizes: [10, 90],
            group_variances: [1.0, 100.0],
            coord_range: 100.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn n_samples(&self) -> usize {
        self.group_sizes[0] + self.group_sizes[1]
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples() == 0 {
            return Err(invalid("synthetic spec has no samples"));
        }
        if self.ambient_dim == 0 || self.subspace_dim == 0 {
            return Err(invalid("ambient and subspace dimensions must be positive"));
        }
        if self.subspace_dim > self.ambient_dim {
            return Err(invalid(format!(
                "subspace_dim {} exceeds ambient_dim {}",
                self.subspace_dim, self.ambient_dim
            )));
        }
        if self.group_variances.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(invalid("group variances must be positive"));
        }
        if !(self.coord_range > 0.0 && self.coord_range.is_finite()) {
            return Err(invalid("coord_range must be positive"));
        }
        Ok(())
    }
}

/// A generated dataset with its ground truth.
#[derive(Clone, Debug)]
pub struct SynthInstance {
    pub data: DataMatrix,
    /// `D x k` orthonormal basis of the clean data.
    pub basis: DMatrix<f64>,
    /// Noiseless matrix `U Z`.
    pub clean: DMatrix<f64>,
    pub variances: Vec<f64>,
    /// Group label (1 or 2) of each sample.
    pub assignment: Vec<usize>,
}

impl SynthInstance {
    pub fn groups(&self) -> Result<GroupAssignment> {
        GroupAssignment::new(self.assignment.clone())
    }

    /// Indices of the group-1 samples.
    pub fn group_members(&self, label: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &g)| g == label)
            .map(|(i, _)| i)
            .collect()
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Standard normal pairs via Box-Muller.
struct BoxMuller {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl BoxMuller {
    fn sample(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        // (0, 1] keeps the log finite.
        let u1 = 1.0 - self.rng.gen::<f64>();
        let u2: f64 = self.rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

pub fn generate(spec: &SynthSpec) -> Result<SynthInstance> {
    spec.validate()?;
    let (d, k, n) = (spec.ambient_dim, spec.subspace_dim, spec.n_samples());

    let mut basis_rng = rng(spec.seed, BASIS_STREAM);
    let a = DMatrix::from_fn(d, k, |_, _| basis_rng.gen::<f64>());
    let basis = linalg::thin_svd(&a)?.leading_left(k);

    let mut coord_rng = rng(spec.seed, COORD_STREAM);
    let c = spec.coord_range;
    let coords = DMatrix::from_fn(k, n, |_, _| coord_rng.gen_range(-c..c));
    let clean = &basis * coords;

    let assignment: Vec<usize> = (0..n)
        .map(|i| if i < spec.group_sizes[0] { 1 } else { 2 })
        .collect();
    let variances: Vec<f64> = assignment
        .iter()
        .map(|&g| spec.group_variances[g - 1])
        .collect();

    let mut normal = BoxMuller {
        rng: rng(spec.seed, NOISE_STREAM),
        spare: None,
    };
    let mut y = clean.clone();
    for (j, mut col) in y.column_iter_mut().enumerate() {
        let sd = variances[j].sqrt();
        for v in col.iter_mut() {
            *v += sd * normal.sample();
        }
    }

    Ok(SynthInstance {
        data: DataMatrix::new(y)?,
        basis,
        clean,
        variances,
        assignment,
    })
}

/// Write a matrix as CSV: one line per row, one field per column, no header.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a headerless numeric CSV matrix.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Schema {
                    path: path.to_path_buf(),
                    line,
                    message: format!("not a number: {f:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Schema {
                    path: path.to_path_buf(),
                    line,
                    message: format!("expected {} fields, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            line: 0,
            message: "empty matrix".into(),
        });
    }
    let ncols = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Read a sequence of numbers, one per line (or a single row).
pub fn read_vector_csv(path: &Path) -> Result<Vec<f64>> {
    let m = read_matrix_csv(path)?;
    Ok(m.iter().copied().collect())
}

fn write_lines<T: std::fmt::Display>(path: &Path, values: &[T]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for v in values {
        writeln!(f, "{v}")?;
    }
    f.flush()?;
    Ok(())
}

/// Files written by [`export`].
#[derive(Clone, Debug)]
pub struct ExportedPaths {
    pub data: PathBuf,
    pub basis: PathBuf,
    pub variances: PathBuf,
    pub groups: PathBuf,
    pub metadata: PathBuf,
}

/// Write `Y` (`<stem>.csv`, `D` lines of `N` fields), the true basis,
/// variances and group labels, and a TOML sidecar holding the spec.
pub fn export(instance: &SynthInstance, spec: &SynthSpec, dir: &Path, stem: &str) -> Result<ExportedPaths> {
    fs::create_dir_all(dir)?;
    let paths = ExportedPaths {
        data: dir.join(format!("{stem}.csv")),
        basis: dir.join(format!("{stem}.basis.csv")),
        variances: dir.join(format!("{stem}.variances.csv")),
        groups: dir.join(format!("{stem}.groups.csv")),
        metadata: dir.join(format!("{stem}.meta.toml")),
    };
    write_matrix_csv(&paths.data, instance.data.values())?;
    write_matrix_csv(&paths.basis, &instance.basis)?;
    let vars: Vec<String> = instance.variances.iter().map(|v| format!("{v:?}")).collect();
    write_lines(&paths.variances, &vars)?;
    write_lines(&paths.groups, &instance.assignment)?;
    let meta = toml::to_string(spec).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&paths.metadata, meta)?;
    Ok(paths)
}
