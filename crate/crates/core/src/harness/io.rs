use std::collections::BTreeSet;
use std::path::Path;

use serde::Serialize;

use super::curve::CurveRow;
use super::cv::CvMatrix;
use super::sweep::{sort_rows, RatioRow, SweepRow};
use crate::error::{Error, Result};

/// Columns every sweep CSV must carry; `status` is optional.
pub const SWEEP_COLUMNS: [&str; 9] = [
    "point_ratio",
    "variance_ratio",
    "trial",
    "seed",
    "method",
    "lambda_used",
    "affinity_error",
    "iterations",
    "wall_time",
];

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut header = SWEEP_COLUMNS.to_vec();
    header.push("status");
    write_rows(path, rows, &header)
}

pub fn write_ratios_csv(path: &Path, rows: &[RatioRow]) -> Result<()> {
    write_rows(path, rows, &["point_ratio", "variance_ratio", "method_pair", "mean_ratio"])
}

pub fn write_curve_csv(path: &Path, rows: &[CurveRow]) -> Result<()> {
    write_rows(
        path,
        rows,
        &["method", "lambda_multiplier", "lambda_mean", "mean_error", "max_error", "trials", "failures"],
    )
}

#[derive(Serialize)]
struct CvMatrixRow {
    point_ratio: f64,
    variance_ratio: f64,
    method: String,
    best_multiplier: f64,
    tuned_error: f64,
    global_multiplier: f64,
    global_error: f64,
    trials: usize,
    high_variance: bool,
}

/// One row per cell; the global multiplier is repeated on every row.
pub fn write_cv_matrix_csv(path: &Path, m: &CvMatrix) -> Result<()> {
    let rows: Vec<CvMatrixRow> = m
        .cells
        .iter()
        .map(|c| CvMatrixRow {
            point_ratio: c.point_ratio,
            variance_ratio: c.variance_ratio,
            method: m.method.to_string(),
            best_multiplier: c.best_multiplier,
            tuned_error: c.tuned_error,
            global_multiplier: m.global_multiplier,
            global_error: c.global_error,
            trials: c.trials,
            high_variance: c.high_variance,
        })
        .collect();
    write_rows(
        path,
        &rows,
        &[
            "point_ratio",
            "variance_ratio",
            "method",
            "best_multiplier",
            "tuned_error",
            "global_multiplier",
            "global_error",
            "trials",
            "high_variance",
        ],
    )
}

fn schema(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Read a sweep CSV, checking the header and every record.
pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if let Some(missing) = SWEEP_COLUMNS.iter().find(|c| !header.iter().any(|h| h == **c)) {
        return Err(schema(path, 1, format!("missing column {missing:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.deserialize::<SweepRow>() {
        let row = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            let msg = match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                _ => e.to_string(),
            };
            schema(path, line, msg)
        })?;
        rows.push(row);
    }
    Ok(rows)
}

fn check_unique(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut seen = BTreeSet::new();
    let mut dups = Vec::new();
    for r in rows {
        if !seen.insert(r.sort_key()) {
            dups.push(format!(
                "({}, {}, trial {}, {})",
                r.point_ratio, r.variance_ratio, r.trial, r.method
            ));
        }
    }
    if dups.is_empty() {
        Ok(())
    } else {
        Err(schema(path, 0, format!("duplicate rows: {}", dups.join(", "))))
    }
}

/// Load results produced by another tool. Each row's method becomes
/// `external:<name>`, with `name` defaulting to the file's method column.
pub fn import_external_results(path: &Path, name: Option<&str>) -> Result<Vec<SweepRow>> {
    let mut rows = read_sweep_csv(path)?;
    for r in &mut rows {
        let base = name.unwrap_or(r.method.strip_prefix("external:").unwrap_or(&r.method));
        if base.is_empty() {
            return Err(schema(path, 0, "empty method name"));
        }
        r.method = format!("external:{base}");
    }
    check_unique(path, &rows)?;
    sort_rows(&mut rows);
    Ok(rows)
}

/// Union of two row sets; a `(cell, trial, method)` key present in both is
/// an error.
pub fn merge_rows(existing: Vec<SweepRow>, imported: Vec<SweepRow>) -> Result<Vec<SweepRow>> {
    let mut all = existing;
    all.extend(imported);
    check_unique(Path::new("<merged>"), &all)?;
    sort_rows(&mut all);
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SweepRow {
        SweepRow {
            point_ratio: 2.0,
            variance_ratio: 16.0,
            trial: 3,
            seed: 42,
            method: "alpcah-known".into(),
            lambda_used: Some(1.5),
            affinity_error: Some(0.125),
            iterations: 17,
            wall_time: 0.5,
            status: "ok".into(),
        }
    }

    #[test]
    fn sweep_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/sweep.csv");
        let failed = SweepRow {
            trial: 4,
            lambda_used: None,
            affinity_error: None,
            status: "iterate became non-finite at iteration 3".into(),
            ..sample()
        };
        let rows = vec![sample(), failed];
        write_sweep_csv(&p, &rows).unwrap();
        assert_eq!(read_sweep_csv(&p).unwrap(), rows);
        write_sweep_csv(&p, &[]).unwrap();
        assert!(read_sweep_csv(&p).unwrap().is_empty());
    }

    #[test]
    fn import_tags_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ext.csv");
        std::fs::write(
            &p,
            "point_ratio,variance_ratio,trial,seed,method,lambda_used,affinity_error,iterations,wall_time\n\
             1,4,0,9,heppcat,,0.3,50,1.0\n",
        )
        .unwrap();
        let rows = import_external_results(&p, None).unwrap();
        assert_eq!(rows[0].method, "external:heppcat");
        assert!(rows[0].is_ok());
        let rows = import_external_results(&p, Some("other")).unwrap();
        assert_eq!(rows[0].method, "external:other");
        assert!(merge_rows(rows.clone(), rows).is_err());

        std::fs::write(&p, "point_ratio,variance_ratio,trial\n1,4,0\n").unwrap();
        let err = import_external_results(&p, None).unwrap_err().to_string();
        assert!(err.contains("seed"), "{err}");

        std::fs::write(
            &p,
            "point_ratio,variance_ratio,trial,seed,method,lambda_used,affinity_error,iterations,wall_time\n\
             1,4,0,9,heppcat,,0.3,50,1.0\n\
             1,4,x,9,heppcat,,0.3,50,1.0\n",
        )
        .unwrap();
        let err = import_external_results(&p, None).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");

        std::fs::write(
            &p,
            "point_ratio,variance_ratio,trial,seed,method,lambda_used,affinity_error,iterations,wall_time\n\
             1,4,0,9,heppcat,,0.3,50,1.0\n\
             1,4,0,9,heppcat,,0.4,50,1.0\n",
        )
        .unwrap();
        let err = import_external_results(&p, None).unwrap_err().to_string();
        assert!(err.contains("duplicate"), "{err}");
    }
}
