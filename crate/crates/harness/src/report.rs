//! Plot-ready CSVs from simulation output directories.

use std::path::{Path, PathBuf};

use esteq::stats::normal_quantile;

use crate::error::{HarnessError, Result};
use crate::mc::{quantile, read_reps_csv, RepRecord};

/// `(coordinate, i, theoretical, empirical)` QQ points against `N(0, 1)`.
pub fn qq_points(records: &[RepRecord]) -> Vec<(usize, usize, f64, f64)> {
    let good: Vec<&RepRecord> = records.iter().filter(|r| r.ok() && !r.stats.is_empty()).collect();
    let d = good.first().map_or(0, |r| r.stats.len());
    let mut out = Vec::new();
    for k in 0..d {
        let mut v: Vec<f64> = good.iter().map(|r| r.stats[k]).collect();
        v.sort_by(f64::total_cmp);
        let m = v.len() as f64;
        for (i, x) in v.iter().enumerate() {
            out.push((k, i, normal_quantile((i as f64 + 0.5) / m), *x));
        }
    }
    out
}

fn rung_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<(usize, PathBuf)> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().to_string();
            let n = name.strip_prefix("n_")?.parse().ok()?;
            e.path().join("reps.csv").exists().then(|| (n, e.path()))
        })
        .collect();
    v.sort();
    Ok(v.into_iter().map(|(_, p)| p).collect())
}

/// Writes `qq.csv` next to every `reps.csv` found in `dir` (and its `n_*`
/// rungs) and, for ladders, `error_vs_n.csv` in `dir`. Returns the files written.
pub fn report(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut written = Vec::new();
    let mut targets = Vec::new();
    if dir.join("reps.csv").exists() {
        targets.push(dir.to_path_buf());
    }
    let rungs = rung_dirs(dir)?;
    targets.extend(rungs.iter().cloned());
    if targets.is_empty() {
        return Err(HarnessError::Io(format!("no reps.csv under {}", dir.display())));
    }
    for t in &targets {
        let records = read_reps_csv(t.join("reps.csv"))?;
        let path = t.join("qq.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["coordinate", "i", "theoretical", "empirical"])?;
        for (k, i, a, b) in qq_points(&records) {
            w.write_record([k.to_string(), i.to_string(), format!("{a:?}"), format!("{b:?}")])?;
        }
        w.flush()?;
        written.push(path);
    }
    if !rungs.is_empty() {
        let path = dir.join("error_vs_n.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["n", "p", "s", "reps", "mean_err2", "median_err2", "q90_err2", "median_errinf"])?;
        for r in &rungs {
            let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(r.join("summary.json"))?)?;
            let field = |k: &str| summary.get(k).map(|v| v.to_string()).unwrap_or_default();
            let records = read_reps_csv(r.join("reps.csv"))?;
            let mut e2: Vec<f64> = records.iter().filter(|r| r.ok()).map(|r| r.err2).collect();
            let mut ei: Vec<f64> = records.iter().filter(|r| r.ok()).map(|r| r.errinf).collect();
            e2.sort_by(f64::total_cmp);
            ei.sort_by(f64::total_cmp);
            w.write_record([
                field("n"),
                field("p"),
                field("s"),
                e2.len().to_string(),
                format!("{:?}", crate::mc::mean(&e2)),
                format!("{:?}", quantile(&e2, 0.5)),
                format!("{:?}", quantile(&e2, 0.9)),
                format!("{:?}", quantile(&ei, 0.5)),
            ])?;
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}
