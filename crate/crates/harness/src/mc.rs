//! Monte Carlo replications and their aggregation.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use esteq::inference::{infer, standardize_penalized};
use esteq::solver::RestrictedModel;
use esteq::{
    evaluate_i_hat, evaluate_j_hat, primal_dual_witness, solve_penalized, solve_unpenalized, Dataset, Penalty,
    SolveOptions, Status,
};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::ks::{critical_value, ks_distance, MIN_SAMPLES};
use crate::scenario::{build_model, generate, ModelKind, Population, Scenario, Standardize};
use crate::seed::stream;

/// Abort when more than this fraction of replications fail.
pub const MAX_FAILURE_RATE: f64 = 0.2;

/// Thread cap from `ESTEQ_THREADS`; unset or unparsable means rayon's default.
pub fn env_threads() -> Option<usize> {
    std::env::var("ESTEQ_THREADS").ok()?.trim().parse().ok().filter(|t| *t > 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: u64,
    pub seed: u64,
    pub status: String,
    pub iterations: usize,
    pub err2: f64,
    pub errinf: f64,
    pub recovered: Option<bool>,
    pub witness: Option<bool>,
    pub dual: Option<f64>,
    /// Standardized statistics, one per reported coordinate.
    pub stats: Vec<f64>,
    /// Scaled errors `scale · (θ̂ − θ★)` on the reported coordinates.
    pub scaled: Vec<f64>,
    pub oracle: Vec<f64>,
    pub covered: Vec<bool>,
    pub error: Option<String>,
}

impl RepRecord {
    pub fn ok(&self) -> bool {
        self.status == "converged"
    }

    fn failed(rep: u64, seed: u64, status: &str, iterations: usize, error: String) -> Self {
        Self {
            rep,
            seed,
            status: status.to_string(),
            iterations,
            err2: f64::NAN,
            errinf: f64::NAN,
            recovered: None,
            witness: None,
            dual: None,
            stats: vec![],
            scaled: vec![],
            oracle: vec![],
            covered: vec![],
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorSummary {
    pub mean: f64,
    pub median: f64,
    pub q90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceCheck {
    pub max_rel_err: f64,
    pub max_abs_err_small: f64,
    /// Entries with `|target|` below this are compared absolutely.
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub scenario: String,
    pub model: String,
    pub seed: u64,
    pub reps: usize,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub s: usize,
    pub lambda: Option<f64>,
    pub failures: usize,
    pub failure_rate: f64,
    pub failure_examples: Vec<String>,
    pub err2: ErrorSummary,
    pub errinf: ErrorSummary,
    pub recovery_rate: Option<f64>,
    pub witness_rate: Option<f64>,
    pub coords: Vec<usize>,
    pub ks: Vec<f64>,
    pub ks_critical: f64,
    pub stat_mean: Vec<f64>,
    pub stat_var: Vec<f64>,
    pub empirical_cov: Option<Vec<Vec<f64>>>,
    pub target_cov: Option<Vec<Vec<f64>>>,
    pub cov_check: Option<CovarianceCheck>,
    pub oracle_variance_ratio: Option<Vec<f64>>,
    pub coverage: Option<Vec<f64>>,
    pub verdicts: BTreeMap<String, bool>,
    pub notes: Vec<String>,
}

impl McSummary {
    pub fn all_pass(&self) -> bool {
        self.verdicts.values().all(|v| *v)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn options(s: &Scenario) -> SolveOptions<f64> {
    SolveOptions {
        max_iter: s.max_iter,
        ..SolveOptions::default()
    }
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Converged => "converged",
        Status::MaxIter => "max_iter",
        Status::Diverged => "diverged",
    }
}

/// One replication: generate, solve, optionally witness, standardize.
pub fn run_rep(s: &Scenario, pop: &Population, pen: Option<&Penalty<f64>>, rep: u64) -> RepRecord {
    let seed = stream(s.seed, rep);
    match rep_inner(s, pop, pen, rep, seed) {
        Ok(r) => r,
        Err(e) => RepRecord::failed(rep, seed, "error", 0, e.to_string()),
    }
}

fn rep_inner(s: &Scenario, pop: &Population, pen: Option<&Penalty<f64>>, rep: u64, seed: u64) -> Result<RepRecord> {
    let data = generate(s, pop, rep)?;
    let built = build_model(s, &data)?;
    let model = built.as_dyn();
    let opts = options(s);
    let res = match pen {
        Some(pen) => solve_penalized(model, &data, pen, &opts)?,
        None => solve_unpenalized(model, &data, &opts)?,
    };
    if res.status != Status::Converged {
        return Ok(RepRecord::failed(
            rep,
            seed,
            status_name(res.status),
            res.iterations,
            format!("kkt violation {:.3e} > {:.3e}", res.kkt_violation, res.tolerance),
        ));
    }
    let theta = &res.theta;
    let diff: Vec<f64> = theta.iter().zip(&pop.theta_star).map(|(a, b)| a - b).collect();
    let err2 = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
    let errinf = diff.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let recovered = pen.map(|_| res.support == pop.support);
    let (witness, dual) = match (pen, s.witness) {
        (Some(pen), true) => {
            let w = primal_dual_witness(model, &data, pen, &pop.support, &opts)?;
            (Some(w.passed()), Some(w.dual_statistic))
        }
        _ => (None, None),
    };
    let coords = &pop.coords;
    let scaled: Vec<f64> = coords.iter().map(|&k| pop.scale * diff[k]).collect();
    let stats = statistics(s, pop, model, &data, theta, &scaled)?;
    let oracle = if s.oracle && pen.is_some() {
        oracle_errors(s, pop, model, &data, &opts)?
    } else {
        vec![]
    };
    let covered = if s.coverage {
        let rep = infer(model, &data, theta, pen, None, s.level)?;
        if rep.support == *coords {
            coords
                .iter()
                .zip(&rep.intervals)
                .map(|(&k, (lo, hi))| *lo <= pop.theta_star[k] && pop.theta_star[k] <= *hi)
                .collect()
        } else {
            vec![false; coords.len()]
        }
    } else {
        vec![]
    };
    Ok(RepRecord {
        rep,
        seed,
        status: "converged".into(),
        iterations: res.iterations,
        err2,
        errinf,
        recovered,
        witness,
        dual,
        stats,
        scaled,
        oracle,
        covered,
        error: None,
    })
}

fn statistics(
    s: &Scenario,
    pop: &Population,
    model: &dyn esteq::EstimatingModel<f64>,
    data: &Dataset<f64>,
    theta: &[f64],
    scaled: &[f64],
) -> Result<Vec<f64>> {
    let coords = &pop.coords;
    match (s.model, &pop.j, &pop.i) {
        (ModelKind::Mean | ModelKind::GlmLs | ModelKind::GlmLogit | ModelKind::GlmHuber, Some(j), Some(i)) => {
            let (j, i) = match s.standardize {
                Standardize::Population => (j.clone(), i.clone()),
                Standardize::Plugin => {
                    let jh = evaluate_j_hat(model, data, theta)?;
                    let ih = evaluate_i_hat(model, data, theta)?;
                    (
                        esteq::linalg::submatrix(&jh, coords, coords),
                        esteq::linalg::submatrix(&ih, coords, coords),
                    )
                }
            };
            let hat: Vec<f64> = coords.iter().map(|&k| theta[k]).collect();
            let star: Vec<f64> = coords.iter().map(|&k| pop.theta_star[k]).collect();
            let a = DMatrix::identity(coords.len(), coords.len());
            let z = standardize_penalized(&hat, &star, &j, pop.bias.as_deref(), &a, s.n)?;
            Ok(z.iter().enumerate().map(|(k, v)| v / i[(k, k)].sqrt()).collect())
        }
        (ModelKind::Distributed | ModelKind::GdPath, _, _) => {
            let cov = pop.target_cov.as_ref().expect("target covariance");
            Ok(scaled.iter().enumerate().map(|(k, v)| v / cov[(k, k)].sqrt()).collect())
        }
        _ => Ok(vec![]),
    }
}

/// Scaled errors of the unpenalized fit on the true support.
fn oracle_errors(
    s: &Scenario,
    pop: &Population,
    model: &dyn esteq::EstimatingModel<f64>,
    data: &Dataset<f64>,
    opts: &SolveOptions<f64>,
) -> Result<Vec<f64>> {
    let restricted = RestrictedModel::new(model, pop.support.clone(), model.dim());
    let res = solve_unpenalized(&restricted, data, opts)?.into_converged()?;
    let full = restricted.embed(&res.theta);
    let _ = s;
    Ok(pop.coords.iter().map(|&k| pop.scale * (full[k] - pop.theta_star[k])).collect())
}

/// Runs replications `reps` (in any order) and returns the records sorted by rep.
pub fn run_reps(s: &Scenario, pop: &Population, reps: &[u64], threads: Option<usize>) -> Result<Vec<RepRecord>> {
    let pen = pop.penalty(s)?;
    let work = || -> Vec<RepRecord> { reps.par_iter().map(|&r| run_rep(s, pop, pen.as_ref(), r)).collect() };
    let mut out = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| HarnessError::Scenario(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    out.sort_by_key(|r| r.rep);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct McRun {
    pub summary: McSummary,
    pub records: Vec<RepRecord>,
}

pub fn run_monte_carlo(s: &Scenario) -> Result<McRun> {
    run_monte_carlo_with(s, env_threads())
}

pub fn run_monte_carlo_with(s: &Scenario, threads: Option<usize>) -> Result<McRun> {
    let reps: Vec<u64> = (0..s.reps as u64).collect();
    run_order(s, &reps, threads)
}

/// As [`run_monte_carlo_with`] but executing replications in the given order.
pub fn run_order(s: &Scenario, order: &[u64], threads: Option<usize>) -> Result<McRun> {
    s.validate()?;
    let pop = Population::build(s)?;
    let records = run_reps(s, &pop, order, threads)?;
    let summary = summarize(s, &pop, &records)?;
    Ok(McRun { summary, records })
}

/// Type-7 quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn error_summary(v: &[f64]) -> ErrorSummary {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    ErrorSummary {
        mean: mean(v),
        median: quantile(&s, 0.5),
        q90: quantile(&s, 0.9),
    }
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample covariance of rows.
pub fn sample_cov(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let d = rows.first().map_or(0, |r| r.len());
    let m = rows.len();
    let mu: Vec<f64> = (0..d).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / m as f64).collect();
    let mut c = DMatrix::zeros(d, d);
    for r in rows {
        let x = DVector::from_iterator(d, r.iter().zip(&mu).map(|(a, b)| a - b));
        c += &x * x.transpose();
    }
    c / (m as f64 - 1.0)
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn covariance_check(emp: &DMatrix<f64>, target: &DMatrix<f64>, floor: f64) -> CovarianceCheck {
    let (mut rel, mut abs) = (0.0f64, 0.0f64);
    for (e, t) in emp.iter().zip(target.iter()) {
        if *t != 0.0 && t.abs() >= floor {
            rel = rel.max((e - t).abs() / t.abs());
        } else {
            abs = abs.max((e - t).abs());
        }
    }
    CovarianceCheck {
        max_rel_err: rel,
        max_abs_err_small: abs,
        floor,
    }
}

fn rate(v: impl Iterator<Item = bool>) -> Option<f64> {
    let (mut hit, mut tot) = (0usize, 0usize);
    for b in v {
        tot += 1;
        hit += b as usize;
    }
    (tot > 0).then(|| hit as f64 / tot as f64)
}

/// Aggregates from the per-rep records alone.
pub fn summarize(s: &Scenario, pop: &Population, records: &[RepRecord]) -> Result<McSummary> {
    let failed: Vec<&RepRecord> = records.iter().filter(|r| !r.ok()).collect();
    let failure_rate = failed.len() as f64 / records.len().max(1) as f64;
    let failure_examples: Vec<String> = failed
        .iter()
        .take(5)
        .map(|r| format!("rep {}: {} ({})", r.rep, r.status, r.error.as_deref().unwrap_or("")))
        .collect();
    if failure_rate > MAX_FAILURE_RATE {
        return Err(HarnessError::TooManyFailures {
            failed: failed.len(),
            reps: records.len(),
            examples: failure_examples.join("; "),
        });
    }
    let good: Vec<&RepRecord> = records.iter().filter(|r| r.ok()).collect();
    let d = pop.coords.len();
    let col = |f: &dyn Fn(&RepRecord) -> &Vec<f64>, k: usize| -> Vec<f64> {
        good.iter().filter(|r| f(r).len() == d).map(|r| f(r)[k]).collect()
    };
    let err2 = error_summary(&good.iter().map(|r| r.err2).collect::<Vec<_>>());
    let errinf = error_summary(&good.iter().map(|r| r.errinf).collect::<Vec<_>>());
    let has_stats = good.iter().any(|r| !r.stats.is_empty());
    let mut ks = Vec::new();
    let mut stat_mean = Vec::new();
    let mut stat_var = Vec::new();
    if has_stats {
        for k in 0..d {
            let v = col(&|r| &r.stats, k);
            if v.len() >= MIN_SAMPLES {
                ks.push(ks_distance(&v)?);
            }
            let m = mean(&v);
            stat_mean.push(m);
            stat_var.push(v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0));
        }
    }
    let scaled_rows: Vec<Vec<f64>> = good.iter().filter(|r| r.scaled.len() == d && d > 0).map(|r| r.scaled.clone()).collect();
    let emp = (scaled_rows.len() >= 2).then(|| sample_cov(&scaled_rows));
    let floor = s.checks.get("cov_floor").copied().unwrap_or(0.0);
    let cov_check = match (&emp, &pop.target_cov) {
        (Some(e), Some(t)) => Some(covariance_check(e, t, floor)),
        _ => None,
    };
    let oracle_rows: Vec<Vec<f64>> = good.iter().filter(|r| r.oracle.len() == d && d > 0).map(|r| r.oracle.clone()).collect();
    let oracle_variance_ratio = match (&emp, oracle_rows.len() >= 2) {
        (Some(e), true) => {
            let o = sample_cov(&oracle_rows);
            Some((0..d).map(|k| e[(k, k)] / o[(k, k)]).collect())
        }
        _ => None,
    };
    let coverage = if good.iter().any(|r| !r.covered.is_empty()) {
        Some(
            (0..d)
                .map(|k| rate(good.iter().filter(|r| r.covered.len() == d).map(|r| r.covered[k])).unwrap_or(f64::NAN))
                .collect(),
        )
    } else {
        None
    };
    let recovery_rate = rate(good.iter().filter_map(|r| r.recovered));
    let witness_rate = rate(good.iter().filter_map(|r| r.witness));
    let mut summary = McSummary {
        scenario: s.name.clone(),
        model: s.model.name().to_string(),
        seed: s.seed,
        reps: records.len(),
        n: s.n,
        p: pop.theta_star.len(),
        k: s.k,
        s: pop.support.len(),
        lambda: pop.lambda,
        failures: failed.len(),
        failure_rate,
        failure_examples,
        err2,
        errinf,
        recovery_rate,
        witness_rate,
        coords: pop.coords.clone(),
        ks,
        ks_critical: critical_value(good.len()),
        stat_mean,
        stat_var,
        empirical_cov: emp.as_ref().map(rows),
        target_cov: pop.target_cov.as_ref().map(rows),
        cov_check,
        oracle_variance_ratio,
        coverage,
        verdicts: BTreeMap::new(),
        notes: pop.notes.clone(),
    };
    summary.verdicts = verdicts(&s.checks, &summary);
    Ok(summary)
}

/// Scenario `check.*` thresholds applied to a summary.
pub fn verdicts(checks: &BTreeMap<String, f64>, m: &McSummary) -> BTreeMap<String, bool> {
    let mut v = BTreeMap::new();
    let all = |xs: &[f64], f: &dyn Fn(f64) -> bool| !xs.is_empty() && xs.iter().all(|x| f(*x));
    for (key, &t) in checks {
        let pass = match key.as_str() {
            "ks_max" => all(&m.ks, &|x| x < t),
            "recovery_min" => m.recovery_rate.is_some_and(|r| r >= t),
            "witness_min" => m.witness_rate.is_some_and(|r| r >= t),
            "ratio_lo" => m.oracle_variance_ratio.as_deref().is_some_and(|r| all(r, &|x| x >= t)),
            "ratio_hi" => m.oracle_variance_ratio.as_deref().is_some_and(|r| all(r, &|x| x <= t)),
            "coverage_lo" => m.coverage.as_deref().is_some_and(|r| all(r, &|x| x >= t)),
            "coverage_hi" => m.coverage.as_deref().is_some_and(|r| all(r, &|x| x <= t)),
            "cov_rel" => m.cov_check.as_ref().is_some_and(|c| c.max_rel_err <= t),
            "cov_abs" => m.cov_check.as_ref().is_some_and(|c| c.max_abs_err_small <= t),
            "failure_max" => m.failure_rate <= t,
            _ => continue,
        };
        v.insert(key.clone(), pass);
    }
    v
}

fn fmt_f(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:?}")
    }
}

fn fmt_b(b: Option<bool>) -> String {
    b.map_or(String::new(), |b| (b as u8).to_string())
}

/// Per-rep CSV: `rep, seed, status, iterations, err2, errinf, recovered,
/// witness, dual`, then `stat_k`, `scaled_k`, `oracle_k`, `covered_k` for each
/// reported coordinate, then `error`. Floats use shortest round-trip
/// formatting; empty cells are missing values.
pub fn write_reps_csv<W: Write>(w: W, d: usize, records: &[RepRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["rep", "seed", "status", "iterations", "err2", "errinf", "recovered", "witness", "dual"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for prefix in ["stat", "scaled", "oracle", "covered"] {
        header.extend((0..d).map(|k| format!("{prefix}_{k}")));
    }
    header.push("error".into());
    out.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.rep.to_string(),
            r.seed.to_string(),
            r.status.clone(),
            r.iterations.to_string(),
            fmt_f(r.err2),
            fmt_f(r.errinf),
            fmt_b(r.recovered),
            fmt_b(r.witness),
            r.dual.map_or(String::new(), fmt_f),
        ];
        for v in [&r.stats, &r.scaled, &r.oracle] {
            row.extend((0..d).map(|k| v.get(k).map_or(String::new(), |x| fmt_f(*x))));
        }
        row.extend((0..d).map(|k| fmt_b(r.covered.get(k).copied())));
        row.push(r.error.clone().unwrap_or_default());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads records back from [`write_reps_csv`] output.
pub fn read_reps_csv(path: impl AsRef<Path>) -> Result<Vec<RepRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    let d = header.iter().filter(|h| h.starts_with("stat_")).count();
    let float = |s: &str| -> Result<f64> {
        if s.is_empty() {
            Ok(f64::NAN)
        } else {
            s.parse().map_err(|_| HarnessError::Io(format!("bad float `{s}`")))
        }
    };
    let boolean = |s: &str| -> Option<bool> { (!s.is_empty()).then_some(s == "1") };
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let g = |i: usize| row.get(i).unwrap_or("");
        let vec_at = |start: usize| -> Result<Vec<f64>> {
            if g(start).is_empty() {
                return Ok(vec![]);
            }
            (0..d).map(|k| float(g(start + k))).collect()
        };
        let parse_u = |s: &str| s.parse::<u64>().map_err(|_| HarnessError::Io(format!("bad integer `{s}`")));
        let covered: Vec<bool> = (0..d).filter_map(|k| boolean(g(9 + 3 * d + k))).collect();
        out.push(RepRecord {
            rep: parse_u(g(0))?,
            seed: parse_u(g(1))?,
            status: g(2).to_string(),
            iterations: parse_u(g(3))? as usize,
            err2: float(g(4))?,
            errinf: float(g(5))?,
            recovered: boolean(g(6)),
            witness: boolean(g(7)),
            dual: (!g(8).is_empty()).then(|| float(g(8))).transpose()?,
            stats: vec_at(9)?,
            scaled: vec_at(9 + d)?,
            oracle: vec_at(9 + 2 * d)?,
            covered,
            error: Some(g(9 + 4 * d).to_string()).filter(|e| !e.is_empty()),
        });
    }
    Ok(out)
}

/// Writes `reps.csv` and `summary.json` into `dir`.
pub fn write_outputs(dir: impl AsRef<Path>, run: &McRun) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let f = std::fs::File::create(dir.join("reps.csv"))?;
    write_reps_csv(std::io::BufWriter::new(f), run.summary.coords.len(), &run.records)?;
    std::fs::write(dir.join("summary.json"), run.summary.to_json()?)?;
    Ok(())
}
