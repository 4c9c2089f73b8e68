//! Error-rate ladders.

use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::mc::{run_monte_carlo_with, McRun};
use crate::scenario::Scenario;

/// Largest allowed max/min ratio of the normalized medians.
pub const FLATNESS_LIMIT: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub median_err: f64,
    /// `median · √(n/p)` unpenalized, `median / √(s ln p / n)` penalized.
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateTable {
    pub scenario: String,
    pub seed: u64,
    pub penalized: bool,
    pub rows: Vec<RateRow>,
    pub ratio: f64,
    pub flat: bool,
}

pub fn rung_p(base: &Scenario, n: usize) -> usize {
    match base.ladder.as_ref().and_then(|l| l.p_exponent) {
        Some(e) => (n as f64).powf(e).ceil() as usize,
        None => base.p,
    }
}

pub fn normalize(median: f64, n: usize, p: usize, s: usize, penalized: bool) -> f64 {
    let (n, p, s) = (n as f64, p as f64, s as f64);
    if penalized {
        median / (s * p.ln() / n).sqrt()
    } else {
        median * (n / p).sqrt()
    }
}

/// Runs every rung of the scenario's ladder; also returns the runs.
pub fn rate_scan_runs(base: &Scenario, threads: Option<usize>) -> Result<(RateTable, Vec<McRun>)> {
    let ladder = base
        .ladder
        .as_ref()
        .ok_or_else(|| HarnessError::Scenario("scenario has no ladder.n".into()))?;
    let penalized = base.is_penalized();
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for &n in &ladder.ns {
        let rung = base.at(n, rung_p(base, n));
        let run = run_monte_carlo_with(&rung, threads)?;
        let m = &run.summary;
        rows.push(RateRow {
            n,
            p: rung.p,
            s: m.s,
            median_err: m.err2.median,
            normalized: normalize(m.err2.median, n, rung.p, m.s, penalized),
        });
        runs.push(run);
    }
    let hi = rows.iter().map(|r| r.normalized).fold(f64::MIN, f64::max);
    let lo = rows.iter().map(|r| r.normalized).fold(f64::MAX, f64::min);
    let ratio = hi / lo;
    Ok((
        RateTable {
            scenario: base.name.clone(),
            seed: base.seed,
            penalized,
            rows,
            ratio,
            flat: ratio <= FLATNESS_LIMIT,
        },
        runs,
    ))
}

pub fn rate_scan(base: &Scenario) -> Result<RateTable> {
    Ok(rate_scan_runs(base, crate::mc::env_threads())?.0)
}
