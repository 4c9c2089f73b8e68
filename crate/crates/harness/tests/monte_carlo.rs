use esteq::stats::normal_cdf;
use esteq_harness::mc::{read_reps_csv, run_monte_carlo_with, run_order, summarize, write_outputs, MAX_FAILURE_RATE};
use esteq_harness::rates::rate_scan_runs;
use esteq_harness::scenario::Population;
use esteq_harness::{Config, HarnessError, Scenario};

fn scenario(text: &str) -> Scenario {
    Scenario::from_config(&Config::parse(text).unwrap()).unwrap()
}

const SMALL_LASSO: &str = "
name = small_lasso
model = glm.ls
seed = 77
reps = 60
n = 200
p = 12
design.rho = 0.2
truth.values = 2, -1.5, 1
penalty.kind = lasso
lambda.rule = threshold
stats.witness = true
stats.oracle = true
stats.coverage = true
";

#[test]
fn same_seed_same_bytes_any_thread_count() {
    let s = scenario(SMALL_LASSO);
    let a = run_monte_carlo_with(&s, Some(1)).unwrap();
    let b = run_monte_carlo_with(&s, Some(4)).unwrap();
    assert_eq!(a.summary.to_json().unwrap(), b.summary.to_json().unwrap());
    assert_eq!(a.records, b.records);
    let mut other = s.clone();
    other.seed = 78;
    assert_ne!(run_monte_carlo_with(&other, Some(1)).unwrap().summary.to_json().unwrap(), a.summary.to_json().unwrap());
}

#[test]
fn permuted_execution_order_leaves_summary_unchanged() {
    let s = scenario(SMALL_LASSO);
    let forward: Vec<u64> = (0..s.reps as u64).collect();
    let mut shuffled: Vec<u64> = forward.iter().map(|r| (r * 37 + 11) % s.reps as u64).collect();
    shuffled.reverse();
    let mut check = shuffled.clone();
    check.sort();
    assert_eq!(check, forward);
    let a = run_order(&s, &forward, Some(2)).unwrap();
    let b = run_order(&s, &shuffled, Some(2)).unwrap();
    assert_eq!(a.summary.to_json().unwrap(), b.summary.to_json().unwrap());
}

fn ks_independent(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = normal_cdf(*x);
            ((i as f64 + 1.0) / m - f).abs().max((f - i as f64 / m).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn aggregates_recompute_from_the_csv() {
    let s = scenario(SMALL_LASSO);
    let run = run_monte_carlo_with(&s, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(dir.path(), &run).unwrap();

    // independent pass over the raw CSV
    let mut rdr = csv::Reader::from_path(dir.path().join("reps.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    let ok: Vec<&csv::StringRecord> = rows.iter().filter(|r| &r[col("status")] == "converged").collect();
    let num = |r: &csv::StringRecord, c: &str| r[col(c)].parse::<f64>().unwrap();
    let m = &run.summary;
    let err2: Vec<f64> = ok.iter().map(|r| num(r, "err2")).collect();
    assert!((err2.iter().sum::<f64>() / err2.len() as f64 - m.err2.mean).abs() < 1e-12);
    let rec = ok.iter().filter(|r| &r[col("recovered")] == "1").count() as f64 / ok.len() as f64;
    assert!((rec - m.recovery_rate.unwrap()).abs() < 1e-12);
    let wit = ok.iter().filter(|r| &r[col("witness")] == "1").count() as f64 / ok.len() as f64;
    assert!((wit - m.witness_rate.unwrap()).abs() < 1e-12);
    for k in 0..m.coords.len() {
        let z: Vec<f64> = ok.iter().map(|r| num(r, &format!("stat_{k}"))).collect();
        assert!((ks_independent(z) - m.ks[k]).abs() < 1e-12);
        let x: Vec<f64> = ok.iter().map(|r| num(r, &format!("scaled_{k}"))).collect();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0);
        let emp = m.empirical_cov.as_ref().unwrap()[k][k];
        assert!((var - emp).abs() <= 1e-12 * emp.max(1.0), "{var} vs {emp}");
        let cov = ok.iter().filter(|r| &r[col(&format!("covered_{k}"))] == "1").count() as f64 / ok.len() as f64;
        assert!((cov - m.coverage.as_ref().unwrap()[k]).abs() < 1e-12);
    }

    // and the library's own re-read reproduces the summary exactly
    let records = read_reps_csv(dir.path().join("reps.csv")).unwrap();
    let again = summarize(&s, &Population::build(&s).unwrap(), &records).unwrap();
    assert_eq!(again.to_json().unwrap(), m.to_json().unwrap());
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["seed"], 77);
}

#[test]
fn summary_invariants() {
    let m = run_monte_carlo_with(&scenario(SMALL_LASSO), None).unwrap().summary;
    for r in [m.recovery_rate, m.witness_rate].into_iter().flatten() {
        assert!((0.0..=1.0).contains(&r));
    }
    assert!(m.ks.iter().all(|k| (0.0..=1.0).contains(k)));
    assert_eq!(m.failures, 0);
    assert_eq!(m.reps, 60);
}

#[test]
fn too_many_failures_abort_with_diagnostics() {
    let mut s = scenario("model = glm.logit\nseed = 5\nreps = 40\nn = 200\np = 4\ntruth.values = 1, -1\n");
    s.max_iter = 1;
    match run_monte_carlo_with(&s, None) {
        Err(HarnessError::TooManyFailures { failed, reps, examples }) => {
            assert!(failed as f64 > MAX_FAILURE_RATE * reps as f64);
            assert!(examples.contains("max_iter"), "{examples}");
        }
        other => panic!("expected an abort, got {:?}", other.map(|r| r.summary.failures)),
    }
}

#[test]
fn mean_model_normality_and_coverage() {
    let s = scenario(include_str!("../scenarios/normality_mean.cfg"));
    let m = run_monte_carlo_with(&s, None).unwrap().summary;
    assert!(m.ks[0] < 0.035, "{:?}", m.ks);
    let c = m.coverage.unwrap()[0];
    assert!((0.93..=0.97).contains(&c), "{c}");
}

#[test]
fn qc_recovery() {
    let mut s = scenario(include_str!("../scenarios/selection_qc.cfg"));
    s.reps = 60;
    let m = run_monte_carlo_with(&s, None).unwrap().summary;
    assert!(m.recovery_rate.unwrap() >= 0.95);
}

#[test]
fn lasso_ladder_is_flat_and_error_falls_with_n() {
    let s = scenario(include_str!("../scenarios/rates_lasso.cfg"));
    let (table, _) = rate_scan_runs(&s, None).unwrap();
    assert!(table.flat, "{table:?}");
    for w in table.rows.windows(2) {
        assert!(w[1].median_err < w[0].median_err);
    }
}

#[test]
fn population_for_the_scad_scenario() {
    let s = scenario(include_str!("../scenarios/oracle_scad.cfg"));
    let pop = Population::build(&s).unwrap();
    assert_eq!(pop.support, vec![0, 1, 2]);
    // identity design, unit noise: sigma_n = 1, alpha = 0, J_nk = 1
    let expect = 4.0 * 2.0 * (100f64.ln() / 1000.0).sqrt();
    assert!((pop.lambda.unwrap() - expect).abs() < 1e-12);
    // strong signal: the SCAD bias at the truth vanishes
    assert!(pop.bias.unwrap().iter().all(|b| *b == 0.0));
}
