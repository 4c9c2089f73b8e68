use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use esteq::SolveResult;
use esteq_harness::{mc, rates, report, run, Config, Result, Scenario};

#[derive(Parser)]
#[command(name = "esteq", version, about = "Solve, check and simulate penalized estimating equations")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the (penalized) estimating equation and write a SolveResult.
    Solve {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the regularity conditions; exit 0 iff every verdict passes.
    Check {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Print JSON instead of the table.
        #[arg(long)]
        json: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sandwich inference from a SolveResult.
    Infer {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a seeded Monte Carlo scenario.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Plot-ready CSVs from a simulate output directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().cmd {
        Cmd::Solve { data, config, out } => {
            let c = Config::load(&config)?;
            let l = run::load(&data, &c)?;
            let r = run::solve(&l, &c)?;
            std::fs::write(&out, serde_json::to_string_pretty(&r)?)?;
            println!(
                "status {:?}, {} iterations, kkt violation {:.3e} (tolerance {:.3e})",
                r.status, r.iterations, r.kkt_violation, r.tolerance
            );
            Ok(if r.converged() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Cmd::Check { data, config, json, out } => {
            let c = Config::load(&config)?;
            let l = run::load(&data, &c)?;
            let r = run::check(&l, &c)?;
            let text = serde_json::to_string_pretty(&r)?;
            if let Some(out) = out {
                std::fs::write(out, &text)?;
            }
            if json {
                println!("{text}");
            } else {
                print!("{}", run::condition_table(&r));
            }
            Ok(if r.all_pass() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Cmd::Infer { data, config, result, out } => {
            let c = Config::load(&config)?;
            let l = run::load(&data, &c)?;
            let fit: SolveResult<f64> = serde_json::from_str(&std::fs::read_to_string(result)?)?;
            let r = run::infer_from(&l, &c, &fit)?;
            std::fs::write(&out, serde_json::to_string_pretty(&r)?)?;
            print!("{}", run::inference_table(&r));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Simulate { scenario, out_dir } => {
            let s = Scenario::load(&scenario)?;
            let threads = mc::env_threads();
            if s.ladder.is_some() {
                let (table, runs) = rates::rate_scan_runs(&s, threads)?;
                for run in &runs {
                    mc::write_outputs(out_dir.join(format!("n_{}", run.summary.n)), run)?;
                }
                std::fs::write(out_dir.join("rates.json"), serde_json::to_string_pretty(&table)?)?;
                for r in &table.rows {
                    println!("n {:>6}  p {:>4}  median {:.6}  normalized {:.6}", r.n, r.p, r.median_err, r.normalized);
                }
                println!("ratio {:.4}  flat {}", table.ratio, table.flat);
                Ok(if table.flat { ExitCode::SUCCESS } else { ExitCode::from(1) })
            } else {
                let run = mc::run_monte_carlo_with(&s, threads)?;
                mc::write_outputs(&out_dir, &run)?;
                let m = &run.summary;
                println!("{}: {} reps, {} failures", m.scenario, m.reps, m.failures);
                for (k, v) in &m.verdicts {
                    println!("{k:<16}{}", if *v { "pass" } else { "FAIL" });
                }
                Ok(if m.all_pass() { ExitCode::SUCCESS } else { ExitCode::from(1) })
            }
        }
        Cmd::Report { input } => {
            for p in report::report(&input)? {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
