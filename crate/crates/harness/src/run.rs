//! `solve`, `check` and `infer` driven by a run config.
//!
//! Run config keys:
//!
//! ```text
//! model = mean | huber | glm.ls | glm.logit | glm.huber | distributed | qc | cate | gdpath
//! response = y              # response column (GLM, CATE)
//! model.delta = 1.345       # Huber tuning
//! model.column = 0          # location / qc feature column
//! model.a = 0               # qc target
//! model.link = logistic     # cate: logistic | probit
//! model.z_dim, model.c_dim  # cate block sizes
//! model.f, model.beta, model.alpha, model.theta0, model.batches   # gdpath
//! penalty.kind = none | lasso | enet | scad | mcp | lq | group
//! penalty.lambda = 0.1      # one value, or one per coordinate / group
//! penalty.a, penalty.lambda2, penalty.q
//! penalty.groups = 0 1 | 2 3
//! solver.max_iter, solver.eps_kkt, solver.theta0
//! check.support, check.theta_star, check.radius, check.eta
//! infer.level = 0.95
//! ```

use std::sync::Arc;

use esteq::conditions::{condition_report, default_grid, ConditionReport};
use esteq::inference::{infer, InferenceReport};
use esteq::stack::SharedModel;
use esteq::zoo::{self, CateSpec, GdFunction, GdPathSpec, GlmSpec, Link, LocationModel, PsiKind};
use esteq::{solve_penalized, Dataset, Penalty, SolveOptions, SolveResult};

use crate::config::Config;
use crate::error::{HarnessError, Result};
use crate::scenario::BuiltModel;

fn cfg_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

/// Columns read as the response, if the model has one.
pub fn response_column(c: &Config) -> Result<Option<String>> {
    let model: String = c.require("model")?;
    Ok(match model.as_str() {
        "glm.ls" | "glm.logit" | "glm.huber" | "cate" => Some(c.get_or("response", "y".to_string())?),
        _ => c.get("response")?,
    })
}

pub fn load_data(path: &std::path::Path, c: &Config) -> Result<Dataset<f64>> {
    Ok(esteq::load_csv(path, response_column(c)?.as_deref())?)
}

pub fn build(c: &Config, data: &Dataset<f64>) -> Result<BuiltModel> {
    let model: String = c.require("model")?;
    let delta = c.get_or("model.delta", zoo::HUBER_DELTA)?;
    let column = c.get_or("model.column", 0usize)?;
    Ok(match model.as_str() {
        "mean" => BuiltModel::Plain(Box::new(LocationModel::mean().on_column(column))),
        "huber" => BuiltModel::Plain(Box::new(LocationModel::huber(delta).on_column(column))),
        "glm.ls" | "glm.logit" | "glm.huber" => {
            let psi = match model.as_str() {
                "glm.ls" => PsiKind::LeastSquares,
                "glm.logit" => PsiKind::Logistic,
                _ => PsiKind::Huber { delta },
            };
            BuiltModel::Plain(Box::new(zoo::glm_model(GlmSpec::new(psi, data.arity()))?))
        }
        "distributed" => {
            let sub: SharedModel<f64> = Arc::new(LocationModel::huber(delta).on_column(column));
            let a = zoo::distributed_model(sub, data)?;
            for w in &a.warnings {
                eprintln!("warning: {w}");
            }
            BuiltModel::Stacked(a.model)
        }
        "qc" => BuiltModel::Stacked(zoo::quality_control_model(column, c.get_or("model.a", 0.0)?, data)?),
        "cate" => {
            let link = match c.get_or("model.link", "logistic".to_string())?.as_str() {
                "logistic" => Link::Logistic,
                "probit" => Link::Probit,
                other => return Err(cfg_err(format!("unknown link `{other}`"))),
            };
            let spec = CateSpec::new(link, c.require("model.z_dim")?, c.require("model.c_dim")?);
            BuiltModel::Stacked(zoo::cate_model(spec, data)?)
        }
        "gdpath" => {
            let f = match c.get_or("model.f", "linear".to_string())?.as_str() {
                "linear" => GdFunction::Linear,
                "smooth" => GdFunction::Smooth {
                    beta: c.get_or("model.beta", 0.5)?,
                },
                other => return Err(cfg_err(format!("unknown path function `{other}`"))),
            };
            let spec = GdPathSpec {
                f,
                alpha: c.require("model.alpha")?,
                batches: c.require("model.batches")?,
                theta0: c.get_or("model.theta0", 0.0)?,
            };
            let data = if data.labels().is_some() {
                data.clone()
            } else {
                zoo::assign_batches(data.clone(), spec.batches)?
            };
            BuiltModel::Stacked(zoo::gd_path_model(&spec, &data)?)
        }
        other => return Err(cfg_err(format!("unknown model `{other}`"))),
    })
}

/// `gdpath` assigns batches itself when the data carry no `sample` column.
pub fn prepare_data(c: &Config, data: Dataset<f64>) -> Result<Dataset<f64>> {
    if c.raw("model") == Some("gdpath") && data.labels().is_none() {
        return Ok(zoo::assign_batches(data, c.require("model.batches")?)?);
    }
    Ok(data)
}

fn expand(values: Vec<f64>, len: usize, what: &str) -> Result<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; len]),
        l if l == len => Ok(values),
        l => Err(cfg_err(format!("{what}: expected 1 or {len} values, got {l}"))),
    }
}

pub fn penalty(c: &Config, p: usize) -> Result<Penalty<f64>> {
    let kind = c.get_or("penalty.kind", "none".to_string())?;
    if kind == "none" {
        return Ok(Penalty::none(p));
    }
    let lam = c
        .list::<f64>("penalty.lambda")?
        .ok_or_else(|| cfg_err("penalty.lambda is required"))?;
    Ok(match kind.as_str() {
        "lasso" => Penalty::lasso(expand(lam, p, "penalty.lambda")?)?,
        "enet" | "elastic_net" => Penalty::elastic_net(expand(lam, p, "penalty.lambda")?, c.require("penalty.lambda2")?)?,
        "scad" => Penalty::scad(expand(lam, p, "penalty.lambda")?, c.get_or("penalty.a", 3.7)?)?,
        "mcp" => Penalty::mcp(expand(lam, p, "penalty.lambda")?, c.get_or("penalty.a", 3.0)?)?,
        "lq" => Penalty::lq(expand(lam, p, "penalty.lambda")?, c.require("penalty.q")?)?,
        "group" | "group_lasso" => {
            let text: String = c.require("penalty.groups")?;
            let groups = text
                .split('|')
                .map(|g| {
                    g.split_whitespace()
                        .map(|v| v.parse::<usize>().map_err(|_| cfg_err(format!("bad group index `{v}`"))))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let lg = expand(lam, groups.len(), "penalty.lambda")?;
            Penalty::group_lasso(groups, lg, p)?
        }
        other => return Err(cfg_err(format!("unknown penalty `{other}`"))),
    })
}

pub fn options(c: &Config) -> Result<SolveOptions<f64>> {
    let mut o = SolveOptions {
        max_iter: c.get_or("solver.max_iter", 500usize)?,
        ..SolveOptions::default()
    };
    if let Some(e) = c.get::<f64>("solver.eps_kkt")? {
        o = o.with_eps_kkt(e);
    }
    if let Some(t) = c.list::<f64>("solver.theta0")? {
        o = o.with_theta0(t);
    }
    Ok(o)
}

pub struct Loaded {
    pub data: Dataset<f64>,
    pub model: BuiltModel,
    pub penalty: Penalty<f64>,
}

pub fn load(data_path: &std::path::Path, c: &Config) -> Result<Loaded> {
    let data = prepare_data(c, load_data(data_path, c)?)?;
    let model = build(c, &data)?;
    let p = model.as_dyn().dim();
    let penalty = penalty(c, p)?;
    Ok(Loaded { data, model, penalty })
}

pub fn solve(l: &Loaded, c: &Config) -> Result<SolveResult<f64>> {
    Ok(solve_penalized(l.model.as_dyn(), &l.data, &l.penalty, &options(c)?)?)
}

/// Condition report at `check.theta_star` (default: the solve) on
/// `check.support` (default: support of the solve).
pub fn check(l: &Loaded, c: &Config) -> Result<ConditionReport<f64>> {
    let model = l.model.as_dyn();
    let p = model.dim();
    let fit = solve(l, c)?;
    let theta_star = match c.list::<f64>("check.theta_star")? {
        Some(t) if t.len() == p => t,
        Some(t) => return Err(cfg_err(format!("check.theta_star has {} values, model has {p}", t.len()))),
        None => fit.theta.clone(),
    };
    let support = match c.list::<usize>("check.support")? {
        Some(s) => s,
        None => fit.support.clone(),
    };
    let radius = c.get_or("check.radius", 0.1)?;
    let grid = default_grid(&fit.theta, &support, radius);
    Ok(condition_report(model, &l.data, &l.penalty, &support, &theta_star, &grid, c.get("check.eta")?)?)
}

pub fn infer_from(l: &Loaded, c: &Config, fit: &SolveResult<f64>) -> Result<InferenceReport<f64>> {
    let level = c.get_or("infer.level", 0.95)?;
    let pen = (!l.penalty.is_zero()).then_some(&l.penalty);
    Ok(infer(l.model.as_dyn(), &l.data, &fit.theta, pen, None, level)?)
}

pub fn condition_table(r: &ConditionReport<f64>) -> String {
    let mut s = String::new();
    let line = |s: &mut String, k: &str, v: String| s.push_str(&format!("{k:<22}{v}\n"));
    line(&mut s, "n", r.n.to_string());
    line(&mut s, "p", r.p.to_string());
    line(&mut s, "support", format!("{:?}", r.support));
    line(&mut s, "sigma_n", format!("{:.6}", r.sigma_n));
    line(&mut s, "eta_n", format!("{:.6}", r.eta_n));
    line(&mut s, "alpha", format!("{:.6}", r.alpha));
    let tmax = r.lambda_thresholds.iter().fold(0.0f64, |a, b| a.max(*b));
    line(&mut s, "max lambda threshold", format!("{tmax:.6}"));
    if let Some(e) = r.envelope_max_eig {
        line(&mut s, "envelope max eig", format!("{e:.6}"));
    }
    line(&mut s, "mu", format!("{:.6}", r.mu));
    if let Some(u) = r.uniqueness_margin {
        line(&mut s, "uniqueness margin", format!("{u:.6}"));
    }
    s.push('\n');
    for v in &r.verdicts {
        s.push_str(&format!("{:<22}{:<6}margin {:.6}\n", v.name, if v.pass { "pass" } else { "FAIL" }, v.margin));
    }
    for w in &r.warnings {
        s.push_str(&format!("warning: {w}\n"));
    }
    s
}

pub fn inference_table(r: &InferenceReport<f64>) -> String {
    let mut s = format!(
        "{:>6} {:>14} {:>14} {:>12} {:>14} {:>14}\n",
        "coord", "estimate", "center", "se", "lower", "upper"
    );
    for (i, k) in r.support.iter().enumerate() {
        let (lo, hi) = r.intervals[i];
        s.push_str(&format!(
            "{:>6} {:>14.6} {:>14.6} {:>12.6} {:>14.6} {:>14.6}\n",
            k, r.estimate[i], r.center[i], r.standard_errors[i], lo, hi
        ));
    }
    s.push_str(&format!("level {}, n = {}\n", r.level, r.n));
    for c in &r.caveats {
        s.push_str(&format!("caveat: {c}\n"));
    }
    s
}
