//! Scenario files, population reference quantities and data generation.

use std::collections::BTreeMap;
use std::sync::Arc;

use esteq::stack::SharedModel;
use esteq::zoo::{
    self, cate_model, glm_model, gd_path_covariance, gd_path_model, huber_location_variance, path_moments,
    population_path, CateSpec, GdFunction, GdPathSpec, GlmSpec, Link, LocationModel, PsiKind,
};
use esteq::{Dataset, EstimatingModel, Penalty, StackedModel};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::config::Config;
use crate::error::{HarnessError, Result};
use crate::seed::rep_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mean,
    GlmLs,
    GlmLogit,
    GlmHuber,
    Distributed,
    Qc,
    Cate,
    GdPath,
}

impl ModelKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "mean" => Self::Mean,
            "glm.ls" => Self::GlmLs,
            "glm.logit" => Self::GlmLogit,
            "glm.huber" => Self::GlmHuber,
            "distributed" => Self::Distributed,
            "qc" => Self::Qc,
            "cate" => Self::Cate,
            "gdpath" => Self::GdPath,
            _ => return Err(HarnessError::Scenario(format!("unknown model `{s}`"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Mean => "mean",
            Self::GlmLs => "glm.ls",
            Self::GlmLogit => "glm.logit",
            Self::GlmHuber => "glm.huber",
            Self::Distributed => "distributed",
            Self::Qc => "qc",
            Self::Cate => "cate",
            Self::GdPath => "gdpath",
        }
    }

    pub fn is_glm(&self) -> bool {
        matches!(self, Self::GlmLs | Self::GlmLogit | Self::GlmHuber)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignLaw {
    Gaussian,
    Uniform,
    Rademacher,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLaw {
    Gaussian,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltyChoice {
    None,
    Lasso,
    ElasticNet { lambda2: f64 },
    Scad { a: f64 },
    Mcp { a: f64 },
    Group { size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LambdaRule {
    Fixed { value: f64 },
    /// `multiplier · 4/(1−α) · J_{n,k} · η_n` at population quantities.
    Threshold { multiplier: f64 },
    /// `multiplier · 8 · max_k √(σ_k² ln K / n_k)`.
    QualityControl { multiplier: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Standardize {
    /// `J`, `I` at `θ★` from closed forms or the reference sample.
    Population,
    /// `Ĵ`, `Î` at `θ̂`.
    Plugin,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ladder {
    pub ns: Vec<usize>,
    /// `p = ⌈n^exponent⌉`; `None` keeps `p` fixed.
    pub p_exponent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    pub model: ModelKind,
    pub seed: u64,
    pub reps: usize,
    pub n: usize,
    pub p: usize,
    /// Machines, locations or batches.
    pub k: usize,
    pub design: DesignLaw,
    pub rho: f64,
    pub noise: NoiseLaw,
    pub noise_sd: f64,
    /// Model-specific truth; see [`Scenario::from_config`].
    pub truth: Vec<f64>,
    pub truth_dense: bool,
    pub penalty: PenaltyChoice,
    pub lambda: LambdaRule,
    pub witness: bool,
    pub oracle: bool,
    pub coverage: bool,
    pub level: f64,
    pub standardize: Standardize,
    pub huber_delta: f64,
    pub machine_sd: Vec<f64>,
    pub qc_target: f64,
    pub gd_alpha: f64,
    pub gd_f: GdFunction<f64>,
    pub gd_theta0: f64,
    pub x_mean: f64,
    pub x_sd: f64,
    pub cate_link: Link,
    pub cate_z_dim: usize,
    pub cate_c_dim: usize,
    pub cate_tau: Vec<f64>,
    pub reference_size: usize,
    pub reference_seed: u64,
    pub max_iter: usize,
    pub checks: BTreeMap<String, f64>,
    pub ladder: Option<Ladder>,
}

fn scen(msg: impl Into<String>) -> HarnessError {
    HarnessError::Scenario(msg.into())
}

impl Scenario {
    /// Reads a scenario from config keys:
    ///
    /// `name model seed reps n p k`, `design.law design.rho`,
    /// `noise.law noise.sd`, `truth.values` or `truth.s truth.signal`
    /// (`truth.dense = true` spreads `truth.signal` over all `p` with
    /// alternating signs and norm `truth.signal`), `penalty.kind penalty.a
    /// penalty.lambda2 penalty.group_size`, `lambda.rule` (`fixed`, `threshold`, `qc`)
    /// with `lambda.value` or `lambda.multiplier`, `stats.witness stats.oracle
    /// stats.coverage stats.level stats.standardize`, `model.*` parameters,
    /// `reference.size reference.seed`, `solver.max_iter`, `check.*`
    /// thresholds and `ladder.n ladder.p_exponent`.
    pub fn from_config(c: &Config) -> Result<Self> {
        let model = ModelKind::parse(&c.require::<String>("model")?)?;
        let design = match c.get_or("design.law", "gaussian".to_string())?.as_str() {
            "gaussian" => DesignLaw::Gaussian,
            "uniform" => DesignLaw::Uniform,
            "rademacher" => DesignLaw::Rademacher,
            other => return Err(scen(format!("unsupported design law `{other}`"))),
        };
        let noise = match c.get_or("noise.law", "gaussian".to_string())?.as_str() {
            "gaussian" => NoiseLaw::Gaussian,
            "logistic" => NoiseLaw::Logistic,
            other => return Err(scen(format!("unsupported noise law `{other}`"))),
        };
        let penalty = match c.get_or("penalty.kind", "none".to_string())?.as_str() {
            "none" => PenaltyChoice::None,
            "lasso" => PenaltyChoice::Lasso,
            "enet" | "elastic_net" => PenaltyChoice::ElasticNet {
                lambda2: c.require("penalty.lambda2")?,
            },
            "scad" => PenaltyChoice::Scad {
                a: c.get_or("penalty.a", 3.7)?,
            },
            "mcp" => PenaltyChoice::Mcp {
                a: c.get_or("penalty.a", 3.0)?,
            },
            "group" | "group_lasso" => PenaltyChoice::Group {
                size: c.require("penalty.group_size")?,
            },
            other => return Err(scen(format!("unknown penalty `{other}`"))),
        };
        let lambda = match c.get_or("lambda.rule", "fixed".to_string())?.as_str() {
            "fixed" => LambdaRule::Fixed {
                value: c.get_or("lambda.value", 0.0)?,
            },
            "threshold" => LambdaRule::Threshold {
                multiplier: c.get_or("lambda.multiplier", 1.0)?,
            },
            "qc" => LambdaRule::QualityControl {
                multiplier: c.get_or("lambda.multiplier", 1.0)?,
            },
            other => return Err(scen(format!("unknown lambda rule `{other}`"))),
        };
        let standardize = match c.get_or("stats.standardize", "population".to_string())?.as_str() {
            "population" => Standardize::Population,
            "plugin" => Standardize::Plugin,
            other => return Err(scen(format!("unknown standardization `{other}`"))),
        };
        let gd_f = match c.get_or("model.f", "linear".to_string())?.as_str() {
            "linear" => GdFunction::Linear,
            "smooth" => GdFunction::Smooth {
                beta: c.get_or("model.beta", 0.5)?,
            },
            other => return Err(scen(format!("unknown path function `{other}`"))),
        };
        let cate_link = match c.get_or("model.link", "logistic".to_string())?.as_str() {
            "logistic" => Link::Logistic,
            "probit" => Link::Probit,
            other => return Err(scen(format!("unknown link `{other}`"))),
        };
        let p = c.get_or("p", 1usize)?;
        let truth = match c.list::<f64>("truth.values")? {
            Some(v) => v,
            None => {
                let s = c.get_or("truth.s", 0usize)?;
                let signal = c.get_or("truth.signal", 1.0)?;
                (0..s).map(|k| if k % 2 == 0 { signal } else { -signal }).collect()
            }
        };
        let checks = c
            .section("check")
            .into_iter()
            .map(|(k, v)| {
                v.parse::<f64>()
                    .map(|x| (k.clone(), x))
                    .map_err(|_| scen(format!("check.{k} = {v} is not a number")))
            })
            .collect::<Result<_>>()?;
        let ladder = match c.list::<usize>("ladder.n")? {
            Some(ns) if !ns.is_empty() => Some(Ladder {
                ns,
                p_exponent: c.get("ladder.p_exponent")?,
            }),
            _ => None,
        };
        let s = Self {
            name: c.get_or("name", "scenario".to_string())?,
            model,
            seed: c.require("seed")?,
            reps: c.get_or("reps", 100usize)?,
            n: c.require("n")?,
            p,
            k: c.get_or("k", 1usize)?,
            design,
            rho: c.get_or("design.rho", 0.0)?,
            noise,
            noise_sd: c.get_or("noise.sd", 1.0)?,
            truth,
            truth_dense: c.flag("truth.dense")?,
            penalty,
            lambda,
            witness: c.flag("stats.witness")?,
            oracle: c.flag("stats.oracle")?,
            coverage: c.flag("stats.coverage")?,
            level: c.get_or("stats.level", 0.95)?,
            standardize,
            huber_delta: c.get_or("model.delta", zoo::HUBER_DELTA)?,
            machine_sd: c.list("model.sd")?.unwrap_or_else(|| vec![1.0]),
            qc_target: c.get_or("model.a", 0.0)?,
            gd_alpha: c.get_or("model.alpha", 0.1)?,
            gd_f,
            gd_theta0: c.get_or("model.theta0", 0.0)?,
            x_mean: c.get_or("model.x_mean", 0.0)?,
            x_sd: c.get_or("model.x_sd", 1.0)?,
            cate_link,
            cate_z_dim: c.get_or("model.z_dim", 2usize)?,
            cate_c_dim: c.get_or("model.c_dim", 1usize)?,
            cate_tau: c.list("model.tau")?.unwrap_or_else(|| vec![1.0, 0.5]),
            reference_size: c.get_or("reference.size", 1_000_000usize)?,
            reference_seed: c.get_or("reference.seed", 0x5EED_u64)?,
            max_iter: c.get_or("solver.max_iter", 500usize)?,
            checks,
            ladder,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_config(&Config::load(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(scen("reps must be at least 1"));
        }
        if self.n < 2 {
            return Err(scen("n must be at least 2"));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(scen("design.rho must lie in (-1, 1)"));
        }
        if !(self.noise_sd > 0.0) || self.machine_sd.iter().any(|s| !(*s > 0.0)) {
            return Err(scen("noise scales must be positive"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(scen("stats.level must lie in (0, 1)"));
        }
        let grouped = matches!(self.model, ModelKind::Distributed | ModelKind::Qc | ModelKind::GdPath);
        if grouped && (self.k == 0 || self.n % self.k != 0) {
            return Err(scen(format!("n = {} is not divisible by k = {}", self.n, self.k)));
        }
        match self.model {
            ModelKind::Mean if self.truth.len() != 1 => Err(scen("mean model needs one truth value")),
            m if m.is_glm() && !self.truth_dense && self.truth.len() > self.p => {
                Err(scen("more truth values than p"))
            }
            ModelKind::Qc if self.truth.len() > self.k => Err(scen("more truth values than machines")),
            ModelKind::Distributed if self.truth.len() != 1 => Err(scen("distributed model needs one truth value")),
            ModelKind::Cate if self.truth.len() != self.cate_z_dim + self.cate_c_dim => {
                Err(scen("cate truth.values is the propensity parameter, of length z_dim + c_dim"))
            }
            ModelKind::Cate if self.cate_tau.len() != self.cate_z_dim => Err(scen("model.tau needs z_dim values")),
            ModelKind::GdPath => GdPathSpec {
                f: self.gd_f,
                alpha: self.gd_alpha,
                batches: self.k,
                theta0: self.gd_theta0,
            }
            .validate()
            .map_err(HarnessError::from),
            _ => Ok(()),
        }
    }

    pub fn is_penalized(&self) -> bool {
        !matches!(self.penalty, PenaltyChoice::None)
    }

    /// Same scenario at another `(n, p)`.
    pub fn at(&self, n: usize, p: usize) -> Self {
        let mut s = self.clone();
        s.n = n;
        s.p = p;
        s.ladder = None;
        s
    }

    pub fn gd_spec(&self) -> GdPathSpec<f64> {
        GdPathSpec {
            f: self.gd_f,
            alpha: self.gd_alpha,
            batches: self.k,
            theta0: self.gd_theta0,
        }
    }

    pub fn cate_spec(&self) -> CateSpec {
        CateSpec::new(self.cate_link, self.cate_z_dim, self.cate_c_dim)
    }

    fn glm_truth(&self) -> Vec<f64> {
        if self.truth_dense {
            let signal = self.truth.first().copied().unwrap_or(1.0);
            let a = signal / (self.p as f64).sqrt();
            (0..self.p).map(|k| if k % 2 == 0 { a } else { -a }).collect()
        } else {
            let mut t = self.truth.clone();
            t.resize(self.p, 0.0);
            t
        }
    }

    fn sd_of(&self, k: usize) -> f64 {
        self.machine_sd[k % self.machine_sd.len()]
    }

    fn psi(&self) -> PsiKind<f64> {
        match self.model {
            ModelKind::GlmLogit => PsiKind::Logistic,
            ModelKind::GlmHuber => PsiKind::Huber {
                delta: self.huber_delta,
            },
            _ => PsiKind::LeastSquares,
        }
    }
}

/// The estimating equation a scenario solves.
pub enum BuiltModel {
    Plain(Box<dyn EstimatingModel<f64>>),
    Stacked(StackedModel<f64>),
}

impl BuiltModel {
    pub fn as_dyn(&self) -> &dyn EstimatingModel<f64> {
        match self {
            BuiltModel::Plain(m) => m.as_ref(),
            BuiltModel::Stacked(s) => s,
        }
    }
}

pub fn build_model(s: &Scenario, data: &Dataset<f64>) -> Result<BuiltModel> {
    Ok(match s.model {
        ModelKind::Mean => BuiltModel::Plain(Box::new(LocationModel::mean())),
        ModelKind::GlmLs | ModelKind::GlmLogit | ModelKind::GlmHuber => {
            BuiltModel::Plain(Box::new(glm_model(GlmSpec::new(s.psi(), s.p))?))
        }
        ModelKind::Distributed => {
            let sub: SharedModel<f64> = Arc::new(LocationModel::huber(s.huber_delta));
            BuiltModel::Stacked(zoo::distributed_model(sub, data)?.model)
        }
        ModelKind::Qc => BuiltModel::Stacked(zoo::quality_control_model(0, s.qc_target, data)?),
        ModelKind::Cate => BuiltModel::Stacked(cate_model(s.cate_spec(), data)?),
        ModelKind::GdPath => BuiltModel::Stacked(gd_path_model(&s.gd_spec(), data)?),
    })
}

/// Reference quantities at the truth, computed once per scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Population {
    /// Truth in model coordinates.
    pub theta_star: Vec<f64>,
    pub support: Vec<usize>,
    /// Coordinates the standardized statistics are about.
    pub coords: Vec<usize>,
    /// Population `J`, `I` on `coords` (when the model has them).
    #[serde(skip)]
    pub j: Option<DMatrix<f64>>,
    #[serde(skip)]
    pub i: Option<DMatrix<f64>>,
    /// `p′_λ(θ★)` on `coords`.
    pub bias: Option<Vec<f64>>,
    /// Multiplier turning `θ̂ − θ★` into the scaled error.
    pub scale: f64,
    /// Limit covariance of the scaled error on `coords`.
    #[serde(skip)]
    pub target_cov: Option<DMatrix<f64>>,
    pub lambda: Option<f64>,
    pub notes: Vec<String>,
}

fn ar_cov(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()))
}

/// Unit-variance draw from the design law.
fn design_draw(law: DesignLaw, rng: &mut ChaCha8Rng) -> f64 {
    match law {
        DesignLaw::Gaussian => StandardNormal.sample(rng),
        DesignLaw::Uniform => (rng.random::<f64>() * 2.0 - 1.0) * 3f64.sqrt(),
        DesignLaw::Rademacher => {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
    }
}

/// Draw with standard deviation `sd` from the noise law.
fn noise_draw(law: NoiseLaw, sd: f64, rng: &mut ChaCha8Rng) -> f64 {
    match law {
        NoiseLaw::Gaussian => {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        }
        NoiseLaw::Logistic => {
            let u: f64 = rng.random::<f64>().clamp(1e-300, 1.0 - 1e-16);
            sd * 3f64.sqrt() / std::f64::consts::PI * (u / (1.0 - u)).ln()
        }
    }
}

/// One AR(ρ) design row with unit marginal variances.
fn design_row(law: DesignLaw, rho: f64, p: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let c = (1.0 - rho * rho).sqrt();
    let mut row = Vec::with_capacity(p);
    let mut prev = 0.0;
    for j in 0..p {
        let z = design_draw(law, rng);
        prev = if j == 0 { z } else { rho * prev + c * z };
        row.push(prev);
    }
    row
}

fn sigmoid(x: f64) -> f64 {
    zoo::sigmoid(x)
}

fn make_penalty(s: &Scenario, p: usize, lambda: f64) -> Result<Option<Penalty<f64>>> {
    let lam = vec![lambda; p];
    Ok(match s.penalty {
        PenaltyChoice::None => None,
        PenaltyChoice::Lasso => Some(Penalty::lasso(lam)?),
        PenaltyChoice::ElasticNet { lambda2 } => Some(Penalty::elastic_net(lam, lambda2)?),
        PenaltyChoice::Scad { a } => Some(Penalty::scad(lam, a)?),
        PenaltyChoice::Mcp { a } => Some(Penalty::mcp(lam, a)?),
        PenaltyChoice::Group { size } => {
            if size == 0 || p % size != 0 {
                return Err(scen(format!("group size {size} does not divide p = {p}")));
            }
            let groups: Vec<Vec<usize>> = (0..p / size).map(|g| (g * size..(g + 1) * size).collect()).collect();
            let lg = vec![lambda * (size as f64).sqrt(); p / size];
            Some(Penalty::group_lasso(groups, lg, p)?)
        }
    })
}

impl Population {
    pub fn build(s: &Scenario) -> Result<Self> {
        let mut notes = Vec::new();
        let sqrt_n = (s.n as f64).sqrt();
        let pop = match s.model {
            ModelKind::Mean => {
                let v = s.noise_sd * s.noise_sd;
                Population {
                    theta_star: s.truth.clone(),
                    support: vec![0],
                    coords: vec![0],
                    j: Some(DMatrix::from_element(1, 1, -1.0)),
                    i: Some(DMatrix::from_element(1, 1, v)),
                    bias: None,
                    scale: sqrt_n,
                    target_cov: Some(DMatrix::from_element(1, 1, v)),
                    lambda: None,
                    notes,
                }
            }
            ModelKind::GlmLs | ModelKind::GlmLogit | ModelKind::GlmHuber => return Self::glm(s),
            ModelKind::Distributed => {
                let mut sig = 0.0;
                for k in 0..s.k {
                    sig += match s.noise {
                        NoiseLaw::Gaussian => huber_location_variance(s.sd_of(k), s.huber_delta),
                        NoiseLaw::Logistic => reference_huber_variance(s, s.sd_of(k)),
                    };
                }
                sig /= s.k as f64;
                let mut theta = vec![s.truth[0]; s.k + 1];
                theta[s.k] = s.truth[0];
                Population {
                    theta_star: theta,
                    support: (0..=s.k).collect(),
                    coords: vec![s.k],
                    j: None,
                    i: None,
                    bias: None,
                    scale: sqrt_n,
                    target_cov: Some(DMatrix::from_element(1, 1, sig)),
                    lambda: None,
                    notes,
                }
            }
            ModelKind::Qc => {
                let mut theta = s.truth.clone();
                theta.resize(s.k, 0.0);
                let support: Vec<usize> = (0..s.k).filter(|&k| theta[k] != 0.0).collect();
                let nk = s.n / s.k;
                let lambda = match s.lambda {
                    LambdaRule::Fixed { value } => value,
                    LambdaRule::QualityControl { multiplier } => {
                        let sig2: Vec<f64> = (0..s.k).map(|k| s.sd_of(k).powi(2)).collect();
                        multiplier * zoo::quality_control_lambda(&sig2, &vec![nk; s.k])?
                    }
                    LambdaRule::Threshold { multiplier } => {
                        // decoupled: α = 0, J_nk = 1, σ_n² = max_k (n/n_k) σ_k² on the stacked scale
                        let sig = (0..s.k).map(|k| s.sd_of(k)).fold(0.0, f64::max);
                        let eta = 2.0 * sig * ((s.k as f64).ln() / nk as f64).sqrt();
                        multiplier * 4.0 * eta
                    }
                };
                Population {
                    theta_star: theta,
                    support,
                    coords: vec![],
                    j: None,
                    i: None,
                    bias: None,
                    scale: (nk as f64).sqrt(),
                    target_cov: None,
                    lambda: if s.is_penalized() { Some(lambda) } else { None },
                    notes,
                }
            }
            ModelKind::Cate => {
                let mut theta = s.truth.clone();
                theta.extend_from_slice(&s.cate_tau);
                let q = s.cate_z_dim;
                let w = s.cate_z_dim + s.cate_c_dim;
                notes.push("no limit covariance supplied for the treatment-effect model".into());
                Population {
                    theta_star: theta,
                    support: (0..w + q).collect(),
                    coords: (w..w + q).collect(),
                    j: None,
                    i: None,
                    bias: None,
                    scale: sqrt_n,
                    target_cov: None,
                    lambda: None,
                    notes,
                }
            }
            ModelKind::GdPath => {
                let spec = s.gd_spec();
                let (path, vars, means) = match s.gd_f {
                    GdFunction::Linear => {
                        let path = population_path(&spec, |t| t - s.x_mean);
                        (path, vec![s.x_sd * s.x_sd; s.k], vec![1.0; s.k])
                    }
                    GdFunction::Smooth { .. } => {
                        let reference = reference_values(s);
                        notes.push(format!(
                            "path moments from a {}-draw reference sample (seed {})",
                            reference.len(),
                            s.reference_seed
                        ));
                        let f = s.gd_f;
                        let m = reference.len() as f64;
                        let path = population_path(&spec, |t| reference.iter().map(|x| f.f(*x, t)).sum::<f64>() / m);
                        let (v, e) = path_moments(&f, &path, &reference)?;
                        (path, v, e)
                    }
                };
                let cov = gd_path_covariance(s.gd_alpha, &vars, &means)?;
                Population {
                    theta_star: path[1..].to_vec(),
                    support: (0..s.k).collect(),
                    coords: (0..s.k).collect(),
                    j: None,
                    i: None,
                    bias: None,
                    scale: ((s.n / s.k) as f64).sqrt(),
                    target_cov: Some(cov),
                    lambda: None,
                    notes,
                }
            }
        };
        Ok(pop)
    }

    fn glm(s: &Scenario) -> Result<Self> {
        let p = s.p;
        let theta = s.glm_truth();
        let mut notes = Vec::new();
        let sigma = ar_cov(p, s.rho);
        let (j, i) = match s.model {
            ModelKind::GlmLs => {
                let v = s.noise_sd * s.noise_sd;
                (-&sigma, &sigma * v)
            }
            ModelKind::GlmHuber => {
                let (e_dpsi, e_psi2) = huber_noise_moments(s);
                (-&sigma * e_dpsi, &sigma * e_psi2)
            }
            _ => {
                notes.push(format!(
                    "logistic J and I from a {}-draw reference sample (seed {})",
                    s.reference_size, s.reference_seed
                ));
                let w = logistic_information(s, &theta);
                (-&w, w)
            }
        };
        let support: Vec<usize> = if s.is_penalized() {
            (0..p).filter(|&k| theta[k] != 0.0).collect()
        } else {
            (0..p).collect()
        };
        let lambda = if s.is_penalized() {
            Some(match s.lambda {
                LambdaRule::Fixed { value } => value,
                LambdaRule::Threshold { multiplier } => {
                    multiplier * population_threshold(s, &j, &i, &theta, &support, &mut notes)?
                }
                LambdaRule::QualityControl { .. } => {
                    return Err(scen("the qc lambda rule only applies to the qc model"));
                }
            })
        } else {
            None
        };
        let coords = support.clone();
        let j1 = esteq::linalg::submatrix(&j, &coords, &coords);
        let i1 = esteq::linalg::submatrix(&i, &coords, &coords);
        let jinv = esteq::linalg::guarded_inverse(&j1, "population Jacobian")?;
        let mut target = &jinv * &i1 * jinv.transpose();
        esteq::linalg::symmetrize(&mut target);
        let bias = match lambda {
            Some(l) => {
                let pen = make_penalty(s, p, l)?.expect("penalized");
                let d = pen.derivative(&theta)?;
                Some(coords.iter().map(|&k| d[k]).collect())
            }
            None => None,
        };
        Ok(Population {
            theta_star: theta,
            support,
            coords,
            j: Some(j1),
            i: Some(i1),
            bias,
            scale: (s.n as f64).sqrt(),
            target_cov: Some(target),
            lambda,
            notes,
        })
    }

    pub fn penalty(&self, s: &Scenario) -> Result<Option<Penalty<f64>>> {
        match self.lambda {
            Some(l) => make_penalty(s, self.theta_star.len(), l),
            None => Ok(None),
        }
    }
}

/// `4/(1−α)·max_k J_{n,k}·η_n` at population `J`, `I`.
fn population_threshold(
    s: &Scenario,
    j: &DMatrix<f64>,
    i: &DMatrix<f64>,
    theta: &[f64],
    support: &[usize],
    notes: &mut Vec<String>,
) -> Result<f64> {
    let p = s.p;
    let sigma_n = (0..p).map(|k| i[(k, k)].sqrt()).fold(0.0, f64::max);
    let eta = 2.0 * sigma_n * ((p as f64).ln() / s.n as f64).sqrt();
    let comp: Vec<usize> = (0..p).filter(|k| !support.contains(k)).collect();
    if comp.is_empty() || support.is_empty() {
        return Ok(4.0 * eta);
    }
    let j11 = esteq::linalg::submatrix(j, support, support);
    let m = esteq::linalg::submatrix(j, &comp, support) * esteq::linalg::guarded_inverse(&j11, "population J_(1)")?;
    let row_l1: Vec<f64> = (0..comp.len()).map(|r| m.row(r).iter().map(|v| v.abs()).sum()).collect();
    let jnk = row_l1.iter().fold(1.0f64, |a, b| a.max(*b));
    let alpha = match s.penalty {
        PenaltyChoice::Scad { a } | PenaltyChoice::Mcp { a } => {
            // p′(θ★)_(1) = 0 once every |θ★_k| exceeds aλ; checked below
            let lam = 4.0 * jnk * eta;
            let weak = support.iter().any(|&k| theta[k].abs() <= a * lam);
            if weak {
                notes.push("signal not beyond a*lambda; alpha uses the lasso bound".into());
                row_l1.iter().fold(0.0f64, |x, y| x.max(*y))
            } else {
                0.0
            }
        }
        _ => row_l1.iter().fold(0.0f64, |x, y| x.max(*y)),
    };
    if alpha >= 1.0 {
        return Err(HarnessError::Core(esteq::Error::IncoherenceViolated(alpha)));
    }
    notes.push(format!("threshold rule: sigma_n = {sigma_n:.6}, eta_n = {eta:.6}, alpha = {alpha:.6}, J_nk = {jnk:.6}"));
    Ok(4.0 / (1.0 - alpha) * jnk * eta)
}

fn reference_rng(s: &Scenario) -> ChaCha8Rng {
    rep_rng(s.reference_seed, u64::MAX)
}

fn reference_values(s: &Scenario) -> Vec<f64> {
    let mut r = reference_rng(s);
    (0..s.reference_size).map(|_| s.x_mean + noise_draw(s.noise, s.x_sd, &mut r)).collect()
}

/// `(E ψ′, E ψ²)` of Huber's ψ at the noise law.
fn huber_noise_moments(s: &Scenario) -> (f64, f64) {
    let d = s.huber_delta;
    match s.noise {
        NoiseLaw::Gaussian => {
            let c = d / s.noise_sd;
            let inside = 2.0 * esteq::stats::normal_cdf(c) - 1.0;
            let v = huber_location_variance(s.noise_sd, d);
            (inside, v * inside * inside)
        }
        NoiseLaw::Logistic => {
            let mut r = reference_rng(s);
            let (mut a, mut b) = (0.0, 0.0);
            for _ in 0..s.reference_size {
                let e = noise_draw(s.noise, s.noise_sd, &mut r);
                if e.abs() <= d {
                    a += 1.0;
                }
                b += e.clamp(-d, d).powi(2);
            }
            let m = s.reference_size as f64;
            (a / m, b / m)
        }
    }
}

fn reference_huber_variance(s: &Scenario, sd: f64) -> f64 {
    let mut t = s.clone();
    t.noise_sd = sd;
    let (a, b) = huber_noise_moments(&t);
    b / (a * a)
}

/// `E[σ′(xᵀθ) x xᵀ]` from the reference sample.
fn logistic_information(s: &Scenario, theta: &[f64]) -> DMatrix<f64> {
    let mut r = reference_rng(s);
    let p = s.p;
    let mut acc = DMatrix::zeros(p, p);
    for _ in 0..s.reference_size {
        let x = design_row(s.design, s.rho, p, &mut r);
        let eta: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
        let sg = sigmoid(eta);
        let w = sg * (1.0 - sg);
        for a in 0..p {
            let wa = w * x[a];
            for b in 0..=a {
                acc[(a, b)] += wa * x[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            acc[(b, a)] = acc[(a, b)];
        }
    }
    acc / s.reference_size as f64
}

/// Dataset for replication `rep`.
pub fn generate(s: &Scenario, pop: &Population, rep: u64) -> Result<Dataset<f64>> {
    let mut rng = rep_rng(s.seed, rep);
    generate_with(s, pop, &mut rng)
}

pub fn generate_with(s: &Scenario, pop: &Population, rng: &mut ChaCha8Rng) -> Result<Dataset<f64>> {
    let n = s.n;
    Ok(match s.model {
        ModelKind::Mean => {
            let v: Vec<f64> = (0..n).map(|_| s.truth[0] + noise_draw(s.noise, s.noise_sd, rng)).collect();
            Dataset::from_values(&v)?
        }
        ModelKind::GlmLs | ModelKind::GlmHuber | ModelKind::GlmLogit => {
            let theta = &pop.theta_star;
            let mut feats = Vec::with_capacity(n * s.p);
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                let x = design_row(s.design, s.rho, s.p, rng);
                let eta: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
                y.push(match s.model {
                    ModelKind::GlmLogit => {
                        if rng.random::<f64>() < sigmoid(eta) {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    _ => eta + noise_draw(s.noise, s.noise_sd, rng),
                });
                feats.extend(x);
            }
            Dataset::from_flat(vec![], s.p, feats)?.with_response("y", y)?
        }
        ModelKind::Distributed | ModelKind::Qc => {
            let per = n / s.k;
            let mut v = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for k in 0..s.k {
                let centre = match s.model {
                    ModelKind::Qc => s.qc_target + pop.theta_star[k],
                    _ => s.truth[0],
                };
                for _ in 0..per {
                    v.push(centre + noise_draw(s.noise, s.sd_of(k), rng));
                    labels.push(k + 1);
                }
            }
            Dataset::from_values(&v)?.with_labels(labels)?
        }
        ModelKind::Cate => {
            let q = s.cate_z_dim;
            let c = s.cate_c_dim;
            let th1 = &s.truth;
            let mut rows = Vec::with_capacity(n);
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                let mut w = Vec::with_capacity(q + c);
                w.push(1.0);
                for _ in 1..q {
                    w.push(design_draw(s.design, rng));
                }
                for _ in 0..c {
                    w.push(design_draw(s.design, rng));
                }
                let eta: f64 = w.iter().zip(th1).map(|(a, b)| a * b).sum();
                let (prob, _, _) = s.cate_link.eval(eta);
                let t = if rng.random::<f64>() < prob { 1.0 } else { 0.0 };
                let tau: f64 = w[..q].iter().zip(&s.cate_tau).map(|(a, b)| a * b).sum();
                let base = 1.0 + w[q..].iter().sum::<f64>();
                y.push(base + t * tau + noise_draw(s.noise, s.noise_sd, rng));
                let mut row = vec![t];
                row.extend(w);
                rows.push(row);
            }
            Dataset::from_rows(vec![], rows)?.with_response("y", y)?
        }
        ModelKind::GdPath => {
            let v: Vec<f64> = (0..n).map(|_| s.x_mean + noise_draw(s.noise, s.x_sd, rng)).collect();
            zoo::assign_batches(Dataset::from_values(&v)?, s.k)?
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(text: &str) -> Scenario {
        Scenario::from_config(&Config::parse(text).unwrap()).unwrap()
    }

    #[test]
    fn determinism_of_generation() {
        let s = scenario("model = glm.ls\nseed = 3\nn = 50\np = 4\ntruth.values = 1, -1\n");
        let pop = Population::build(&s).unwrap();
        assert_eq!(generate(&s, &pop, 5).unwrap(), generate(&s, &pop, 5).unwrap());
        assert_ne!(generate(&s, &pop, 5).unwrap(), generate(&s, &pop, 6).unwrap());
    }

    #[test]
    fn gaussian_design_is_centered() {
        let s = scenario("model = glm.ls\nseed = 4\nn = 4000\np = 3\ntruth.values = 1\n");
        let pop = Population::build(&s).unwrap();
        let d = generate(&s, &pop, 0).unwrap();
        for j in 0..3 {
            let m = d.column(j).iter().sum::<f64>() / 4000.0;
            assert!(m.abs() < 4.0 / 4000f64.sqrt());
        }
    }

    #[test]
    fn treatment_rate_matches_propensity() {
        let s = scenario("model = cate\nseed = 9\nn = 5000\ntruth.values = 0.3, 0.8, -0.5\n");
        let pop = Population::build(&s).unwrap();
        let d = generate(&s, &pop, 0).unwrap();
        let rate = d.column(0).iter().sum::<f64>() / 5000.0;
        let avg: f64 = (0..5000)
            .map(|i| {
                let r = d.row(i);
                sigmoid(0.3 * r[1] + 0.8 * r[2] - 0.5 * r[3])
            })
            .sum::<f64>()
            / 5000.0;
        let sd = (avg * (1.0 - avg) / 5000.0).sqrt();
        assert!((rate - avg).abs() < 3.0 * sd, "{rate} vs {avg}");
    }

    #[test]
    fn bad_scenarios() {
        let c = |t: &str| Scenario::from_config(&Config::parse(t).unwrap());
        assert!(c("model = nope\nseed = 1\nn = 10\n").is_err());
        assert!(c("model = gdpath\nseed = 1\nn = 10\nk = 3\n").is_err());
        assert!(c("model = mean\nseed = 1\nn = 10\ntruth.values = 1\ndesign.law = cauchy\n").is_err());
        assert!(c("model = mean\nseed = 1\nn = 10\ntruth.values = 1\nreps = 0\n").is_err());
    }

    #[test]
    fn qc_lambda_rule() {
        let s = scenario("model = qc\nseed = 1\nn = 25000\nk = 50\ntruth.values = 1, 1, 1\npenalty.kind = lasso\nlambda.rule = qc\n");
        let pop = Population::build(&s).unwrap();
        let expect = 8.0 * (50f64.ln() / 500.0).sqrt();
        assert!((pop.lambda.unwrap() - expect).abs() < 1e-12);
        assert_eq!(pop.support, vec![0, 1, 2]);
    }
}
