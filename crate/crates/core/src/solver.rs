//! Root finding for `Φ_n(θ) = 0`, the penalized inclusion `Φ_n(θ) ∈ ∂p_λ(θ)`,
//! the primal-dual witness construction, and stage-by-stage solving.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Obs};
use crate::error::{Error, Result};
use crate::linalg::{self, max_abs};
use crate::model::{evaluate_j_hat, evaluate_phi_bar, finite_difference_j_hat, EstimatingModel, FdStep, RowFilter};
use crate::penalty::{Penalty, PenaltyKind};
use crate::scalar::Scalar;
use crate::stack::StackedModel;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions<T> {
    /// Newton / proximal-Newton iterations per solve.
    pub max_iter: usize,
    /// Coordinate sweeps allowed per linearized subproblem.
    pub max_sweeps: usize,
    /// Outer local-linear-approximation rounds for folded-concave penalties.
    pub lla_max: usize,
    /// Inclusion tolerance; `None` uses `max(1e-8, 100 eps)·(1 + ‖Φ̄(θ₀)‖_∞)`.
    pub eps_kkt: Option<T>,
    pub eps_step: T,
    /// Step shrink factor and sufficient-decrease constant of the line search.
    pub backtrack: T,
    pub armijo: T,
    pub max_backtracks: usize,
    /// Consecutive residual increases that count as divergence.
    pub divergence_window: usize,
    pub zero_snap: T,
    /// `None` uses analytic Jacobians when available.
    pub fd_step: Option<FdStep<T>>,
    pub theta0: Option<Vec<T>>,
    pub trace: bool,
}

impl<T: Scalar> Default for SolveOptions<T> {
    fn default() -> Self {
        Self {
            max_iter: 500,
            max_sweeps: 10_000,
            lla_max: 100,
            eps_kkt: None,
            eps_step: T::lit(1e-10),
            backtrack: T::lit(0.5),
            armijo: T::lit(1e-4),
            max_backtracks: 50,
            divergence_window: 20,
            zero_snap: T::lit(1e-12),
            fd_step: None,
            theta0: None,
            trace: false,
        }
    }
}

impl<T: Scalar> SolveOptions<T> {
    pub fn with_theta0(mut self, theta0: Vec<T>) -> Self {
        self.theta0 = Some(theta0);
        self
    }

    pub fn with_eps_kkt(mut self, eps: T) -> Self {
        self.eps_kkt = Some(eps);
        self
    }

    fn validate(&self) -> Result<()> {
        let pos = |v: T| v > T::zero() && v.is_finite_value();
        if self.max_iter == 0 || self.max_sweeps == 0 || self.lla_max == 0 {
            return Err(Error::InvalidArgument("iteration caps must be at least 1".into()));
        }
        if !pos(self.eps_step) || self.eps_kkt.is_some_and(|e| !pos(e)) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if !(self.backtrack > T::zero() && self.backtrack < T::one()) {
            return Err(Error::InvalidArgument("backtracking factor must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// The tolerance actually used, given `‖Φ̄(θ₀)‖_∞`.
    pub fn resolve_eps(&self, phi0_inf: T) -> T {
        self.eps_kkt.unwrap_or_else(|| {
            let base = T::lit(1e-8).max(T::lit(100.0) * T::eps());
            base * (T::one() + phi0_inf)
        })
    }

    fn start(&self, dim: usize) -> Result<Vec<T>> {
        match &self.theta0 {
            Some(t) if t.len() != dim => Err(Error::DimensionMismatch {
                expected: dim,
                got: t.len(),
                context: "initial point",
            }),
            Some(t) => Ok(t.clone()),
            None => Ok(vec![T::zero(); dim]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIter,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult<T> {
    pub theta: Vec<T>,
    pub residual: Vec<T>,
    /// Per-coordinate distance of `Φ_n(θ̂)_k` to `∂p(θ̂)_k`.
    pub inclusion_violation: Vec<T>,
    /// `{k : θ̂_k ≠ 0}`, 0-based.
    pub support: Vec<usize>,
    pub status: Status,
    pub iterations: usize,
    /// `max_k` inclusion violation.
    pub kkt_violation: T,
    pub tolerance: T,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<T>>,
}

impl<T: Scalar> SolveResult<T> {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }

    /// Turns a non-converged status into an error.
    pub fn into_converged(self) -> Result<Self> {
        match self.status {
            Status::Converged => Ok(self),
            Status::MaxIter => Err(Error::MaxIterations(self.iterations)),
            Status::Diverged => Err(Error::Diverged {
                iterations: self.iterations,
            }),
        }
    }
}

/// Outcome of replaying a point through the inclusion check.
#[derive(Debug, Clone, PartialEq)]
pub struct InclusionCheck<T> {
    pub residual: DVector<T>,
    pub violation: Vec<T>,
    pub max_violation: T,
}

/// Evaluates `Φ̄(θ)` and `∂p(θ)` from scratch and measures the distance.
pub fn check_inclusion<T: Scalar, M: EstimatingModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    pen: &Penalty<T>,
    theta: &[T],
) -> Result<InclusionCheck<T>> {
    let residual = evaluate_phi_bar(model, data, theta)?;
    let rect = pen.subdifferential(theta)?;
    let violation: Vec<T> = (0..theta.len()).map(|k| rect.distance(k, residual[k])).collect();
    let max_violation = max_abs(violation.iter().copied());
    Ok(InclusionCheck {
        residual,
        violation,
        max_violation,
    })
}

fn support_of<T: Scalar>(theta: &[T]) -> Vec<usize> {
    theta
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != T::zero())
        .map(|(k, _)| k)
        .collect()
}

fn project<T: Scalar, M: EstimatingModel<T> + ?Sized>(model: &M, theta: &mut DVector<T>) {
    if let Some(b) = model.domain() {
        b.project(theta);
    }
}

fn jacobian<T: Scalar, M: EstimatingModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    theta: &[T],
    opts: &SolveOptions<T>,
) -> Result<DMatrix<T>> {
    match opts.fd_step {
        Some(step) => finite_difference_j_hat(model, data, theta, step),
        None => evaluate_j_hat(model, data, theta),
    }
}

fn require_square<T: Scalar, M: EstimatingModel<T> + ?Sized>(model: &M) -> Result<()> {
    if model.dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: model.input_dim(),
            context: "solvers need square equations",
        });
    }
    Ok(())
}

/// Newton direction `−J⁻¹F`, a ridge-regularized Gauss–Newton direction when
/// `J` is ill-conditioned, or the merit gradient-flow direction `−JᵀF`.
fn newton_direction<T: Scalar>(j: &DMatrix<T>, f: &DVector<T>) -> Result<DVector<T>> {
    if let Ok(d) = linalg::guarded_solve(j, &(-f), "Newton system") {
        if d.iter().all(|v| v.is_finite_value()) {
            return Ok(d);
        }
    }
    let jt = j.transpose();
    let jtj = &jt * j;
    let g = &jt * f;
    let scale = T::one() + jtj.diagonal().iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let mut tau = T::lit(1e-10) * scale;
    for _ in 0..8 {
        let mut reg = jtj.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += tau;
        }
        if let Some(d) = reg.lu().solve(&(-&g)) {
            if d.iter().all(|v| v.is_finite_value()) {
                return Ok(d);
            }
        }
        tau *= T::lit(100.0);
    }
    if max_abs(g.iter().copied()) > T::zero() {
        return Ok(-g);
    }
    Err(Error::Singular {
        context: "Newton system",
        condition: linalg::condition_number(j),
    })
}

/// Iterates whose sup-norm exceeds this are reported as diverged.
const DIVERGENCE_LIMIT: f64 = 1e12;

type Candidate<T> = (T, DVector<T>, DVector<T>);

fn try_point<T: Scalar, M: EstimatingModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    mut cand: DVector<T>,
) -> Option<Candidate<T>> {
    project(model, &mut cand);
    let fc = evaluate_phi_bar(model, data, cand.as_slice()).ok()?;
    Some((fc.norm_squared() * T::lit(0.5), cand, fc))
}

/// Backtracking along `d` until the Armijo condition on `½‖Φ̄‖²` holds.
fn armijo_search<T: Scalar, M: EstimatingModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    theta: &DVector<T>,
    d: &DVector<T>,
    merit: T,
    slope: T,
    opts: &SolveOptions<T>,
) -> Option<Candidate<T>> {
    let mut s = T::one();
    for _ in 0..=opts.max_backtracks {
        if let Some(c) = try_point(model, data, theta + d * s) {
            if c.0 <= merit + opts.armijo * s * slope.min(T::zero()) && c.0 < merit {
                return Some(c);
            }
        }
        s *= opts.backtrack;
    }
    None
}

/// Steps `θ + sΦ̄(θ)` with `s` doubled while the merit keeps falling, or
/// halved until it first falls.
fn score_search<T: Scalar, M: EstimatingModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    theta: &DVector<T>,
    f: &DVector<T>,
    merit: T,
    opts: &SolveOptions<T>,
) -> Option<Candidate<T>> {
    let mut best: Option<Candidate<T>> = None;
    let mut s = T::one();
    for _ in 0..=opts.max_backtracks {
        match try_point(model, data, theta + f * s) {
            Some(c) if c.0 < best.as_ref().map_or(merit, |b| b.0) => best = Some(c),
            _ if best.is_some() => break,
            _ => {}
        }
        s += s;
    }
    if best.is_some() {
        return best;
    }
    let mut s = opts.backtrack;
    for _ in 0..=opts.max_backtracks {
        if let Some(c) = try_point(model, data, theta + f * s) {
            if c.0 < merit {
                return Some(c);
            }
        }
        s *= opts.backtrack;
    }
    None
}

/// Damped Newton with backtracking on `½‖Φ̄‖₂²`.
pub fn solve_unpenalized<T: Scalar, M: EstimatingModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    opts: &SolveOptions<T>,
) -> Result<SolveResult<T>> {
    opts.validate()?;
    require_square(model)?;
    let p = model.dim();
    let mut theta = DVector::from_vec(opts.start(p)?);
    project(model, &mut theta);
    let mut f = evaluate_phi_bar(model, data, theta.as_slice())?;
    let eps = opts.resolve_eps(f.amax());
    let mut merit = f.norm_squared() * T::lit(0.5);
    let mut trace = opts.trace.then(Vec::new);
    let mut status = Status::MaxIter;
    let mut iterations = 0;
    for it in 0..=opts.max_iter {
        if let Some(t) = trace.as_mut() {
            t.push(f.norm());
        }
        if f.amax() <= eps {
            status = Status::Converged;
            iterations = it;
            break;
        }
        if it == opts.max_iter {
            iterations = it;
            break;
        }
        let j = jacobian(model, data, theta.as_slice(), opts)?;
        let d = newton_direction(&j, &f)?;
        let slope = (j.transpose() * &f).dot(&d);
        let found = armijo_search(model, data, &theta, &d, merit, slope, opts)
            // Newton failed to decrease the merit (typically a block pushed into
            // a flat region); step along the score instead, which points toward
            // the root when the equation has negative-definite curvature.
            .or_else(|| score_search(model, data, &theta, &f, merit, opts));
        let Some((mc, cand, fc)) = found else {
            iterations = it;
            break;
        };
        let step = (&cand - &theta).amax();
        theta = cand;
        f = fc;
        merit = mc;
        iterations = it + 1;
        if theta.amax() > T::lit(DIVERGENCE_LIMIT) {
            status = Status::Diverged;
            break;
        }
        if step <= opts.eps_step * (T::one() + theta.amax()) && f.amax() > eps {
            // stalled short of tolerance
            break;
        }
    }
    finish_unpenalized(model, data, theta, status, iterations, eps, trace)
}

fn finish_unpenalized<T: Scalar, M: EstimatingModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    theta: DVector<T>,
    mut status: Status,
    iterations: usize,
    eps: T,
    trace: Option<Vec<T>>,
) -> Result<SolveResult<T>> {
    let theta: Vec<T> = theta.iter().copied().collect();
    let check = check_inclusion(model, data, &Penalty::none(theta.len()), &theta)?;
    if status == Status::Converged && check.max_violation > eps {
        status = Status::MaxIter;
    } else if status != Status::Diverged && check.max_violation <= eps {
        status = Status::Converged;
    }
    Ok(SolveResult {
        support: support_of(&theta),
        residual: check.residual.iter().copied().collect(),
        inclusion_violation: check.violation,
        kkt_violation: check.max_violation,
        theta,
        status,
        iterations,
        tolerance: eps,
        trace,
    })
}

/// Result of one linearized subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedSolve<T> {
    pub theta: DVector<T>,
    pub sweeps: usize,
    /// Merit after each sweep (only when requested).
    pub merits: Vec<T>,
    /// Inclusion violation of the linearized equation at the end.
    pub violation: T,
}

/// Merit of the linearized inclusion at `θ`:
/// `−Fᵀδ − ½ δᵀ sym(J) δ + p(θ)`, `δ = θ − θᶜ`.
pub fn linearized_merit<T: Scalar>(
    j: &DMatrix<T>,
    f: &DVector<T>,
    center: &DVector<T>,
    pen: &Penalty<T>,
    theta: &DVector<T>,
) -> Result<T> {
    let d = theta - center;
    let jd = j * &d;
    Ok(-f.dot(&d) - d.dot(&jd) * T::lit(0.5) + pen.value(theta.as_slice())?)
}

/// Coordinate (and group-block) sweeps for `F + J(θ − θᶜ) ∈ ∂p(θ)`, `p`
/// convex (lasso, elastic net, `ℓ₁`, disjoint group lasso).
pub fn solve_linearized<T: Scalar>(
    j: &DMatrix<T>,
    f: &DVector<T>,
    center: &DVector<T>,
    start: &DVector<T>,
    pen: &Penalty<T>,
    tol: T,
    opts: &SolveOptions<T>,
) -> Result<LinearizedSolve<T>> {
    let p = f.len();
    let mut theta = start.clone();
    // r = F + J(θ − θᶜ)
    let mut r = f + j * (&theta - center);
    let tiny = T::lit(1e-300).max(T::eps() * T::eps());
    let curv: Vec<T> = (0..p)
        .map(|k| {
            let c = j[(k, k)].abs();
            if c > tiny {
                c
            } else {
                j.row(k).iter().fold(T::zero(), |s, v| s + v.abs())
            }
        })
        .collect();
    let groups = pen.groups().map(|g| g.to_vec());
    let mut grouped = vec![false; p];
    let mut gersh = Vec::new();
    if let Some(gs) = &groups {
        for g in gs {
            for &k in g {
                grouped[k] = true;
            }
            let l = g
                .iter()
                .map(|&a| g.iter().fold(T::zero(), |s, &b| s + j[(a, b)].abs()))
                .fold(T::zero(), |m, v| m.max(v));
            gersh.push(l);
        }
    }
    let mut merits = Vec::new();
    if opts.trace {
        merits.push(linearized_merit(j, f, center, pen, &theta)?);
    }
    let set = |theta: &mut DVector<T>, r: &mut DVector<T>, k: usize, v: T| {
        let delta = v - theta[k];
        if delta != T::zero() {
            theta[k] = v;
            r.axpy(delta, &j.column(k), T::one());
        }
    };
    let mut sweeps = 0;
    let mut violation = linearized_violation(pen, &theta, &r)?;
    while sweeps < opts.max_sweeps && violation > tol {
        sweeps += 1;
        let mut change = T::zero();
        for k in 0..p {
            if grouped[k] || curv[k] <= tiny {
                continue;
            }
            let t = T::one() / curv[k];
            let z = theta[k] + t * r[k];
            let v = pen.scalar_threshold(z, t, k, theta.as_slice())?;
            change = change.max((v - theta[k]).abs());
            set(&mut theta, &mut r, k, v);
        }
        if let Some(gs) = &groups {
            for (gi, g) in gs.iter().enumerate() {
                let l = gersh[gi];
                if l <= tiny {
                    continue;
                }
                let t = T::one() / l;
                let lam = pen.lambda()[gi];
                let z: Vec<T> = g.iter().map(|&k| theta[k] + t * r[k]).collect();
                let norm = z.iter().fold(T::zero(), |s, v| s + *v * *v).sqrt();
                let shrink = if norm > T::zero() {
                    (T::one() - t * lam / norm).max(T::zero())
                } else {
                    T::zero()
                };
                for (i, &k) in g.iter().enumerate() {
                    let v = z[i] * shrink;
                    change = change.max((v - theta[k]).abs());
                    set(&mut theta, &mut r, k, v);
                }
            }
        }
        for k in 0..p {
            if theta[k] != T::zero() && theta[k].abs() < opts.zero_snap {
                set(&mut theta, &mut r, k, T::zero());
            }
        }
        if opts.trace {
            merits.push(linearized_merit(j, f, center, pen, &theta)?);
        }
        violation = linearized_violation(pen, &theta, &r)?;
        if change <= opts.eps_step * T::lit(1e-3) * (T::one() + theta.amax()) {
            break;
        }
    }
    // refresh r to shed accumulated round-off before reporting
    let r = f + j * (&theta - center);
    let violation = linearized_violation(pen, &theta, &r)?;
    Ok(LinearizedSolve {
        theta,
        sweeps,
        merits,
        violation,
    })
}

fn linearized_violation<T: Scalar>(pen: &Penalty<T>, theta: &DVector<T>, r: &DVector<T>) -> Result<T> {
    let rect = pen.subdifferential(theta.as_slice())?;
    Ok((0..theta.len()).fold(T::zero(), |m, k| m.max(rect.distance(k, r[k]))))
}

struct ProxNewton<T> {
    theta: DVector<T>,
    status: Status,
    iterations: usize,
}

/// Proximal Newton for a convex penalty, damping on the inclusion violation.
#[allow(clippy::too_many_arguments)]
fn prox_newton<T: Scalar, M: EstimatingModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    pen: &Penalty<T>,
    start: DVector<T>,
    eps: T,
    opts: &SolveOptions<T>,
    trace: &mut Option<Vec<T>>,
) -> Result<ProxNewton<T>> {
    let mut theta = start;
    project(model, &mut theta);
    let mut check = check_inclusion(model, data, pen, theta.as_slice())?;
    let mut increases = 0;
    for it in 0..opts.max_iter {
        if let Some(t) = trace.as_mut() {
            t.push(check.max_violation);
        }
        if check.max_violation <= eps {
            return Ok(ProxNewton {
                theta,
                status: Status::Converged,
                iterations: it,
            });
        }
        let j = jacobian(model, data, theta.as_slice(), opts)?;
        let inner = solve_linearized(&j, &check.residual, &theta, &theta, pen, eps * T::lit(0.1), opts)?;
        let dir = &inner.theta - &theta;
        let mut s = T::one();
        let mut best: Option<(DVector<T>, InclusionCheck<T>)> = None;
        for _ in 0..=opts.max_backtracks {
            let mut cand = if s == T::one() {
                inner.theta.clone()
            } else {
                &theta + &dir * s
            };
            project(model, &mut cand);
            if let Ok(c) = check_inclusion(model, data, pen, cand.as_slice()) {
                let better = c.max_violation < check.max_violation;
                if best.as_ref().is_none_or(|b| c.max_violation < b.1.max_violation) {
                    best = Some((cand, c));
                }
                if better {
                    break;
                }
            }
            s *= opts.backtrack;
        }
        let (cand, c) = best.ok_or(Error::NonFinite {
            what: "phi along the proximal step",
            row: 0,
        })?;
        let step = (&cand - &theta).amax();
        increases = if c.max_violation > check.max_violation {
            increases + 1
        } else {
            0
        };
        theta = cand;
        check = c;
        if increases >= opts.divergence_window {
            return Ok(ProxNewton {
                theta,
                status: Status::Diverged,
                iterations: it + 1,
            });
        }
        if step <= opts.eps_step * (T::one() + theta.amax()) {
            let status = if check.max_violation <= eps {
                Status::Converged
            } else {
                Status::MaxIter
            };
            return Ok(ProxNewton {
                theta,
                status,
                iterations: it + 1,
            });
        }
    }
    let status = if check.max_violation <= eps {
        Status::Converged
    } else {
        Status::MaxIter
    };
    Ok(ProxNewton {
        theta,
        status,
        iterations: opts.max_iter,
    })
}

/// Solves `Φ_n(θ) ∈ ∂p_λ(θ)`.
///
/// Convex penalties run proximal Newton directly; SCAD and MCP run an outer
/// local linear approximation whose first round is the lasso at `λ`.
pub fn solve_penalized<T: Scalar, M: EstimatingModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    pen: &Penalty<T>,
    opts: &SolveOptions<T>,
) -> Result<SolveResult<T>> {
    opts.validate()?;
    require_square(model)?;
    let p = model.dim();
    if pen.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: pen.dim(),
            context: "penalty dimension",
        });
    }
    if !pen.is_solvable() {
        return Err(Error::UnsupportedPenalty {
            kind: "lq",
            reason: "zero is always stationary for q < 1",
        });
    }
    if !pen.groups_are_disjoint() {
        return Err(Error::UnsupportedPenalty {
            kind: "group_lasso",
            reason: "the solver needs disjoint groups",
        });
    }
    if pen.is_zero() {
        return solve_unpenalized(model, data, opts);
    }
    let start = DVector::from_vec(opts.start(p)?);
    let phi0 = evaluate_phi_bar(model, data, start.as_slice())?;
    let eps = opts.resolve_eps(phi0.amax());
    let mut trace = opts.trace.then(Vec::new);

    let (theta, status, iterations) = match pen.kind() {
        PenaltyKind::Scad { .. } | PenaltyKind::Mcp { .. } => {
            let mut theta = start;
            let mut total = 0;
            let mut status = Status::MaxIter;
            for _ in 0..opts.lla_max {
                let weights: Vec<T> = (0..p).map(|k| pen.slope(k, theta[k].abs())).collect();
                let lasso = Penalty::weighted_lasso(weights)?;
                let run = prox_newton(model, data, &lasso, theta.clone(), eps, opts, &mut trace)?;
                total += run.iterations.max(1);
                let moved = (&run.theta - &theta).amax();
                theta = run.theta;
                if run.status == Status::Diverged {
                    status = Status::Diverged;
                    break;
                }
                let check = check_inclusion(model, data, pen, theta.as_slice())?;
                if check.max_violation <= eps {
                    status = Status::Converged;
                    break;
                }
                if moved <= opts.eps_step * (T::one() + theta.amax()) && run.status != Status::Converged {
                    break;
                }
            }
            (theta, status, total)
        }
        PenaltyKind::Lq { .. } | PenaltyKind::Lasso | PenaltyKind::ElasticNet { .. } | PenaltyKind::GroupLasso { .. } => {
            let run = prox_newton(model, data, pen, start, eps, opts, &mut trace)?;
            (run.theta, run.status, run.iterations)
        }
    };

    let theta: Vec<T> = theta.iter().copied().collect();
    let check = check_inclusion(model, data, pen, &theta)?;
    let status = match status {
        Status::Diverged => Status::Diverged,
        _ if check.max_violation <= eps => Status::Converged,
        _ => Status::MaxIter,
    };
    Ok(SolveResult {
        support: support_of(&theta),
        residual: check.residual.iter().copied().collect(),
        inclusion_violation: check.violation,
        kkt_violation: check.max_violation,
        theta,
        status,
        iterations,
        tolerance: eps,
        trace,
    })
}

/// A square model seen on the coordinates `idx`, all others pinned to zero.
pub struct RestrictedModel<'a, M: ?Sized> {
    inner: &'a M,
    idx: Vec<usize>,
    full: usize,
}

impl<'a, M: ?Sized> RestrictedModel<'a, M> {
    pub fn new(inner: &'a M, idx: Vec<usize>, full: usize) -> Self {
        Self { inner, idx, full }
    }

    pub fn embed<T: Scalar>(&self, reduced: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.full];
        for (v, &k) in reduced.iter().zip(&self.idx) {
            out[k] = *v;
        }
        out
    }
}

impl<T: Scalar, M: EstimatingModel<T> + ?Sized> EstimatingModel<T> for RestrictedModel<'_, M> {
    fn dim(&self) -> usize {
        self.idx.len()
    }

    fn phi(&self, obs: &Obs<'_, T>, theta: &[T], out: &mut [T]) {
        let full = self.embed(theta);
        let mut buf = vec![T::zero(); self.full];
        self.inner.phi(obs, &full, &mut buf);
        for (o, &k) in out.iter_mut().zip(&self.idx) {
            *o = buf[k];
        }
    }

    fn has_jacobian(&self) -> bool {
        self.inner.has_jacobian()
    }

    fn add_jacobian(&self, obs: &Obs<'_, T>, theta: &[T], scale: T, acc: &mut DMatrix<T>) -> bool {
        let full = self.embed(theta);
        let mut j = DMatrix::zeros(self.full, self.full);
        if !self.inner.add_jacobian(obs, &full, scale, &mut j) {
            return false;
        }
        for (a, &ka) in self.idx.iter().enumerate() {
            for (b, &kb) in self.idx.iter().enumerate() {
                acc[(a, b)] += j[(ka, kb)];
            }
        }
        true
    }

    fn validate(&self, data: &Dataset<T>) -> Result<()> {
        self.inner.validate(data)
    }

    fn rows(&self) -> RowFilter {
        self.inner.rows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessResult<T> {
    /// Full-dimension candidate `(θ̂_(1), 0)`.
    pub theta: Vec<T>,
    pub support: Vec<usize>,
    pub reduced: SolveResult<T>,
    /// `max_{k ∉ S} |Φ_n(θ̂)_k| / λ_k` (0 for an empty complement).
    pub dual_statistic: T,
    pub verdict: Verdict,
    pub margin: T,
}

impl<T> WitnessResult<T> {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Solves the reduced problem on `support` and checks dual feasibility on
/// the complement.
pub fn primal_dual_witness<T: Scalar, M: EstimatingModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    pen: &Penalty<T>,
    support: &[usize],
    opts: &SolveOptions<T>,
) -> Result<WitnessResult<T>> {
    opts.validate()?;
    require_square(model)?;
    let p = model.dim();
    if pen.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: pen.dim(),
            context: "penalty dimension",
        });
    }
    let mut in_s = vec![false; p];
    for &k in support {
        if k >= p || in_s[k] {
            return Err(Error::InvalidArgument(format!("support index {k} repeated or out of range")));
        }
        in_s[k] = true;
    }
    let complement: Vec<usize> = (0..p).filter(|k| !in_s[*k]).collect();
    for &k in &complement {
        if !(pen.zero_box_halfwidth(k) > T::zero()) {
            return Err(Error::ZeroLambda(k));
        }
    }
    let idx: Vec<usize> = support.to_vec();
    let reduced_model = RestrictedModel::new(model, idx.clone(), p);
    let reduced = if idx.is_empty() {
        let f = evaluate_phi_bar(model, data, &vec![T::zero(); p])?;
        let eps = opts.resolve_eps(f.amax());
        SolveResult {
            theta: vec![],
            residual: vec![],
            inclusion_violation: vec![],
            support: vec![],
            status: Status::Converged,
            iterations: 0,
            kkt_violation: T::zero(),
            tolerance: eps,
            trace: None,
        }
    } else {
        let mut ropts = opts.clone();
        if let Some(t0) = &opts.theta0 {
            ropts.theta0 = Some(idx.iter().map(|&k| t0[k]).collect());
        }
        solve_penalized(&reduced_model, data, &pen.restrict(&idx)?, &ropts)
            .map_err(|e| Error::StageFailed {
                stage: 1,
                source: Box::new(e),
            })?
    };
    let theta = reduced_model.embed(&reduced.theta);
    let f = evaluate_phi_bar(model, data, &theta)?;
    let d = complement
        .iter()
        .fold(T::zero(), |m, &k| m.max(f[k].abs() / pen.zero_box_halfwidth(k)));
    let verdict = if reduced.converged() && d <= T::one() + reduced.tolerance {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(WitnessResult {
        support: support_of(&theta),
        theta,
        reduced,
        dual_statistic: d,
        verdict,
        margin: T::one() - d,
    })
}

/// Solves a triangular stack block by block, substituting earlier estimates,
/// then checks the full stacked equation.
pub fn solve_sequential<T: Scalar>(
    stacked: &StackedModel<T>,
    data: &Dataset<T>,
    opts: &SolveOptions<T>,
) -> Result<SolveResult<T>> {
    opts.validate()?;
    if !stacked.is_triangular() {
        return Err(Error::InvalidStack("sequential solving needs a triangular stack".into()));
    }
    let p = stacked.dim();
    let mut theta = opts.start(p)?;
    let phi0 = evaluate_phi_bar(stacked, data, &theta)?;
    let eps = opts.resolve_eps(phi0.amax());
    let mut iterations = 0;
    for (j, block) in stacked.blocks().iter().enumerate() {
        let out = block.output();
        let view = stacked.stage_view(j, &theta)?;
        let mut sopts = opts.clone();
        sopts.theta0 = Some(theta[out.clone()].to_vec());
        sopts.eps_kkt = Some(eps);
        sopts.trace = false;
        let stage_fail = |e: Error| Error::StageFailed {
            stage: j,
            source: Box::new(e),
        };
        let r = solve_unpenalized(&view, data, &sopts)
            .and_then(SolveResult::into_converged)
            .map_err(stage_fail)?;
        iterations += r.iterations;
        theta[out].copy_from_slice(&r.theta);
    }
    finish_unpenalized(stacked, data, DVector::from_vec(theta), Status::Converged, iterations, eps, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::{glm_model, GlmSpec, LocationModel, PsiKind};
    use approx::assert_abs_diff_eq;

    #[test]
    fn mean_root() {
        let d = Dataset::from_values(&[1.0, 3.0]).unwrap();
        let r = solve_unpenalized(&LocationModel::mean(), &d, &SolveOptions::default()).unwrap();
        assert!(r.converged());
        assert_abs_diff_eq!(r.theta[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn lq_below_one_is_refused() {
        let d = Dataset::from_values(&[1.0, 3.0]).unwrap();
        let pen = Penalty::lq(vec![0.1], 0.5).unwrap();
        assert!(matches!(
            solve_penalized(&LocationModel::mean(), &d, &pen, &SolveOptions::default()),
            Err(Error::UnsupportedPenalty { .. })
        ));
    }

    #[test]
    fn lasso_on_mean_is_soft_threshold() {
        let d = Dataset::from_values(&[1.0, 3.0]).unwrap();
        let pen = Penalty::lasso(vec![0.5]).unwrap();
        let r = solve_penalized(&LocationModel::mean(), &d, &pen, &SolveOptions::default()).unwrap();
        assert!(r.converged());
        assert_abs_diff_eq!(r.theta[0], 1.5, epsilon = 1e-10);
        let pen = Penalty::lasso(vec![2.5]).unwrap();
        let r = solve_penalized(&LocationModel::mean(), &d, &pen, &SolveOptions::default()).unwrap();
        assert_eq!(r.theta[0], 0.0);
        assert!(r.support.is_empty());
    }

    #[test]
    fn witness_with_full_support_is_vacuous() {
        let rows = vec![vec![1.0, 0.2], vec![1.0, -1.0], vec![1.0, 0.5], vec![1.0, 2.0]];
        let d = Dataset::from_rows(vec![], rows)
            .unwrap()
            .with_response("y", vec![1.0, -0.5, 0.7, 2.2])
            .unwrap();
        let m = glm_model(GlmSpec::new(PsiKind::LeastSquares, 2)).unwrap();
        let pen = Penalty::lasso(vec![0.1, 0.1]).unwrap();
        let opts = SolveOptions::default();
        let w = primal_dual_witness(&m, &d, &pen, &[0, 1], &opts).unwrap();
        assert_eq!(w.dual_statistic, 0.0);
        assert!(w.passed());
        let full = solve_penalized(&m, &d, &pen, &opts).unwrap();
        for (a, b) in w.theta.iter().zip(&full.theta) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-8);
        }
    }

    #[test]
    fn zero_lambda_off_support_is_an_error() {
        let d = Dataset::from_values(&[1.0, 3.0]).unwrap();
        let pen = Penalty::lasso(vec![0.0]).unwrap();
        assert_eq!(
            primal_dual_witness(&LocationModel::mean(), &d, &pen, &[], &SolveOptions::default()).unwrap_err(),
            Error::ZeroLambda(0)
        );
    }
}
