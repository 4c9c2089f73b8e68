//! Sparsity-inducing penalties: values, subdifferential rectangles, scalar
//! proximal maps and weak-convexity constants, plus the fusion reparametrization.

use nalgebra::{DMatrix, DVector};
use num_traits::Num;
use serde::Serialize;

use crate::data::Obs;
use crate::error::{Error, Result};
use crate::model::{DomainBox, EstimatingModel, RowFilter};
use crate::scalar::{sign, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltyKind<T> {
    Lasso,
    /// `λ₁‖θ‖₁ + λ₂‖θ‖₂²`; `λ` holds the per-coordinate `λ₁`.
    ElasticNet { lambda2: T },
    /// `Σ_G λ_G ‖θ_G‖₂`; groups may overlap (cover semantics), `λ` is per group.
    GroupLasso { groups: Vec<Vec<usize>> },
    /// `Σ_k λ_k |θ_k|^q`, `q ∈ (0, 1]`.
    Lq { q: T },
    Scad { a: T },
    Mcp { a: T },
}

impl<T> PenaltyKind<T> {
    pub fn name(&self) -> &'static str {
        match self {
            PenaltyKind::Lasso => "lasso",
            PenaltyKind::ElasticNet { .. } => "elastic_net",
            PenaltyKind::GroupLasso { .. } => "group_lasso",
            PenaltyKind::Lq { .. } => "lq",
            PenaltyKind::Scad { .. } => "scad",
            PenaltyKind::Mcp { .. } => "mcp",
        }
    }
}

/// Per-coordinate closed intervals `[lo_k, hi_k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdiffRectangle<T> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

impl<T: Scalar> SubdiffRectangle<T> {
    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    pub fn interval(&self, k: usize) -> (T, T) {
        (self.lo[k], self.hi[k])
    }

    pub fn is_singleton(&self, k: usize) -> bool {
        self.lo[k] == self.hi[k]
    }

    /// Distance from `v` to `[lo_k, hi_k]`.
    pub fn distance(&self, k: usize, v: T) -> T {
        (self.lo[k] - v).max(v - self.hi[k]).max(T::zero())
    }

    pub fn contains(&self, k: usize, v: T, tol: T) -> bool {
        self.distance(k, v) <= tol
    }

    /// Closest admissible subgradient to `v`.
    pub fn project(&self, k: usize, v: T) -> T {
        v.clamp(self.lo[k], self.hi[k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Penalty<T> {
    #[serde(flatten)]
    kind: PenaltyKind<T>,
    lambda: Vec<T>,
    dim: usize,
}

impl<T: Scalar> Penalty<T> {
    /// `lambda` is per coordinate, or per group for the group lasso.
    pub fn new(kind: PenaltyKind<T>, lambda: Vec<T>, dim: usize) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidPenalty(m));
        if lambda.iter().any(|l| !l.is_finite_value() || *l < T::zero()) {
            return bad("tuning parameters must be finite and non-negative".into());
        }
        match &kind {
            PenaltyKind::GroupLasso { groups } => {
                if lambda.len() != groups.len() {
                    return bad(format!("{} groups but {} tuning values", groups.len(), lambda.len()));
                }
                for (g, members) in groups.iter().enumerate() {
                    if members.is_empty() {
                        return bad(format!("group {g} is empty"));
                    }
                    let mut seen = members.clone();
                    seen.sort_unstable();
                    seen.dedup();
                    if seen.len() != members.len() {
                        return bad(format!("group {g} repeats a coordinate"));
                    }
                    if let Some(&k) = members.iter().find(|&&k| k >= dim) {
                        return bad(format!("group {g} references coordinate {k} of {dim}"));
                    }
                }
            }
            _ => {
                if lambda.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: lambda.len(),
                        context: "penalty tuning vector",
                    });
                }
            }
        }
        match kind {
            PenaltyKind::Scad { a } if !(a > T::lit(2.0)) || !a.is_finite_value() => {
                return bad("scad requires a > 2".into())
            }
            PenaltyKind::Mcp { a } if !(a > T::zero()) || !a.is_finite_value() => {
                return bad("mcp requires a > 0".into())
            }
            PenaltyKind::Lq { q } if !(q > T::zero() && q <= T::one()) => {
                return bad("lq requires q in (0, 1]".into())
            }
            PenaltyKind::ElasticNet { lambda2 } if !(lambda2 >= T::zero()) || !lambda2.is_finite_value() => {
                return bad("elastic net requires a finite lambda2 >= 0".into())
            }
            _ => {}
        }
        Ok(Self { kind, lambda, dim })
    }

    pub fn none(dim: usize) -> Self {
        Self {
            kind: PenaltyKind::Lasso,
            lambda: vec![T::zero(); dim],
            dim,
        }
    }

    pub fn lasso(lambda: Vec<T>) -> Result<Self> {
        let p = lambda.len();
        Self::new(PenaltyKind::Lasso, lambda, p)
    }

    pub fn elastic_net(lambda1: Vec<T>, lambda2: T) -> Result<Self> {
        let p = lambda1.len();
        Self::new(PenaltyKind::ElasticNet { lambda2 }, lambda1, p)
    }

    pub fn scad(lambda: Vec<T>, a: T) -> Result<Self> {
        let p = lambda.len();
        Self::new(PenaltyKind::Scad { a }, lambda, p)
    }

    pub fn mcp(lambda: Vec<T>, a: T) -> Result<Self> {
        let p = lambda.len();
        Self::new(PenaltyKind::Mcp { a }, lambda, p)
    }

    pub fn lq(lambda: Vec<T>, q: T) -> Result<Self> {
        let p = lambda.len();
        Self::new(PenaltyKind::Lq { q }, lambda, p)
    }

    pub fn group_lasso(groups: Vec<Vec<usize>>, lambda: Vec<T>, dim: usize) -> Result<Self> {
        Self::new(PenaltyKind::GroupLasso { groups }, lambda, dim)
    }

    /// Weighted lasso `Σ_k w_k |θ_k|`.
    pub fn weighted_lasso(weights: Vec<T>) -> Result<Self> {
        Self::lasso(weights)
    }

    /// The penalty on the coordinates `idx` only (others removed). Groups are
    /// intersected with `idx`; groups that vanish are dropped.
    pub fn restrict(&self, idx: &[usize]) -> Result<Self> {
        let mut pos = vec![usize::MAX; self.dim];
        for (new, &old) in idx.iter().enumerate() {
            if old >= self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: old,
                    context: "restricted coordinate",
                });
            }
            pos[old] = new;
        }
        match &self.kind {
            PenaltyKind::GroupLasso { groups } => {
                let mut g2 = Vec::new();
                let mut l2 = Vec::new();
                for (g, l) in groups.iter().zip(&self.lambda) {
                    let kept: Vec<usize> = g.iter().filter(|&&k| pos[k] != usize::MAX).map(|&k| pos[k]).collect();
                    if !kept.is_empty() {
                        g2.push(kept);
                        l2.push(*l);
                    }
                }
                Self::new(PenaltyKind::GroupLasso { groups: g2 }, l2, idx.len())
            }
            kind => Self::new(kind.clone(), idx.iter().map(|&k| self.lambda[k]).collect(), idx.len()),
        }
    }

    /// Whether the penalty vanishes identically.
    pub fn is_zero(&self) -> bool {
        let l_zero = self.lambda.iter().all(|l| *l == T::zero());
        match self.kind {
            PenaltyKind::ElasticNet { lambda2 } => l_zero && lambda2 == T::zero(),
            _ => l_zero,
        }
    }

    pub fn kind(&self) -> &PenaltyKind<T> {
        &self.kind
    }

    pub fn lambda(&self) -> &[T] {
        &self.lambda
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Same shape, tuning vector replaced.
    pub fn with_lambda(&self, lambda: Vec<T>) -> Result<Self> {
        Self::new(self.kind.clone(), lambda, self.dim)
    }

    /// Same shape, every tuning value multiplied by `c`.
    pub fn scaled(&self, c: T) -> Result<Self> {
        self.with_lambda(self.lambda.iter().map(|l| *l * c).collect())
    }

    pub fn groups(&self) -> Option<&[Vec<usize>]> {
        match &self.kind {
            PenaltyKind::GroupLasso { groups } => Some(groups),
            _ => None,
        }
    }

    /// Whether `θ = 0` is a degenerate stationary point, i.e. `ℓ_q` with `q < 1`.
    pub fn is_solvable(&self) -> bool {
        !matches!(self.kind, PenaltyKind::Lq { q } if q < T::one())
    }

    pub fn is_convex(&self) -> bool {
        match self.kind {
            PenaltyKind::Lasso | PenaltyKind::ElasticNet { .. } | PenaltyKind::GroupLasso { .. } => true,
            PenaltyKind::Lq { q } => q == T::one(),
            PenaltyKind::Scad { .. } | PenaltyKind::Mcp { .. } => false,
        }
    }

    /// Whether every group is disjoint from every other.
    pub fn groups_are_disjoint(&self) -> bool {
        match &self.kind {
            PenaltyKind::GroupLasso { groups } => {
                let mut owner = vec![false; self.dim];
                for g in groups {
                    for &k in g {
                        if owner[k] {
                            return false;
                        }
                        owner[k] = true;
                    }
                }
                true
            }
            _ => true,
        }
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: len,
                context: "penalty argument",
            });
        }
        Ok(())
    }

    /// One-coordinate value `p_{λ_k}(t)` for coordinatewise kinds.
    fn coord_value(&self, k: usize, t: T) -> T {
        let lam = self.lambda[k];
        let x = t.abs();
        match self.kind {
            PenaltyKind::Lasso => lam * x,
            PenaltyKind::ElasticNet { lambda2 } => lam * x + lambda2 * t * t,
            PenaltyKind::Lq { q } => {
                if x == T::zero() {
                    T::zero()
                } else {
                    lam * x.powf(q)
                }
            }
            PenaltyKind::Scad { a } => {
                if x <= lam {
                    lam * x
                } else if x <= a * lam {
                    (T::lit(2.0) * a * lam * x - x * x - lam * lam) / (T::lit(2.0) * (a - T::one()))
                } else {
                    (a + T::one()) * lam * lam / T::lit(2.0)
                }
            }
            PenaltyKind::Mcp { a } => {
                if x <= a * lam {
                    lam * x - x * x / (T::lit(2.0) * a)
                } else {
                    a * lam * lam / T::lit(2.0)
                }
            }
            PenaltyKind::GroupLasso { .. } => unreachable!("group lasso is not coordinatewise"),
        }
    }

    /// `p_λ(θ)`.
    pub fn value(&self, theta: &[T]) -> Result<T> {
        self.check_dim(theta.len())?;
        Ok(match &self.kind {
            PenaltyKind::GroupLasso { groups } => groups
                .iter()
                .zip(&self.lambda)
                .map(|(g, l)| *l * group_norm(theta, g))
                .fold(T::zero(), |s, v| s + v),
            _ => (0..self.dim)
                .map(|k| self.coord_value(k, theta[k]))
                .fold(T::zero(), |s, v| s + v),
        })
    }

    /// Right derivative of the one-coordinate penalty at `t ≥ 0` (coordinatewise kinds).
    pub fn slope(&self, k: usize, t: T) -> T {
        let lam = self.lambda[k];
        let x = t.abs();
        match self.kind {
            PenaltyKind::Lasso => lam,
            PenaltyKind::ElasticNet { lambda2 } => lam + T::lit(2.0) * lambda2 * x,
            PenaltyKind::Lq { q } => {
                if x == T::zero() {
                    if q < T::one() {
                        T::infinity()
                    } else {
                        lam
                    }
                } else {
                    lam * q * x.powf(q - T::one())
                }
            }
            PenaltyKind::Scad { a } => {
                if x <= lam {
                    lam
                } else if x < a * lam {
                    (a * lam - x) / (a - T::one())
                } else {
                    T::zero()
                }
            }
            PenaltyKind::Mcp { a } => {
                if x <= a * lam {
                    lam - x / a
                } else {
                    T::zero()
                }
            }
            PenaltyKind::GroupLasso { .. } => unreachable!("group lasso is not coordinatewise"),
        }
    }

    /// Half-width of the subdifferential box at a zero coordinate (zero group).
    pub fn zero_box_halfwidth(&self, k: usize) -> T {
        match &self.kind {
            PenaltyKind::GroupLasso { groups } => groups
                .iter()
                .zip(&self.lambda)
                .filter(|(g, _)| g.contains(&k))
                .fold(T::zero(), |s, (_, l)| s + *l),
            _ => self.slope(k, T::zero()),
        }
    }

    /// The rectangle `∂p_λ(θ)`.
    pub fn subdifferential(&self, theta: &[T]) -> Result<SubdiffRectangle<T>> {
        self.check_dim(theta.len())?;
        let p = self.dim;
        let mut lo = vec![T::zero(); p];
        let mut hi = vec![T::zero(); p];
        match &self.kind {
            PenaltyKind::GroupLasso { groups } => {
                for (g, l) in groups.iter().zip(&self.lambda) {
                    let norm = group_norm(theta, g);
                    for &k in g {
                        if norm > T::zero() {
                            let v = *l * theta[k] / norm;
                            lo[k] += v;
                            hi[k] += v;
                        } else {
                            lo[k] -= *l;
                            hi[k] += *l;
                        }
                    }
                }
            }
            _ => {
                for k in 0..p {
                    let t = theta[k];
                    if t == T::zero() {
                        let h = self.slope(k, T::zero());
                        lo[k] = -h;
                        hi[k] = h;
                    } else {
                        let v = sign(t) * self.slope(k, t);
                        lo[k] = v;
                        hi[k] = v;
                    }
                }
            }
        }
        Ok(SubdiffRectangle { lo, hi })
    }

    /// A particular subgradient `p′_λ(θ)`, taking `sign(0) = 0`.
    pub fn derivative(&self, theta: &[T]) -> Result<DVector<T>> {
        let r = self.subdifferential(theta)?;
        Ok(DVector::from_fn(self.dim, |k, _| {
            if r.is_singleton(k) {
                r.lo[k]
            } else {
                T::zero()
            }
        }))
    }

    /// `μ` such that `⟨θ′−θ, g′−g⟩ ≥ −½ μ ‖θ′−θ‖²` is claimed for this penalty.
    pub fn weak_convexity_mu(&self) -> Result<T> {
        match self.kind {
            PenaltyKind::Lasso | PenaltyKind::ElasticNet { .. } | PenaltyKind::GroupLasso { .. } => Ok(T::zero()),
            PenaltyKind::Scad { a } => Ok(T::one() / (a - T::one())),
            PenaltyKind::Mcp { a } => Ok(T::one() / a),
            PenaltyKind::Lq { q } if q == T::one() => Ok(T::zero()),
            PenaltyKind::Lq { .. } => Err(Error::UnsupportedPenalty {
                kind: "lq",
                reason: "no finite weak-convexity constant for q < 1",
            }),
        }
    }

    /// `argmin_u (u − z)²/(2t) + p_λ(u)` along coordinate `k`, other
    /// coordinates held at `theta` (only the group lasso reads them).
    pub fn scalar_threshold(&self, z: T, t: T, k: usize, theta: &[T]) -> Result<T> {
        if !(t > T::zero()) || !t.is_finite_value() {
            return Err(Error::InvalidArgument("threshold step must be positive".into()));
        }
        if k >= self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: k,
                context: "threshold coordinate",
            });
        }
        match &self.kind {
            PenaltyKind::Lasso => Ok(soft_threshold(z, t * self.lambda[k])),
            PenaltyKind::Lq { q } if *q == T::one() => Ok(soft_threshold(z, t * self.lambda[k])),
            PenaltyKind::Lq { .. } => Err(Error::UnsupportedPenalty {
                kind: "lq",
                reason: "zero is always stationary for q < 1",
            }),
            PenaltyKind::ElasticNet { lambda2 } => {
                Ok(soft_threshold(z, t * self.lambda[k]) / (T::one() + T::lit(2.0) * t * *lambda2))
            }
            PenaltyKind::Scad { a } => Ok(self.folded_threshold(z, t, k, *a, true)),
            PenaltyKind::Mcp { a } => Ok(self.folded_threshold(z, t, k, *a, false)),
            PenaltyKind::GroupLasso { groups } => {
                if theta.len() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        got: theta.len(),
                        context: "threshold context",
                    });
                }
                let mut kink = T::zero();
                let mut smooth: Vec<(T, T)> = Vec::new();
                for (g, l) in groups.iter().zip(&self.lambda) {
                    if !g.contains(&k) {
                        continue;
                    }
                    let r2 = g
                        .iter()
                        .filter(|&&j| j != k)
                        .fold(T::zero(), |s, &j| s + theta[j] * theta[j]);
                    if r2 > T::zero() {
                        smooth.push((*l, r2));
                    } else {
                        kink += *l;
                    }
                }
                Ok(group_coordinate_solve(z, t, kink, &smooth))
            }
        }
    }

    /// Global minimizer over the piecewise regions of SCAD (`scad = true`) or MCP.
    fn folded_threshold(&self, z: T, t: T, k: usize, a: T, scad: bool) -> T {
        let lam = self.lambda[k];
        let s = sign(z);
        let x = z.abs();
        let zero = T::zero();
        let mut cands: Vec<T> = Vec::with_capacity(6);
        if scad {
            cands.push((x - t * lam).clamp(zero, lam));
            if t < a - T::one() {
                let u = ((a - T::one()) * x - t * a * lam) / (a - T::one() - t);
                cands.push(u.clamp(lam, a * lam));
            }
            cands.push(lam);
        } else {
            if t < a {
                let u = (x - t * lam) / (T::one() - t / a);
                cands.push(u.clamp(zero, a * lam));
            }
            cands.push(zero);
        }
        cands.push(a * lam);
        cands.push(x.max(a * lam));
        let obj = |u: T| (u - x) * (u - x) / (t + t) + self.coord_value(k, u);
        let mut best = cands[0];
        let mut best_val = obj(best);
        for &c in &cands[1..] {
            let v = obj(c);
            if v < best_val || (v == best_val && c < best) {
                best = c;
                best_val = v;
            }
        }
        s * best
    }
}

pub fn soft_threshold<T: Scalar>(z: T, tau: T) -> T {
    sign(z) * (z.abs() - tau).max(T::zero())
}

fn group_norm<T: Scalar>(theta: &[T], g: &[usize]) -> T {
    g.iter().fold(T::zero(), |s, &j| s + theta[j] * theta[j]).sqrt()
}

/// Solves `u + t·Σ λ_G u/√(u² + r_G²) + t·κ·sign(u) ∋ z` for `u`.
fn group_coordinate_solve<T: Scalar>(z: T, t: T, kink: T, smooth: &[(T, T)]) -> T {
    let x = z.abs();
    if x <= t * kink {
        return T::zero();
    }
    if smooth.is_empty() {
        return sign(z) * (x - t * kink);
    }
    let h = |u: T| {
        u + t * kink + t * smooth.iter().fold(T::zero(), |s, (l, r2)| s + *l * u / (u * u + *r2).sqrt()) - x
    };
    let (mut lo, mut hi) = (T::zero(), x);
    for _ in 0..200 {
        let mid = (lo + hi) * T::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) > T::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    sign(z) * (lo + hi) * T::lit(0.5)
}

/// The bidiagonal change of variables `β₁ = θ₁`, `β_k = θ_k − θ_{k−1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionMap {
    dim: usize,
}

impl FusionMap {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidArgument("fusion needs at least two coordinates".into()));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn to_beta<T: Clone + Num>(&self, theta: &[T]) -> Vec<T> {
        let mut out = Vec::with_capacity(theta.len());
        for k in 0..theta.len() {
            if k == 0 {
                out.push(theta[0].clone());
            } else {
                out.push(theta[k].clone() - theta[k - 1].clone());
            }
        }
        out
    }

    pub fn to_theta<T: Clone + Num>(&self, beta: &[T]) -> Vec<T> {
        let mut out: Vec<T> = Vec::with_capacity(beta.len());
        for b in beta {
            let next = match out.last() {
                Some(prev) => prev.clone() + b.clone(),
                None => b.clone(),
            };
            out.push(next);
        }
        out
    }

    /// `Lᵀ v` for the cumulative-sum matrix `L` (`θ = Lβ`): suffix sums.
    pub fn transpose_apply<T: Clone + Num>(&self, v: &[T]) -> Vec<T> {
        let mut out = v.to_vec();
        for k in (0..out.len().saturating_sub(1)).rev() {
            out[k] = out[k].clone() + out[k + 1].clone();
        }
        out
    }

    /// Dense `L`.
    pub fn matrix<T: Scalar>(&self) -> DMatrix<T> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| if j <= i { T::one() } else { T::zero() })
    }
}

/// A model expressed in fused coordinates: `φ̃(x; β) = Lᵀ φ(x; Lβ)`.
pub struct FusedModel<M> {
    inner: M,
    map: FusionMap,
}

impl<M> FusedModel<M> {
    pub fn inner(&self) -> &M {
        &self.inner
    }

    pub fn map(&self) -> FusionMap {
        self.map
    }
}

/// Rewrites a square model in fused coordinates.
pub fn fusion_reparametrize<T: Scalar, M: EstimatingModel<T>>(model: M) -> Result<(FusedModel<M>, FusionMap)> {
    if model.dim() != model.input_dim() {
        return Err(Error::InvalidArgument("fusion needs a square model".into()));
    }
    let map = FusionMap::new(model.dim())?;
    Ok((FusedModel { inner: model, map }, map))
}

impl<T: Scalar, M: EstimatingModel<T>> EstimatingModel<T> for FusedModel<M> {
    fn dim(&self) -> usize {
        self.map.dim
    }

    fn phi(&self, obs: &Obs<'_, T>, beta: &[T], out: &mut [T]) {
        let theta = self.map.to_theta(beta);
        let mut tmp = vec![T::zero(); self.map.dim];
        self.inner.phi(obs, &theta, &mut tmp);
        out.copy_from_slice(&self.map.transpose_apply(&tmp));
    }

    fn has_jacobian(&self) -> bool {
        self.inner.has_jacobian()
    }

    fn add_jacobian(&self, obs: &Obs<'_, T>, beta: &[T], scale: T, acc: &mut DMatrix<T>) -> bool {
        let p = self.map.dim;
        let theta = self.map.to_theta(beta);
        let mut j = DMatrix::zeros(p, p);
        if !self.inner.add_jacobian(obs, &theta, scale, &mut j) {
            return false;
        }
        let l = self.map.matrix::<T>();
        *acc += l.transpose() * j * l;
        true
    }

    fn has_envelope(&self) -> bool {
        self.inner.has_envelope()
    }

    fn add_envelope(&self, obs: &Obs<'_, T>, scale: T, acc: &mut DMatrix<T>) -> bool {
        let p = self.map.dim;
        let mut h = DMatrix::zeros(p, p);
        if !self.inner.add_envelope(obs, scale, &mut h) {
            return false;
        }
        let l = self.map.matrix::<T>();
        *acc += l.transpose() * h * l;
        true
    }

    fn domain(&self) -> Option<&DomainBox<T>> {
        None
    }

    fn validate(&self, data: &crate::data::Dataset<T>) -> Result<()> {
        self.inner.validate(data)
    }

    fn rows(&self) -> RowFilter {
        self.inner.rows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num_rational::Ratio;

    #[test]
    fn values() {
        let l = Penalty::lasso(vec![0.5, 0.5]).unwrap();
        assert_eq!(l.value(&[1.0, -2.0]).unwrap(), 1.5);
        let s = Penalty::scad(vec![1.0], 3.7).unwrap();
        assert_abs_diff_eq!(s.value(&[10.0]).unwrap(), 2.35, epsilon = 1e-15);
        let m = Penalty::mcp(vec![0.7], 1.3).unwrap();
        assert_eq!(m.value(&[0.0]).unwrap(), 0.0);
        let g = Penalty::group_lasso(vec![vec![0, 1], vec![2]], vec![2.0, 1.0], 3).unwrap();
        assert_abs_diff_eq!(g.value(&[3.0, 4.0, -1.0]).unwrap(), 11.0, epsilon = 1e-15);
    }

    #[test]
    fn subdifferentials() {
        let l = Penalty::lasso(vec![1.0]).unwrap();
        assert_eq!(l.subdifferential(&[0.0]).unwrap().interval(0), (-1.0, 1.0));
        let s = Penalty::scad(vec![1.0], 3.7).unwrap();
        let r = s.subdifferential(&[2.0]).unwrap();
        assert!(r.is_singleton(0));
        assert_abs_diff_eq!(r.lo[0], 1.7 / 2.7, epsilon = 1e-15);
        let m = Penalty::mcp(vec![1.0], 2.0).unwrap();
        assert_eq!(m.subdifferential(&[5.0]).unwrap().interval(0), (0.0, 0.0));
        let q = Penalty::lq(vec![1.0], 0.5).unwrap();
        let r = q.subdifferential(&[0.0]).unwrap();
        assert_eq!(r.interval(0), (f64::NEG_INFINITY, f64::INFINITY));
    }

    #[test]
    fn invalid_shapes_are_rejected() {
        assert!(Penalty::scad(vec![1.0], 2.0).is_err());
        assert!(Penalty::mcp(vec![1.0], 0.0).is_err());
        assert!(Penalty::lasso(vec![-1.0]).is_err());
        assert!(Penalty::lq(vec![1.0], 1.5).is_err());
        assert!(Penalty::group_lasso(vec![vec![0, 3]], vec![1.0], 3).is_err());
    }

    #[test]
    fn thresholds() {
        let l = Penalty::lasso(vec![1.0]).unwrap();
        assert_eq!(l.scalar_threshold(0.5, 1.0, 0, &[0.0]).unwrap(), 0.0);
        assert_eq!(l.scalar_threshold(3.0, 1.0, 0, &[0.0]).unwrap(), 2.0);
        let s = Penalty::scad(vec![1.0], 3.7).unwrap();
        assert_eq!(s.scalar_threshold(10.0, 1.0, 0, &[0.0]).unwrap(), 10.0);
        let q = Penalty::lq(vec![1.0], 0.5).unwrap();
        assert!(matches!(
            q.scalar_threshold(1.0, 1.0, 0, &[0.0]),
            Err(Error::UnsupportedPenalty { .. })
        ));
    }

    #[test]
    fn mu_values() {
        assert_eq!(Penalty::lasso(vec![1.0]).unwrap().weak_convexity_mu().unwrap(), 0.0);
        assert_abs_diff_eq!(
            Penalty::scad(vec![1.0], 3.7).unwrap().weak_convexity_mu().unwrap(),
            0.37037037037037,
            epsilon = 1e-12
        );
        assert_eq!(Penalty::mcp(vec![1.0], 2.0).unwrap().weak_convexity_mu().unwrap(), 0.5);
        assert!(Penalty::lq(vec![1.0], 0.5).unwrap().weak_convexity_mu().is_err());
    }

    #[test]
    fn fusion_roundtrip_is_exact_in_rationals() {
        let map = FusionMap::new(3).unwrap();
        assert_eq!(map.to_beta(&[2.0, 2.0, 5.0]), vec![2.0, 0.0, 3.0]);
        let theta: Vec<Ratio<i64>> = vec![Ratio::new(1, 3), Ratio::new(-7, 5), Ratio::new(22, 7)];
        assert_eq!(map.to_theta(&map.to_beta(&theta)), theta);
        let v = [1.0, 2.0, 3.0];
        assert_eq!(map.transpose_apply(&v), vec![6.0, 5.0, 3.0]);
    }
}
