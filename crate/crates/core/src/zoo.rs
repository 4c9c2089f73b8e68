//! Ready-made estimating models and the analytic reference quantities used
//! to check them.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_rational::Ratio;
use serde::Serialize;

use crate::data::{Dataset, Obs};
use crate::error::{Error, Result};
use crate::model::{DomainBox, EstimatingModel};
use crate::scalar::Scalar;
use crate::stack::{
    stack_multisample, stack_stepwise, Block, SharedModel, Stage, StackKind, StackedModel,
};
use crate::model::RowFilter;
use crate::stats::{normal_cdf, normal_pdf};

/// Conventional Huber tuning constant.
pub const HUBER_DELTA: f64 = 1.345;

/// Propensity scores are clipped to `[ε, 1 − ε]`.
pub const PROPENSITY_CLIP: f64 = 1e-3;

/// Largest tolerated share of clipped propensity scores.
pub const CLIP_FRACTION_LIMIT: f64 = 0.01;

#[inline]
pub fn sigmoid<T: Scalar>(eta: T) -> T {
    if eta >= T::zero() {
        T::one() / (T::one() + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (T::one() + e)
    }
}

/// The score function `ψ(y, η)` of a GLM-type M-estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "psi", rename_all = "snake_case")]
pub enum PsiKind<T> {
    /// `ψ = y − η`.
    LeastSquares,
    /// `ψ = y − σ(η)`.
    Logistic,
    /// `ψ = clamp(y − η, −δ, δ)`.
    Huber { delta: T },
}

impl<T: Scalar> PsiKind<T> {
    pub fn huber_default() -> Self {
        PsiKind::Huber {
            delta: T::lit(HUBER_DELTA),
        }
    }

    #[inline]
    pub fn psi(&self, y: T, eta: T) -> T {
        match *self {
            PsiKind::LeastSquares => y - eta,
            PsiKind::Logistic => y - sigmoid(eta),
            PsiKind::Huber { delta } => (y - eta).clamp(-delta, delta),
        }
    }

    /// `∂ψ/∂η`, always `≤ 0`.
    #[inline]
    pub fn dpsi(&self, y: T, eta: T) -> T {
        match *self {
            PsiKind::LeastSquares => -T::one(),
            PsiKind::Logistic => {
                let s = sigmoid(eta);
                -s * (T::one() - s)
            }
            PsiKind::Huber { delta } => {
                if (y - eta).abs() <= delta {
                    -T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmSpec<T> {
    pub psi: PsiKind<T>,
    pub dim: usize,
    /// Lower bound on `|ψ′|` over the domain; the envelope is `−floor · x xᵀ`.
    pub envelope_floor: Option<T>,
    pub domain: Option<DomainBox<T>>,
}

impl<T: Scalar> GlmSpec<T> {
    /// Least squares gets the exact floor 1; other scores need one supplied.
    pub fn new(psi: PsiKind<T>, dim: usize) -> Self {
        let envelope_floor = match psi {
            PsiKind::LeastSquares => Some(T::one()),
            _ => None,
        };
        Self {
            psi,
            dim,
            envelope_floor,
            domain: None,
        }
    }

    pub fn with_envelope_floor(mut self, floor: T) -> Self {
        self.envelope_floor = Some(floor);
        self
    }

    pub fn with_domain(mut self, domain: DomainBox<T>) -> Self {
        self.domain = Some(domain);
        self
    }
}

/// `φ(x, y; θ) = ψ(y, xᵀθ) · x`; the feature row is the design vector.
#[derive(Debug, Clone)]
pub struct GlmModel<T> {
    spec: GlmSpec<T>,
}

impl<T: Scalar> GlmModel<T> {
    pub fn new(spec: GlmSpec<T>) -> Self {
        Self { spec }
    }

    pub fn spec(&self) -> &GlmSpec<T> {
        &self.spec
    }

    #[inline]
    fn eta(x: &[T], theta: &[T]) -> T {
        x.iter().zip(theta).fold(T::zero(), |s, (a, b)| s + *a * *b)
    }
}

pub fn glm_model<T: Scalar>(spec: GlmSpec<T>) -> Result<GlmModel<T>> {
    if let PsiKind::Huber { delta } = spec.psi {
        if !(delta > T::zero()) {
            return Err(Error::InvalidArgument("huber delta must be positive".into()));
        }
    }
    if spec.dim == 0 {
        return Err(Error::InvalidArgument("glm needs at least one covariate".into()));
    }
    if let Some(f) = spec.envelope_floor {
        if f < T::zero() {
            return Err(Error::InvalidArgument("envelope floor must be non-negative".into()));
        }
    }
    Ok(GlmModel::new(spec))
}

impl<T: Scalar> EstimatingModel<T> for GlmModel<T> {
    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn phi(&self, obs: &Obs<'_, T>, theta: &[T], out: &mut [T]) {
        let r = self.spec.psi.psi(obs.y_or_zero(), Self::eta(obs.x, theta));
        for (o, x) in out.iter_mut().zip(obs.x) {
            *o = r * *x;
        }
    }

    fn has_jacobian(&self) -> bool {
        true
    }

    fn add_jacobian(&self, obs: &Obs<'_, T>, theta: &[T], scale: T, acc: &mut DMatrix<T>) -> bool {
        let d = self.spec.psi.dpsi(obs.y_or_zero(), Self::eta(obs.x, theta)) * scale;
        if d != T::zero() {
            rank_one_update(acc, d, obs.x);
        }
        true
    }

    fn has_envelope(&self) -> bool {
        self.spec.envelope_floor.is_some()
    }

    fn add_envelope(&self, obs: &Obs<'_, T>, scale: T, acc: &mut DMatrix<T>) -> bool {
        match self.spec.envelope_floor {
            Some(f) => {
                rank_one_update(acc, -f * scale, obs.x);
                true
            }
            None => false,
        }
    }

    fn domain(&self) -> Option<&DomainBox<T>> {
        self.spec.domain.as_ref()
    }

    fn validate(&self, data: &Dataset<T>) -> Result<()> {
        if data.arity() != self.spec.dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.dim,
                got: data.arity(),
                context: "glm design width",
            });
        }
        if data.response().is_none() {
            return Err(Error::InvalidData("glm needs a response column".into()));
        }
        Ok(())
    }
}

/// `acc += c · x xᵀ`.
#[inline]
fn rank_one_update<T: Scalar>(acc: &mut DMatrix<T>, c: T, x: &[T]) {
    let p = x.len();
    for j in 0..p {
        let cj = c * x[j];
        if cj == T::zero() {
            continue;
        }
        for i in 0..p {
            acc[(i, j)] += cj * x[i];
        }
    }
}

/// Scalar location model `φ(x; θ) = ψ(x_c − offset − θ)`, with `ψ` the
/// identity (mean) or the Huber clamp.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationModel<T> {
    column: usize,
    offset: T,
    huber: Option<T>,
    envelope_floor: Option<T>,
}

impl<T: Scalar> LocationModel<T> {
    /// `φ = x − θ`.
    pub fn mean() -> Self {
        Self {
            column: 0,
            offset: T::zero(),
            huber: None,
            envelope_floor: Some(T::one()),
        }
    }

    /// `φ = clamp(x − θ, −δ, δ)`. No envelope unless a floor is supplied.
    pub fn huber(delta: T) -> Self {
        Self {
            column: 0,
            offset: T::zero(),
            huber: Some(delta),
            envelope_floor: None,
        }
    }

    pub fn on_column(mut self, column: usize) -> Self {
        self.column = column;
        self
    }

    pub fn with_offset(mut self, offset: T) -> Self {
        self.offset = offset;
        self
    }

    pub fn with_envelope_floor(mut self, floor: T) -> Self {
        self.envelope_floor = Some(floor);
        self
    }

    #[inline]
    fn residual(&self, obs: &Obs<'_, T>, theta: T) -> T {
        obs.x[self.column] - self.offset - theta
    }
}

impl<T: Scalar> EstimatingModel<T> for LocationModel<T> {
    fn dim(&self) -> usize {
        1
    }

    fn phi(&self, obs: &Obs<'_, T>, theta: &[T], out: &mut [T]) {
        let r = self.residual(obs, theta[0]);
        out[0] = match self.huber {
            Some(d) => r.clamp(-d, d),
            None => r,
        };
    }

    fn has_jacobian(&self) -> bool {
        true
    }

    fn add_jacobian(&self, obs: &Obs<'_, T>, theta: &[T], scale: T, acc: &mut DMatrix<T>) -> bool {
        let r = self.residual(obs, theta[0]);
        let active = match self.huber {
            Some(d) => r.abs() <= d,
            None => true,
        };
        if active {
            acc[(0, 0)] -= scale;
        }
        true
    }

    fn has_envelope(&self) -> bool {
        self.envelope_floor.is_some()
    }

    fn add_envelope(&self, _obs: &Obs<'_, T>, scale: T, acc: &mut DMatrix<T>) -> bool {
        match self.envelope_floor {
            Some(f) => {
                acc[(0, 0)] -= f * scale;
                true
            }
            None => false,
        }
    }

    fn validate(&self, data: &Dataset<T>) -> Result<()> {
        if self.column >= data.arity() {
            return Err(Error::DimensionMismatch {
                expected: self.column + 1,
                got: data.arity(),
                context: "location column",
            });
        }
        Ok(())
    }
}

/// A stacked model together with non-fatal construction warnings.
#[derive(Debug, Clone)]
pub struct Assembled<T: Scalar> {
    pub model: StackedModel<T>,
    pub warnings: Vec<String>,
}

/// `K⁻¹ Σ_k θ_k − θ_{K+1}`.
#[derive(Debug, Clone, Copy)]
struct Reconciliation {
    k: usize,
}

impl<T: Scalar> EstimatingModel<T> for Reconciliation {
    fn dim(&self) -> usize {
        1
    }

    fn input_dim(&self) -> usize {
        self.k + 1
    }

    fn phi(&self, _obs: &Obs<'_, T>, theta: &[T], out: &mut [T]) {
        let s = theta[..self.k].iter().fold(T::zero(), |a, b| a + *b);
        out[0] = s / T::from_count(self.k) - theta[self.k];
    }

    fn has_jacobian(&self) -> bool {
        true
    }

    fn add_jacobian(&self, _obs: &Obs<'_, T>, _theta: &[T], scale: T, acc: &mut DMatrix<T>) -> bool {
        let w = scale / T::from_count(self.k);
        for j in 0..self.k {
            acc[(0, j)] += w;
        }
        acc[(0, self.k)] -= scale;
        true
    }
}

/// `K` per-location estimates of a common scalar parameter plus the
/// averaging row for `θ_{K+1}`.
pub fn distributed_model<T: Scalar>(submodel: SharedModel<T>, data: &Dataset<T>) -> Result<Assembled<T>> {
    if submodel.dim() != 1 || submodel.input_dim() != 1 {
        return Err(Error::InvalidArgument("distributed inference needs a scalar submodel".into()));
    }
    let k = data.n_labels();
    if k == 0 {
        return Err(Error::InvalidData("distributed inference needs sample labels".into()));
    }
    let ms = stack_multisample(vec![submodel; k], data)?;
    let mut warnings = Vec::new();
    let n0 = data.label_count(1);
    if (2..=k).any(|j| data.label_count(j) != n0) {
        warnings.push("unequal location sample sizes; the variance formula assumes n_k = n/K".into());
    }
    let mut blocks: Vec<Block<T>> = ms.blocks().to_vec();
    blocks.push(Block::new(
        Arc::new(Reconciliation { k }),
        k..k + 1,
        vec![0..k + 1],
        RowFilter::All,
        Ratio::from_integer(1),
    )?);
    Ok(Assembled {
        model: StackedModel::from_blocks(blocks, StackKind::Custom)?,
        warnings,
    })
}

/// Per-machine location models `φ_k = q − a − θ_k` on column `q_column`.
pub fn quality_control_model<T: Scalar>(q_column: usize, a: T, data: &Dataset<T>) -> Result<StackedModel<T>> {
    let k = data.n_labels();
    if k == 0 {
        return Err(Error::InvalidData("quality control needs machine labels".into()));
    }
    let m: SharedModel<T> = Arc::new(LocationModel::mean().on_column(q_column).with_offset(a));
    stack_multisample(vec![m; k], data)
}

/// The tuning value `8 · max_k √(σ_k² ln K / n_k)`.
pub fn quality_control_lambda<T: Scalar>(sigma2: &[T], counts: &[usize]) -> Result<T> {
    if sigma2.len() != counts.len() || sigma2.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: counts.len(),
            got: sigma2.len(),
            context: "per-machine variances",
        });
    }
    let lnk = T::from_count(sigma2.len()).ln();
    let mut best = T::zero();
    for (s, &n) in sigma2.iter().zip(counts) {
        if n == 0 {
            return Err(Error::EmptySample(0));
        }
        best = best.max((*s * lnk / T::from_count(n)).sqrt());
    }
    Ok(T::lit(8.0) * best)
}

/// Link `σ` for the propensity model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Logistic,
    Probit,
}

impl Link {
    /// `(σ, σ′, σ″)` at `η`.
    pub fn eval<T: Scalar>(&self, eta: T) -> (T, T, T) {
        match self {
            Link::Logistic => {
                let s = sigmoid(eta);
                let d = s * (T::one() - s);
                (s, d, d * (T::one() - s - s))
            }
            Link::Probit => {
                let e = eta.as_f64();
                let (s, d) = (normal_cdf(e), normal_pdf(e));
                (T::lit(s), T::lit(d), T::lit(-e * d))
            }
        }
    }
}

/// Dimensions of the two-step treatment-effect model.
///
/// Feature layout of every row: `[t, z_1..z_q, c_1..c_r]` with treatment
/// `t ∈ {0, 1}`; the response is the outcome `y`. The propensity design is
/// `w = (z, c)`, the effect design is `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CateSpec {
    pub link: Link,
    pub z_dim: usize,
    pub c_dim: usize,
    pub clip: f64,
}

impl CateSpec {
    pub fn new(link: Link, z_dim: usize, c_dim: usize) -> Self {
        Self {
            link,
            z_dim,
            c_dim,
            clip: PROPENSITY_CLIP,
        }
    }

    pub fn w_dim(&self) -> usize {
        self.z_dim + self.c_dim
    }

    fn arity(&self) -> usize {
        1 + self.w_dim()
    }

    fn validate<T: Scalar>(&self, data: &Dataset<T>) -> Result<()> {
        if data.arity() != self.arity() {
            return Err(Error::DimensionMismatch {
                expected: self.arity(),
                got: data.arity(),
                context: "treatment-effect row layout",
            });
        }
        if data.response().is_none() {
            return Err(Error::InvalidData("treatment-effect model needs an outcome column".into()));
        }
        Ok(())
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (x, y)| s + *x * *y)
}

/// Propensity score: `∇_θ₁ [T ln σ(wᵀθ₁) + (1−T) ln(1 − σ(wᵀθ₁))]`.
#[derive(Debug, Clone, Copy)]
struct PropensityStage {
    spec: CateSpec,
}

impl<T: Scalar> EstimatingModel<T> for PropensityStage {
    fn dim(&self) -> usize {
        self.spec.w_dim()
    }

    fn phi(&self, obs: &Obs<'_, T>, theta: &[T], out: &mut [T]) {
        let t = obs.x[0];
        let w = &obs.x[1..];
        let (s, d, _) = self.spec.link.eval(dot(w, theta));
        let sb = T::one() - s;
        let g = match self.spec.link {
            Link::Logistic => t - s,
            Link::Probit => t * d / s - (T::one() - t) * d / sb,
        };
        for (o, x) in out.iter_mut().zip(w) {
            *o = g * *x;
        }
    }

    fn has_jacobian(&self) -> bool {
        true
    }

    fn add_jacobian(&self, obs: &Obs<'_, T>, theta: &[T], scale: T, acc: &mut DMatrix<T>) -> bool {
        let t = obs.x[0];
        let w = &obs.x[1..];
        let (s, d, dd) = self.spec.link.eval(dot(w, theta));
        let c = match self.spec.link {
            Link::Logistic => -d,
            Link::Probit => {
                let sb = T::one() - s;
                let l1 = (dd * s - d * d) / (s * s);
                let l0 = (-dd * sb - d * d) / (sb * sb);
                t * l1 + (T::one() - t) * l0
            }
        };
        rank_one_update(acc, c * scale, w);
        true
    }

    fn validate(&self, data: &Dataset<T>) -> Result<()> {
        self.spec.validate(data)
    }
}

/// Plug-in least squares for the effect:
/// `[YT/σ̃ − Y(1−T)/(1−σ̃) − zᵀθ₂] z`, `σ̃` the clipped propensity.
#[derive(Debug, Clone, Copy)]
struct EffectStage {
    spec: CateSpec,
}

impl EffectStage {
    /// `(pseudo-outcome, ∂ pseudo-outcome / ∂η)` at `η = wᵀθ₁`.
    fn pseudo<T: Scalar>(&self, obs: &Obs<'_, T>, theta1: &[T]) -> (T, T) {
        let t = obs.x[0];
        let w = &obs.x[1..];
        let y = obs.y_or_zero();
        let (s, d, _) = self.spec.link.eval(dot(w, theta1));
        let eps = T::lit(self.spec.clip);
        let clipped = s < eps || s > T::one() - eps;
        let sc = s.clamp(eps, T::one() - eps);
        let sb = T::one() - sc;
        let value = y * t / sc - y * (T::one() - t) / sb;
        let slope = if clipped {
            T::zero()
        } else {
            -(y * t / (sc * sc) + y * (T::one() - t) / (sb * sb)) * d
        };
        (value, slope)
    }
}

impl<T: Scalar> EstimatingModel<T> for EffectStage {
    fn dim(&self) -> usize {
        self.spec.z_dim
    }

    fn input_dim(&self) -> usize {
        self.spec.w_dim() + self.spec.z_dim
    }

    fn phi(&self, obs: &Obs<'_, T>, theta: &[T], out: &mut [T]) {
        let (th1, th2) = theta.split_at(self.spec.w_dim());
        let z = &obs.x[1..1 + self.spec.z_dim];
        let (v, _) = self.pseudo(obs, th1);
        let r = v - dot(z, th2);
        for (o, x) in out.iter_mut().zip(z) {
            *o = r * *x;
        }
    }

    fn has_jacobian(&self) -> bool {
        true
    }

    fn add_jacobian(&self, obs: &Obs<'_, T>, theta: &[T], scale: T, acc: &mut DMatrix<T>) -> bool {
        let wd = self.spec.w_dim();
        let q = self.spec.z_dim;
        let (th1, _) = theta.split_at(wd);
        let w = &obs.x[1..];
        let z = &obs.x[1..1 + q];
        let (_, slope) = self.pseudo(obs, th1);
        for i in 0..q {
            let zi = z[i] * scale;
            if slope != T::zero() {
                for j in 0..wd {
                    acc[(i, j)] += zi * slope * w[j];
                }
            }
            for j in 0..q {
                acc[(i, wd + j)] -= zi * z[j];
            }
        }
        true
    }

    fn validate(&self, data: &Dataset<T>) -> Result<()> {
        self.spec.validate(data)
    }
}

/// Two-stage propensity / effect model as a stepwise stack; the parameter
/// is `(θ₁, θ₂)` with `θ₁ ∈ ℝ^{q+r}`, `θ₂ ∈ ℝ^q`.
pub fn cate_model<T: Scalar>(spec: CateSpec, data: &Dataset<T>) -> Result<StackedModel<T>> {
    if spec.z_dim == 0 {
        return Err(Error::InvalidArgument("effect design needs at least one column".into()));
    }
    if !(spec.clip > 0.0 && spec.clip < 0.5) {
        return Err(Error::InvalidArgument("propensity clip must lie in (0, 0.5)".into()));
    }
    spec.validate(data)?;
    let first: SharedModel<T> = Arc::new(PropensityStage { spec });
    let second: SharedModel<T> = Arc::new(EffectStage { spec });
    stack_stepwise(vec![Stage::new(first, vec![]), Stage::new(second, vec![0])], data)
}

/// Share of rows whose propensity falls outside `[ε, 1 − ε]` at `θ₁`.
pub fn cate_clipping_fraction<T: Scalar>(spec: &CateSpec, data: &Dataset<T>, theta1: &[T]) -> Result<f64> {
    spec.validate(data)?;
    if theta1.len() != spec.w_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.w_dim(),
            got: theta1.len(),
            context: "propensity parameter",
        });
    }
    let eps = T::lit(spec.clip);
    let clipped = data
        .iter()
        .filter(|o| {
            let (s, _, _) = spec.link.eval(dot(&o.x[1..], theta1));
            s < eps || s > T::one() - eps
        })
        .count();
    Ok(clipped as f64 / data.n() as f64)
}

/// Errors when more than 1% of propensities are clipped.
pub fn check_cate_clipping<T: Scalar>(spec: &CateSpec, data: &Dataset<T>, theta1: &[T]) -> Result<f64> {
    let fraction = cate_clipping_fraction(spec, data, theta1)?;
    if fraction > CLIP_FRACTION_LIMIT {
        return Err(Error::PropensityClipping {
            fraction,
            limit: CLIP_FRACTION_LIMIT,
        });
    }
    Ok(fraction)
}

/// Scalar update direction `f(x; θ)` for the batched gradient path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "f", rename_all = "snake_case")]
pub enum GdFunction<T> {
    /// `f = θ − x`, `f′ = 1`.
    Linear,
    /// `f = θ − x + β tanh(θ − x)`, `f′ ∈ [1, 1 + β]`.
    Smooth { beta: T },
}

impl<T: Scalar> GdFunction<T> {
    #[inline]
    pub fn f(&self, x: T, theta: T) -> T {
        match *self {
            GdFunction::Linear => theta - x,
            GdFunction::Smooth { beta } => {
                let r = theta - x;
                r + beta * r.tanh()
            }
        }
    }

    #[inline]
    pub fn fprime(&self, x: T, theta: T) -> T {
        match *self {
            GdFunction::Linear => T::one(),
            GdFunction::Smooth { beta } => {
                let c = (theta - x).tanh();
                T::one() + beta * (T::one() - c * c)
            }
        }
    }

    /// `(κ, L)` with `κ ≤ f′ ≤ L`.
    pub fn bounds(&self) -> (T, T) {
        match *self {
            GdFunction::Linear => (T::one(), T::one()),
            GdFunction::Smooth { beta } => (T::one(), T::one() + beta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GdPathSpec<T> {
    pub f: GdFunction<T>,
    pub alpha: T,
    /// Number of batches `K`.
    pub batches: usize,
    /// Fixed starting value `θ₀★`.
    pub theta0: T,
}

impl<T: Scalar> GdPathSpec<T> {
    pub fn validate(&self) -> Result<()> {
        let (_, l) = self.f.bounds();
        if let GdFunction::Smooth { beta } = self.f {
            if beta < T::zero() {
                return Err(Error::InvalidArgument("smooth path needs beta >= 0".into()));
            }
        }
        if !(self.alpha > T::zero()) || self.alpha * l > T::one() {
            return Err(Error::InvalidArgument("learning rate must satisfy 0 < alpha <= 1/L".into()));
        }
        if self.batches == 0 {
            return Err(Error::InvalidArgument("at least one batch".into()));
        }
        Ok(())
    }
}

/// Batch `k` equation `θ_{k−1} − θ_k − α f(x; θ_{k−1})`, with `θ₀★` fixed for `k = 1`.
#[derive(Debug, Clone, Copy)]
struct GdStage<T> {
    f: GdFunction<T>,
    alpha: T,
    start: Option<T>,
}

impl<T: Scalar> GdStage<T> {
    #[inline]
    fn prev(&self, theta: &[T]) -> T {
        match self.start {
            Some(t0) => t0,
            None => theta[0],
        }
    }
}

impl<T: Scalar> EstimatingModel<T> for GdStage<T> {
    fn dim(&self) -> usize {
        1
    }

    fn input_dim(&self) -> usize {
        if self.start.is_some() {
            1
        } else {
            2
        }
    }

    fn phi(&self, obs: &Obs<'_, T>, theta: &[T], out: &mut [T]) {
        let prev = self.prev(theta);
        let own = theta[theta.len() - 1];
        out[0] = prev - own - self.alpha * self.f.f(obs.x[0], prev);
    }

    fn has_jacobian(&self) -> bool {
        true
    }

    fn add_jacobian(&self, obs: &Obs<'_, T>, theta: &[T], scale: T, acc: &mut DMatrix<T>) -> bool {
        if self.start.is_none() {
            let prev = theta[0];
            acc[(0, 0)] += scale * (T::one() - self.alpha * self.f.fprime(obs.x[0], prev));
            acc[(0, 1)] -= scale;
        } else {
            acc[(0, 0)] -= scale;
        }
        true
    }

    fn validate(&self, data: &Dataset<T>) -> Result<()> {
        if data.arity() == 0 {
            return Err(Error::InvalidData("gradient path needs a feature column".into()));
        }
        Ok(())
    }
}

/// Labels rows `1..=K` in contiguous blocks of `n/K`.
pub fn assign_batches<T: Scalar>(data: Dataset<T>, batches: usize) -> Result<Dataset<T>> {
    let n = data.n();
    if batches == 0 || n % batches != 0 {
        return Err(Error::InvalidArgument(format!("{n} rows cannot be split into {batches} equal batches")));
    }
    let size = n / batches;
    data.with_labels((0..n).map(|i| i / size + 1).collect())
}

/// The batched gradient path as a stepwise stack; batch `k` is the rows labelled `k`.
pub fn gd_path_model<T: Scalar>(spec: &GdPathSpec<T>, data: &Dataset<T>) -> Result<StackedModel<T>> {
    spec.validate()?;
    let k = spec.batches;
    if data.n() % k != 0 {
        return Err(Error::InvalidArgument(format!("{} rows cannot be split into {k} equal batches", data.n())));
    }
    if data.n_labels() != k || (1..=k).any(|j| data.label_count(j) != data.n() / k) {
        return Err(Error::InvalidData(format!("batch labels must split the rows into {k} equal batches")));
    }
    let mut stages = Vec::with_capacity(k);
    for j in 0..k {
        let stage = GdStage {
            f: spec.f,
            alpha: spec.alpha,
            start: if j == 0 { Some(spec.theta0) } else { None },
        };
        let deps = if j == 0 { vec![] } else { vec![j - 1] };
        stages.push(Stage::new(Arc::new(stage) as SharedModel<T>, deps).on_label(j + 1));
    }
    stack_stepwise(stages, data)
}

/// The explicit recursion `θ̂_k = θ̂_{k−1} − α (K/n) Σ_{B_k} f(X_i; θ̂_{k−1})`.
pub fn gd_path_recursion<T: Scalar>(spec: &GdPathSpec<T>, data: &Dataset<T>) -> Result<Vec<T>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.batches);
    let mut prev = spec.theta0;
    for k in 1..=spec.batches {
        let rows = data.rows_with_label(k);
        if rows.is_empty() {
            return Err(Error::EmptySample(k));
        }
        let s = rows.iter().fold(T::zero(), |s, &i| s + spec.f.f(data.row(i)[0], prev));
        prev = prev - spec.alpha * s / T::from_count(rows.len());
        out.push(prev);
    }
    Ok(out)
}

/// Population path `θ★_k = θ★_{k−1} − α E f(X; θ★_{k−1})`, `k = 0..=K`.
pub fn population_path<T: Scalar>(spec: &GdPathSpec<T>, mean_f: impl Fn(T) -> T) -> Vec<T> {
    let mut path = Vec::with_capacity(spec.batches + 1);
    let mut t = spec.theta0;
    path.push(t);
    for _ in 0..spec.batches {
        t = t - spec.alpha * mean_f(t);
        path.push(t);
    }
    path
}

/// Moments along a path from a reference sample: `Var f(·; θ★_{k−1})` for
/// `k = 1..=K` and `E f′(·; θ★_m)` for `m = 0..K`.
pub fn path_moments<T: Scalar>(f: &GdFunction<T>, path: &[T], reference: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    if path.len() < 2 || reference.len() < 2 {
        return Err(Error::TooFewObservations {
            needed: 2,
            have: reference.len().min(path.len()),
        });
    }
    let n = T::from_count(reference.len());
    let k = path.len() - 1;
    let mut vars = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    for &th in &path[..k] {
        let mean = reference.iter().fold(T::zero(), |s, x| s + f.f(*x, th)) / n;
        let var = reference
            .iter()
            .fold(T::zero(), |s, x| {
                let d = f.f(*x, th) - mean;
                s + d * d
            })
            / n;
        vars.push(var);
        means.push(reference.iter().fold(T::zero(), |s, x| s + f.fprime(*x, th)) / n);
    }
    Ok((vars, means))
}

/// Limit covariance of `√(n/K)(θ̂ − θ★)` along the path.
///
/// `var_f[k−1] = Var f(X; θ★_{k−1})` and `mean_fprime[m] = E f′(X; θ★_m)`
/// for `k = 1..=K`, `m = 0..K`.
pub fn gd_path_covariance<T: Scalar>(alpha: T, var_f: &[T], mean_fprime: &[T]) -> Result<DMatrix<T>> {
    let k = var_f.len();
    if mean_fprime.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: mean_fprime.len(),
            context: "path derivative means",
        });
    }
    let factor = |m: usize| T::one() - alpha * mean_fprime[m];
    // prod(a, b) = ∏_{m=a}^{b-1} factor(m) (1-based m), empty product = 1
    let prod = |a: usize, b: usize| (a..b).fold(T::one(), |p, m| p * factor(m));
    let mut sigma = DMatrix::zeros(k, k);
    for i in 1..=k {
        let mut diag = T::zero();
        for kk in 1..=i {
            let p = prod(kk, i);
            diag += var_f[kk - 1] * p * p;
        }
        for j in i..=k {
            let v = alpha * alpha * diag * prod(i, j);
            sigma[(i - 1, j - 1)] = v;
            sigma[(j - 1, i - 1)] = v;
        }
    }
    Ok(sigma)
}

/// `σ² = E[ψ²] / E[ψ′]²` for a Huber location estimate under `N(0, sd²)` noise.
pub fn huber_location_variance(sd: f64, delta: f64) -> f64 {
    let c = delta / sd;
    let inside = 2.0 * normal_cdf(c) - 1.0;
    let e_psi2 = sd * sd * (inside - 2.0 * c * normal_pdf(c)) + delta * delta * 2.0 * (1.0 - normal_cdf(c));
    e_psi2 / (inside * inside)
}
