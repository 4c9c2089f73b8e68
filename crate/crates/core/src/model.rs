//! The estimating-model abstraction and sample evaluations of `Φ_n`, `Ĵ` and `Î`.

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, Obs};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which rows of a dataset can produce a nonzero `φ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RowFilter {
    #[default]
    All,
    /// Only rows whose sample label equals the given (1-based) label.
    Label(usize),
}

impl RowFilter {
    #[inline]
    pub fn accepts(&self, obs: &Obs<'_, impl Scalar>) -> bool {
        match self {
            RowFilter::All => true,
            RowFilter::Label(k) => obs.label == Some(*k),
        }
    }
}

/// Per-coordinate parameter bounds. Solvers project iterates onto the box.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> DomainBox<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
                context: "domain box bounds",
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::InvalidArgument("domain box has lower > upper".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn project(&self, theta: &mut DVector<T>) {
        for (k, v) in theta.iter_mut().enumerate() {
            *v = v.clamp(self.lower[k], self.upper[k]);
        }
    }

    pub fn contains(&self, theta: &[T]) -> bool {
        theta
            .iter()
            .enumerate()
            .all(|(k, v)| *v >= self.lower[k] && *v <= self.upper[k])
    }
}

/// A per-observation estimating function `φ(x; θ)`.
///
/// `phi` writes `dim()` values; the parameter it reads has `input_dim()`
/// entries (equal to `dim()` for ordinary square models, larger for stage
/// blocks that also read earlier-stage parameters). Implementations must be
/// free of interior mutability so that evaluation is reentrant.
pub trait EstimatingModel<T: Scalar>: Send + Sync {
    fn dim(&self) -> usize;

    fn input_dim(&self) -> usize {
        self.dim()
    }

    fn phi(&self, obs: &Obs<'_, T>, theta: &[T], out: &mut [T]);

    /// Whether [`EstimatingModel::add_jacobian`] is implemented.
    fn has_jacobian(&self) -> bool {
        false
    }

    /// Adds `scale · ∇_θ φ(obs; θ)` to `acc` (`dim × input_dim`).
    /// Returns `false` when no analytic Jacobian is available.
    fn add_jacobian(&self, _obs: &Obs<'_, T>, _theta: &[T], _scale: T, _acc: &mut DMatrix<T>) -> bool {
        false
    }

    /// Whether [`EstimatingModel::add_envelope`] is implemented.
    fn has_envelope(&self) -> bool {
        false
    }

    /// Adds `scale · H(obs)` to `acc` (`dim × dim`), the symmetric curvature
    /// majorant. Returns `false` when the model has none.
    fn add_envelope(&self, _obs: &Obs<'_, T>, _scale: T, _acc: &mut DMatrix<T>) -> bool {
        false
    }

    fn domain(&self) -> Option<&DomainBox<T>> {
        None
    }

    /// Rejects datasets the model cannot read (wrong arity, missing response).
    fn validate(&self, _data: &Dataset<T>) -> Result<()> {
        Ok(())
    }

    /// Rows outside this filter contribute `φ = 0`.
    fn rows(&self) -> RowFilter {
        RowFilter::All
    }
}

impl<T: Scalar, M: EstimatingModel<T> + ?Sized> EstimatingModel<T> for std::sync::Arc<M> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn phi(&self, obs: &Obs<'_, T>, theta: &[T], out: &mut [T]) {
        (**self).phi(obs, theta, out)
    }
    fn has_jacobian(&self) -> bool {
        (**self).has_jacobian()
    }
    fn add_jacobian(&self, obs: &Obs<'_, T>, theta: &[T], scale: T, acc: &mut DMatrix<T>) -> bool {
        (**self).add_jacobian(obs, theta, scale, acc)
    }
    fn has_envelope(&self) -> bool {
        (**self).has_envelope()
    }
    fn add_envelope(&self, obs: &Obs<'_, T>, scale: T, acc: &mut DMatrix<T>) -> bool {
        (**self).add_envelope(obs, scale, acc)
    }
    fn domain(&self) -> Option<&DomainBox<T>> {
        (**self).domain()
    }
    fn validate(&self, data: &Dataset<T>) -> Result<()> {
        (**self).validate(data)
    }
    fn rows(&self) -> RowFilter {
        (**self).rows()
    }
}

/// Ad hoc model from a closure; no Jacobian, no envelope.
pub struct FnModel<F> {
    dim: usize,
    f: F,
}

impl<F> FnModel<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<T: Scalar, F> EstimatingModel<T> for FnModel<F>
where
    F: Fn(&Obs<'_, T>, &[T], &mut [T]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn phi(&self, obs: &Obs<'_, T>, theta: &[T], out: &mut [T]) {
        (self.f)(obs, theta, out)
    }
}

/// Central-difference step per coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FdStep<T> {
    /// `h_k = max(1e-6, 1e-7 · (1 + |θ_k|))`.
    Default,
    Fixed(T),
}

impl<T: Scalar> FdStep<T> {
    #[inline]
    pub fn at(&self, theta_k: T) -> T {
        match *self {
            FdStep::Default => T::lit(1e-6).max(T::lit(1e-7) * (T::one() + theta_k.abs())),
            FdStep::Fixed(h) => h,
        }
    }
}

pub(crate) fn check_input<T: Scalar, M: EstimatingModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    theta: &[T],
) -> Result<()> {
    if data.n() == 0 {
        return Err(Error::EmptyData);
    }
    if theta.len() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: theta.len(),
            context: "parameter vector",
        });
    }
    model.validate(data)
}

/// Calls `f` for every row that passes the model's row filter.
pub(crate) fn for_each_row<'a, T: Scalar>(
    data: &'a Dataset<T>,
    filter: RowFilter,
    mut f: impl FnMut(Obs<'a, T>) -> Result<()>,
) -> Result<()> {
    match filter {
        RowFilter::All => {
            for i in 0..data.n() {
                f(data.obs(i))?;
            }
        }
        RowFilter::Label(k) => {
            for &i in data.rows_with_label(k) {
                f(data.obs(i))?;
            }
        }
    }
    Ok(())
}

/// `Φ_n(θ) = n⁻¹ Σ_i φ(X_i; θ)`.
pub fn evaluate_phi_bar<T: Scalar, M: EstimatingModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    theta: &[T],
) -> Result<DVector<T>> {
    check_input(model, data, theta)?;
    let p = model.dim();
    let mut sum = DVector::zeros(p);
    let mut buf = vec![T::zero(); p];
    for_each_row(data, model.rows(), |obs| {
        model.phi(&obs, theta, &mut buf);
        if buf.iter().any(|v| !v.is_finite_value()) {
            return Err(Error::NonFinite {
                what: "phi",
                row: obs.index,
            });
        }
        for (s, v) in sum.iter_mut().zip(&buf) {
            *s += *v;
        }
        Ok(())
    })?;
    Ok(sum / T::from_count(data.n()))
}

/// Per-row `φ_i(θ)` as the rows of an `n × dim` matrix.
pub fn evaluate_phi_rows<T: Scalar, M: EstimatingModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    theta: &[T],
) -> Result<DMatrix<T>> {
    check_input(model, data, theta)?;
    let p = model.dim();
    let mut out = DMatrix::zeros(data.n(), p);
    let mut buf = vec![T::zero(); p];
    for_each_row(data, model.rows(), |obs| {
        model.phi(&obs, theta, &mut buf);
        if buf.iter().any(|v| !v.is_finite_value()) {
            return Err(Error::NonFinite {
                what: "phi",
                row: obs.index,
            });
        }
        for (k, v) in buf.iter().enumerate() {
            out[(obs.index, k)] = *v;
        }
        Ok(())
    })?;
    Ok(out)
}

/// `Ĵ(θ) = n⁻¹ Σ_i ∇_θ φ(X_i; θ)`, analytic when available and central
/// differences otherwise.
pub fn evaluate_j_hat<T: Scalar, M: EstimatingModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    theta: &[T],
) -> Result<DMatrix<T>> {
    if model.has_jacobian() {
        analytic_j_hat(model, data, theta)
    } else {
        finite_difference_j_hat(model, data, theta, FdStep::Default)
    }
}

pub fn analytic_j_hat<T: Scalar, M: EstimatingModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    theta: &[T],
) -> Result<DMatrix<T>> {
    check_input(model, data, theta)?;
    if !model.has_jacobian() {
        return Err(Error::NotSupplied {
            capability: "analytic Jacobian",
        });
    }
    let mut acc = DMatrix::zeros(model.dim(), model.input_dim());
    let scale = T::one() / T::from_count(data.n());
    for_each_row(data, model.rows(), |obs| {
        if model.add_jacobian(&obs, theta, scale, &mut acc) {
            Ok(())
        } else {
            Err(Error::NotSupplied {
                capability: "analytic Jacobian",
            })
        }
    })?;
    if acc.iter().any(|v| !v.is_finite_value()) {
        return Err(Error::NonFiniteMatrix("Jacobian"));
    }
    Ok(acc)
}

/// Central differences of `Φ_n` column by column.
pub fn finite_difference_j_hat<T: Scalar, M: EstimatingModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    theta: &[T],
    step: FdStep<T>,
) -> Result<DMatrix<T>> {
    check_input(model, data, theta)?;
    let mut acc = DMatrix::zeros(model.dim(), model.input_dim());
    let mut probe = theta.to_vec();
    for l in 0..theta.len() {
        let h = step.at(theta[l]);
        probe[l] = theta[l] + h;
        let plus = evaluate_phi_bar(model, data, &probe)?;
        probe[l] = theta[l] - h;
        let minus = evaluate_phi_bar(model, data, &probe)?;
        probe[l] = theta[l];
        let col = (plus - minus) / (h + h);
        acc.set_column(l, &col);
    }
    if acc.iter().any(|v| !v.is_finite_value()) {
        return Err(Error::NonFiniteMatrix("finite-difference Jacobian"));
    }
    Ok(acc)
}

/// `‖Ĵ_analytic − Ĵ_fd‖_∞` (entrywise max) at `theta`.
pub fn jacobian_probe<T: Scalar, M: EstimatingModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    theta: &[T],
    step: FdStep<T>,
) -> Result<T> {
    let a = analytic_j_hat(model, data, theta)?;
    let f = finite_difference_j_hat(model, data, theta, step)?;
    Ok((a - f).iter().fold(T::zero(), |m, v| m.max(v.abs())))
}

/// `Î(θ) = n⁻¹ Σ_i (φ_i − φ̄)(φ_i − φ̄)ᵀ`, the population-style empirical covariance.
pub fn evaluate_i_hat<T: Scalar, M: EstimatingModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    theta: &[T],
) -> Result<DMatrix<T>> {
    if data.n() < 2 {
        return Err(Error::TooFewObservations {
            needed: 2,
            have: data.n(),
        });
    }
    let rows = evaluate_phi_rows(model, data, theta)?;
    let n = T::from_count(data.n());
    let mean = rows.row_mean();
    let mut centered = rows;
    for mut r in centered.row_iter_mut() {
        r -= &mean;
    }
    let mut cov = centered.transpose() * &centered / n;
    crate::linalg::symmetrize(&mut cov);
    Ok(cov)
}

/// `n⁻¹ Σ_i H(X_i)`.
pub fn envelope_mean<T: Scalar, M: EstimatingModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
) -> Result<DMatrix<T>> {
    if !model.has_envelope() {
        return Err(Error::NotSupplied {
            capability: "curvature envelope",
        });
    }
    if data.n() == 0 {
        return Err(Error::EmptyData);
    }
    model.validate(data)?;
    let p = model.dim();
    let mut acc = DMatrix::zeros(p, p);
    let scale = T::one() / T::from_count(data.n());
    for_each_row(data, model.rows(), |obs| {
        if model.add_envelope(&obs, scale, &mut acc) {
            Ok(())
        } else {
            Err(Error::NotSupplied {
                capability: "curvature envelope",
            })
        }
    })?;
    Ok(acc)
}
