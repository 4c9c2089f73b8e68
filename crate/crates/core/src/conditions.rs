//! Sample versions of the checkable regularity quantities: `σ_n`, `η_n`, the
//! incoherence constant `α`, the off-support λ thresholds, the curvature
//! envelope and the uniqueness margin `2c − μ`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{self, submatrix};
use crate::model::{envelope_mean, evaluate_j_hat, evaluate_phi_rows, EstimatingModel};
use crate::penalty::{Penalty, PenaltyKind};
use crate::scalar::Scalar;

/// One named pass/fail verdict with its numeric margin (positive = passing).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport<T> {
    pub n: usize,
    pub p: usize,
    pub support: Vec<usize>,
    pub sigma_n: T,
    pub eta_n: T,
    pub alpha: T,
    /// `4/(1−α)·J_{n,k}·η_n` for `k ∉ S`, in complement order.
    pub lambda_thresholds: Vec<T>,
    pub complement: Vec<usize>,
    pub j_nk: Vec<T>,
    /// `None` when the model has no curvature envelope.
    pub envelope_max_eig: Option<T>,
    pub mu: T,
    pub uniqueness_margin: Option<T>,
    pub grid_points: usize,
    pub verdicts: Vec<Check>,
    pub warnings: Vec<String>,
}

impl<T> ConditionReport<T> {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|c| c.pass)
    }

    pub fn verdict(&self, name: &str) -> Option<&Check> {
        self.verdicts.iter().find(|c| c.name == name)
    }
}

/// `σ_n = max_k (n⁻¹ Σ_i φ_i(θ★)_k²)^{1/2}` and `η_n = 2σ_n (ln p / n)^{1/2}`.
pub fn sigma_eta<T: Scalar, M: EstimatingModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    theta_star: &[T],
) -> Result<(T, T)> {
    if data.n() < 2 {
        return Err(Error::TooFewObservations {
            needed: 2,
            have: data.n(),
        });
    }
    let rows = evaluate_phi_rows(model, data, theta_star)?;
    let n = T::from_count(data.n());
    let sigma = (0..rows.ncols())
        .map(|k| (rows.column(k).norm_squared() / n).sqrt())
        .fold(T::zero(), |m, v| m.max(v));
    let lnp = T::from_count(model.dim()).ln();
    let eta = T::lit(2.0) * sigma * (lnp / n).sqrt();
    Ok((sigma, eta))
}

fn complement_of(p: usize, support: &[usize]) -> Result<Vec<usize>> {
    let mut in_s = vec![false; p];
    for &k in support {
        if k >= p || in_s[k] {
            return Err(Error::InvalidArgument(format!("support index {k} repeated or out of range")));
        }
        in_s[k] = true;
    }
    Ok((0..p).filter(|k| !in_s[*k]).collect())
}

/// `Ĵ(θ)_{(2,1)} Ĵ(θ)_{(1)}⁻¹`, rows indexed by the complement.
fn projection<T: Scalar, M: EstimatingModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    theta: &[T],
    support: &[usize],
    complement: &[usize],
) -> Result<DMatrix<T>> {
    let j = evaluate_j_hat(model, data, theta)?;
    let j11 = submatrix(&j, support, support);
    let inv = linalg::guarded_inverse(&j11, "restricted Jacobian J_(1)")?;
    Ok(submatrix(&j, complement, support) * inv)
}

fn sign_free<T: Scalar>(pen: &Penalty<T>) -> bool {
    match pen.kind() {
        PenaltyKind::Lasso => true,
        PenaltyKind::Lq { q } => *q == T::one(),
        _ => false,
    }
}

/// `max_{θ, θ̃ ∈ grid} ‖diag(λ_(2))⁻¹ Ĵ(θ)_{(2,1)} Ĵ(θ)_{(1)}⁻¹ p′_λ(θ̃)_{(1)}‖_∞`.
///
/// For the lasso the sign pattern of `θ̃_(1)` is free, so the sup over it is
/// taken in closed form: `max_k Σ_j |M_kj| λ_j / λ_k`, which for a scalar λ
/// is the row-sum norm of `Ĵ_{(2,1)} Ĵ_{(1)}⁻¹`.
pub fn incoherence_alpha<T: Scalar, M: EstimatingModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    pen: &Penalty<T>,
    support: &[usize],
    grid: &[Vec<T>],
) -> Result<T> {
    let p = model.dim();
    if pen.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: pen.dim(),
            context: "penalty dimension",
        });
    }
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    let complement = complement_of(p, support)?;
    if complement.is_empty() || support.is_empty() {
        return Ok(T::zero());
    }
    for &k in &complement {
        if !(pen.zero_box_halfwidth(k) > T::zero()) {
            return Err(Error::ZeroLambda(k));
        }
    }
    let lam2: Vec<T> = complement.iter().map(|&k| pen.zero_box_halfwidth(k)).collect();
    let derivs: Vec<DVector<T>> = if sign_free(pen) {
        vec![DVector::from_iterator(support.len(), support.iter().map(|&k| pen.lambda()[k]))]
    } else {
        grid.iter()
            .map(|t| {
                let d = pen.derivative(t)?;
                Ok(DVector::from_iterator(support.len(), support.iter().map(|&k| d[k])))
            })
            .collect::<Result<_>>()?
    };
    let mut alpha = T::zero();
    for theta in grid {
        let m = projection(model, data, theta, support, &complement)?;
        for d in &derivs {
            let v = if sign_free(pen) {
                m.abs() * d
            } else {
                &m * d
            };
            for (r, l) in v.iter().zip(&lam2) {
                alpha = alpha.max(r.abs() / *l);
            }
        }
    }
    Ok(alpha)
}

/// `J_{n,k} = max{1, max_{θ ∈ grid} ‖(Ĵ_{k,(1)} Ĵ_{(1)}⁻¹)ᵀ‖₁}` for `k ∉ S`.
pub fn j_nk<T: Scalar, M: EstimatingModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    support: &[usize],
    grid: &[Vec<T>],
) -> Result<Vec<T>> {
    let complement = complement_of(model.dim(), support)?;
    let mut out = vec![T::one(); complement.len()];
    if support.is_empty() {
        return Ok(out);
    }
    for theta in grid {
        let m = projection(model, data, theta, support, &complement)?;
        for (i, o) in out.iter_mut().enumerate() {
            let l1 = m.row(i).iter().fold(T::zero(), |s, v| s + v.abs());
            *o = o.max(l1);
        }
    }
    Ok(out)
}

/// `4/(1−α)·J_{n,k}·η_n` per entry of `j_nk`.
pub fn lambda_threshold<T: Scalar>(alpha: T, eta_n: T, j_nk: &[T]) -> Result<Vec<T>> {
    if !(alpha >= T::zero()) {
        return Err(Error::InvalidArgument("alpha must be nonnegative".into()));
    }
    if alpha >= T::one() {
        return Err(Error::IncoherenceViolated(alpha.as_f64()));
    }
    let f = T::lit(4.0) / (T::one() - alpha) * eta_n;
    Ok(j_nk.iter().map(|j| f * *j).collect())
}

/// Largest eigenvalue of `n⁻¹ Σ_i H(X_i)`.
pub fn envelope_max_eig<T: Scalar, M: EstimatingModel<T> + ?Sized>(model: &M, data: &Dataset<T>) -> Result<T> {
    let h = envelope_mean(model, data)?;
    Ok(linalg::sym_eigenvalues(&h).last().copied().unwrap_or_else(T::zero))
}

/// `2ĉ − μ`; positive means the uniqueness regime.
pub fn uniqueness_margin<T: Scalar>(c_hat: T, pen: &Penalty<T>) -> Result<T> {
    Ok(c_hat + c_hat - pen.weak_convexity_mu()?)
}

/// Five points on the segment from `θ̂` to `θ̂ + r·u`, `u` the normalized
/// indicator of the support (so every point keeps `θ_(2) = 0`).
pub fn default_grid<T: Scalar>(theta_hat: &[T], support: &[usize], radius: T) -> Vec<Vec<T>> {
    const POINTS: usize = 5;
    let s = support.len().max(1);
    let step = radius / T::from_count(s).sqrt();
    (0..POINTS)
        .map(|i| {
            let t = T::from_count(i) / T::from_count(POINTS - 1);
            let mut th = theta_hat.to_vec();
            for &k in support {
                th[k] += t * step;
            }
            th
        })
        .collect()
}

/// Evaluates every checker and collects verdicts.
///
/// `theta_star` anchors `σ_n`; `grid` drives `α` and `J_{n,k}`. Entries of
/// `eta_override` below the lower bound are ignored with a warning.
pub fn condition_report<T: Scalar, M: EstimatingModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    pen: &Penalty<T>,
    support: &[usize],
    theta_star: &[T],
    grid: &[Vec<T>],
    eta_override: Option<T>,
) -> Result<ConditionReport<T>> {
    let p = model.dim();
    let complement = complement_of(p, support)?;
    let mut warnings = Vec::new();
    let mut verdicts = Vec::new();
    let (sigma_n, eta_min) = sigma_eta(model, data, theta_star)?;
    if p == 1 {
        warnings.push("p = 1: ln p = 0, so eta_n and the thresholds degenerate to 0".to_string());
    }
    let eta_n = match eta_override {
        Some(e) if e >= eta_min => e,
        Some(_) => {
            warnings.push("eta override below 2 sigma_n sqrt(ln p / n); using the lower bound".to_string());
            eta_min
        }
        None => eta_min,
    };
    warnings.push(format!(
        "sup over the neighbourhood replaced by {} grid points (heuristic)",
        grid.len()
    ));

    let alpha = incoherence_alpha(model, data, pen, support, grid)?;
    verdicts.push(Check {
        name: "incoherence",
        pass: alpha < T::one(),
        margin: (T::one() - alpha).as_f64(),
    });
    let j = j_nk(model, data, support, grid)?;
    let lambda_thresholds = match lambda_threshold(alpha, eta_n, &j) {
        Ok(t) => {
            let margin = complement
                .iter()
                .zip(&t)
                .map(|(&k, th)| (pen.zero_box_halfwidth(k) - *th).as_f64())
                .fold(f64::INFINITY, f64::min);
            verdicts.push(Check {
                name: "lambda_threshold",
                pass: margin >= 0.0,
                margin: if margin.is_finite() { margin } else { 0.0 },
            });
            t
        }
        Err(Error::IncoherenceViolated(_)) => {
            warnings.push("alpha >= 1: lambda thresholds undefined".to_string());
            verdicts.push(Check {
                name: "lambda_threshold",
                pass: false,
                margin: f64::NEG_INFINITY,
            });
            vec![T::infinity(); complement.len()]
        }
        Err(e) => return Err(e),
    };

    let mu = pen.weak_convexity_mu()?;
    let (envelope_max, margin_u) = match envelope_max_eig(model, data) {
        Ok(e) => {
            verdicts.push(Check {
                name: "envelope_curvature",
                pass: e < T::zero(),
                margin: (-e).as_f64(),
            });
            let c_hat = -e;
            let u = uniqueness_margin(c_hat, pen)?;
            verdicts.push(Check {
                name: "uniqueness",
                pass: c_hat > T::zero() && u > T::zero(),
                margin: u.as_f64(),
            });
            (Some(e), Some(u))
        }
        Err(Error::NotSupplied { .. }) => {
            warnings.push("curvature envelope not supplied".to_string());
            (None, None)
        }
        Err(e) => return Err(e),
    };

    Ok(ConditionReport {
        n: data.n(),
        p,
        support: support.to_vec(),
        sigma_n,
        eta_n,
        alpha,
        lambda_thresholds,
        complement,
        j_nk: j,
        envelope_max_eig: envelope_max,
        mu,
        uniqueness_margin: margin_u,
        grid_points: grid.len(),
        verdicts,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::LocationModel;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mean_model_sigma_eta() {
        let d = Dataset::from_values(&[1.0, 3.0]).unwrap();
        let (s, e) = sigma_eta(&LocationModel::mean(), &d, &[2.0]).unwrap();
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-15);
        assert_eq!(e, 0.0);
    }

    #[test]
    fn thresholds() {
        let t = lambda_threshold(0.0, 0.1, &[1.0]).unwrap();
        assert_abs_diff_eq!(t[0], 0.4, epsilon = 1e-15);
        let t = lambda_threshold(0.5, 0.1, &[1.0]).unwrap();
        assert_abs_diff_eq!(t[0], 0.8, epsilon = 1e-15);
        assert!(matches!(lambda_threshold(1.0, 0.1, &[1.0]), Err(Error::IncoherenceViolated(_))));
    }

    #[test]
    fn margins() {
        let lasso = Penalty::lasso(vec![0.1]).unwrap();
        assert_abs_diff_eq!(uniqueness_margin(0.5, &lasso).unwrap(), 1.0, epsilon = 1e-15);
        let scad = Penalty::scad(vec![0.1], 3.7).unwrap();
        assert_abs_diff_eq!(
            uniqueness_margin(0.1, &scad).unwrap(),
            0.2 - 1.0 / 2.7,
            epsilon = 1e-12
        );
    }

    #[test]
    fn grid_keeps_complement_zero() {
        let g = default_grid(&[1.0f64, 0.0, 2.0], &[0, 2], 0.5);
        assert_eq!(g.len(), 5);
        assert_eq!(g[0], vec![1.0, 0.0, 2.0]);
        assert!(g.iter().all(|t| t[1] == 0.0));
        let d = (g[4][0] - 1.0).powi(2) + (g[4][2] - 2.0).powi(2);
        assert_abs_diff_eq!(d.sqrt(), 0.5, epsilon = 1e-12);
    }
}
