//! Sandwich covariance, standardized statistics and normal confidence
//! intervals, with the bias-corrected version for penalized solutions.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{self, submatrix, subvector};
use crate::model::{evaluate_i_hat, evaluate_j_hat, EstimatingModel};
use crate::penalty::Penalty;
use crate::scalar::Scalar;
use crate::stats::normal_quantile;

/// `A J⁻¹ I J⁻ᵀ Aᵀ`, symmetrized.
pub fn sandwich_covariance<T: Scalar>(j: &DMatrix<T>, i: &DMatrix<T>, a: &DMatrix<T>) -> Result<DMatrix<T>> {
    let p = j.nrows();
    if i.shape() != (p, p) || a.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: a.ncols(),
            context: "sandwich dimensions",
        });
    }
    let jinv = linalg::guarded_inverse(j, "Jacobian in sandwich covariance")?;
    let b = a * jinv;
    let mut cov = &b * i * b.transpose();
    linalg::symmetrize(&mut cov);
    Ok(cov)
}

/// `√n A J (θ̂ − θ★)`.
pub fn standardize<T: Scalar>(
    theta_hat: &[T],
    theta_star: &[T],
    j: &DMatrix<T>,
    a: &DMatrix<T>,
    n: usize,
) -> Result<DVector<T>> {
    standardize_penalized(theta_hat, theta_star, j, None, a, n)
}

/// `√n A [J_(1)(θ̂_(1) − θ★_(1)) − p′_λ(θ★)_(1)]`; `bias = None` means zero.
pub fn standardize_penalized<T: Scalar>(
    theta_hat: &[T],
    theta_star: &[T],
    j: &DMatrix<T>,
    bias: Option<&[T]>,
    a: &DMatrix<T>,
    n: usize,
) -> Result<DVector<T>> {
    let s = theta_hat.len();
    let bad = |got| Error::DimensionMismatch {
        expected: s,
        got,
        context: "standardized statistic",
    };
    if theta_star.len() != s {
        return Err(bad(theta_star.len()));
    }
    if j.shape() != (s, s) {
        return Err(bad(j.nrows()));
    }
    if a.ncols() != s {
        return Err(bad(a.ncols()));
    }
    let diff = DVector::from_iterator(s, theta_hat.iter().zip(theta_star).map(|(h, t)| *h - *t));
    let mut v = j * diff;
    if let Some(b) = bias {
        if b.len() != s {
            return Err(bad(b.len()));
        }
        for (x, bb) in v.iter_mut().zip(b) {
            *x -= *bb;
        }
    }
    Ok(a * v * T::from_count(n).sqrt())
}

/// Normal interval around each center: `c_k ± z_{1−γ/2} se_k / √n`.
pub fn confidence_intervals<T: Scalar>(center: &[T], se: &[T], n: usize, level: T) -> Result<Vec<(T, T)>> {
    if !(level > T::zero() && level < T::one()) {
        return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {}", level.as_f64())));
    }
    if center.len() != se.len() {
        return Err(Error::DimensionMismatch {
            expected: center.len(),
            got: se.len(),
            context: "confidence intervals",
        });
    }
    let z = T::lit(normal_quantile(0.5 + level.as_f64() / 2.0));
    let rn = T::from_count(n).sqrt();
    Ok(center
        .iter()
        .zip(se)
        .map(|(c, s)| {
            let h = z * *s / rn;
            (*c - h, *c + h)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceReport<T> {
    pub n: usize,
    /// Coordinates the report is about (all of them when unpenalized).
    pub support: Vec<usize>,
    pub j_hat: Vec<Vec<T>>,
    pub i_hat: Vec<Vec<T>>,
    pub a: Vec<Vec<T>>,
    /// `A Ĵ⁻¹ Î Ĵ⁻ᵀ Aᵀ` on the `√n` scale.
    pub covariance: Vec<Vec<T>>,
    pub estimate: Vec<T>,
    /// `Aθ̂` unpenalized, `A(θ̂_(1) − Ĵ_(1)⁻¹ p′_λ(θ̂)_(1))` penalized.
    pub center: Vec<T>,
    pub standard_errors: Vec<T>,
    pub level: T,
    pub intervals: Vec<(T, T)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias: Option<Vec<T>>,
    pub caveats: Vec<String>,
}

fn rows_of<T: Scalar>(m: &DMatrix<T>) -> Vec<Vec<T>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Plug-in inference at `θ̂`.
///
/// With a penalty the report covers the support of `θ̂` and recenters by
/// the penalty derivative; `a` (default identity) has one column per
/// covered coordinate.
pub fn infer<T: Scalar, M: EstimatingModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    theta_hat: &[T],
    pen: Option<&Penalty<T>>,
    a: Option<DMatrix<T>>,
    level: T,
) -> Result<InferenceReport<T>> {
    let p = model.dim();
    let j = evaluate_j_hat(model, data, theta_hat)?;
    let i = evaluate_i_hat(model, data, theta_hat)?;
    let mut caveats = vec!["J and I are plug-in estimates at theta_hat".to_string()];
    let penalized = pen.filter(|p| !p.is_zero());
    let support: Vec<usize> = match penalized {
        Some(_) => (0..p).filter(|&k| theta_hat[k] != T::zero()).collect(),
        None => (0..p).collect(),
    };
    let s = support.len();
    let j1 = submatrix(&j, &support, &support);
    let i1 = submatrix(&i, &support, &support);
    let a = a.unwrap_or_else(|| DMatrix::identity(s, s));
    let cov = sandwich_covariance(&j1, &i1, &a)?;
    let est = subvector(&DVector::from_column_slice(theta_hat), &support);
    let (center, bias) = match penalized {
        Some(pen) => {
            caveats.push("bias term p'(theta_hat) stands in for p'(theta_star)".to_string());
            let d = pen.derivative(theta_hat)?;
            let b = subvector(&d, &support);
            let jinv = linalg::guarded_inverse(&j1, "restricted Jacobian J_(1)")?;
            (&a * (&est - jinv * &b), Some(b.iter().copied().collect()))
        }
        None => (&a * &est, None),
    };
    let se: Vec<T> = cov.diagonal().iter().map(|v| v.max(T::zero()).sqrt()).collect();
    let center: Vec<T> = center.iter().copied().collect();
    let intervals = confidence_intervals(&center, &se, data.n(), level)?;
    Ok(InferenceReport {
        n: data.n(),
        support,
        j_hat: rows_of(&j1),
        i_hat: rows_of(&i1),
        a: rows_of(&a),
        covariance: rows_of(&cov),
        estimate: est.iter().copied().collect(),
        center,
        standard_errors: se,
        level,
        intervals,
        bias,
        caveats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn trivial_sandwich() {
        let j = -DMatrix::<f64>::identity(3, 3);
        let c = sandwich_covariance(&j, &DMatrix::identity(3, 3), &DMatrix::identity(3, 3)).unwrap();
        assert_eq!(c, DMatrix::identity(3, 3));
        let c = sandwich_covariance(&DMatrix::from_element(1, 1, -1.0), &DMatrix::from_element(1, 1, 2.5), &DMatrix::identity(1, 1)).unwrap();
        assert_abs_diff_eq!(c[(0, 0)], 2.5);
    }

    #[test]
    fn standardize_mean() {
        let v = standardize(&[1.5], &[1.0], &DMatrix::from_element(1, 1, -1.0), &DMatrix::identity(1, 1), 4).unwrap();
        assert_abs_diff_eq!(v[0], -1.0);
        let z = standardize(&[1.0], &[1.0], &DMatrix::from_element(1, 1, -1.0), &DMatrix::identity(1, 1), 4).unwrap();
        assert_eq!(z[0], 0.0);
    }

    #[test]
    fn interval_width() {
        let ci = confidence_intervals(&[0.0], &[1.0], 100, 0.95).unwrap();
        assert_abs_diff_eq!(ci[0].1, 0.195_996_398_454, epsilon = 1e-9);
        let wider = confidence_intervals(&[0.0], &[1.0], 100, 0.99).unwrap();
        assert!(wider[0].1 > ci[0].1);
        assert!(confidence_intervals(&[0.0], &[1.0], 100, 1.0).is_err());
    }

    #[test]
    fn singular_jacobian() {
        let j = DMatrix::<f64>::zeros(2, 2);
        assert!(matches!(
            sandwich_covariance(&j, &DMatrix::identity(2, 2), &DMatrix::identity(2, 2)),
            Err(Error::Singular { .. })
        ));
    }
}
