//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Condition numbers above this are treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

pub fn symmetrize<T: Scalar>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    let half = T::lit(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// 2-norm condition number from singular values; infinite when singular.
pub fn condition_number<T: Scalar>(m: &DMatrix<T>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().fold(T::zero(), |a, v| a.max(*v));
    let min = sv.iter().fold(T::infinity(), |a, v| a.min(*v));
    if min <= T::zero() {
        f64::INFINITY
    } else {
        (max / min).as_f64()
    }
}

/// Inverse with a condition-number guard.
pub fn guarded_inverse<T: Scalar>(m: &DMatrix<T>, context: &'static str) -> Result<DMatrix<T>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
            context,
        });
    }
    if m.is_empty() {
        return Ok(m.clone());
    }
    let cond = condition_number(m);
    if !(cond <= CONDITION_LIMIT) {
        return Err(Error::Singular {
            context,
            condition: cond,
        });
    }
    m.clone().lu().try_inverse().ok_or(Error::Singular {
        context,
        condition: cond,
    })
}

/// Solves `m x = b` with the same guard as [`guarded_inverse`].
pub fn guarded_solve<T: Scalar>(m: &DMatrix<T>, b: &DVector<T>, context: &'static str) -> Result<DVector<T>> {
    let cond = condition_number(m);
    if !(cond <= CONDITION_LIMIT) {
        return Err(Error::Singular {
            context,
            condition: cond,
        });
    }
    m.clone().lu().solve(b).ok_or(Error::Singular {
        context,
        condition: cond,
    })
}

/// Eigenvalues of the symmetric part, ascending.
pub fn sym_eigenvalues<T: Scalar>(m: &DMatrix<T>) -> Vec<T> {
    let mut s = m.clone();
    symmetrize(&mut s);
    let mut ev: Vec<T> = s.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

pub fn max_abs<T: Scalar>(v: impl IntoIterator<Item = T>) -> T {
    v.into_iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// Rows/columns picked out by index lists.
pub fn submatrix<T: Scalar>(m: &DMatrix<T>, rows: &[usize], cols: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn subvector<T: Scalar>(v: &DVector<T>, idx: &[usize]) -> DVector<T> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singular_is_rejected_with_condition() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        match guarded_inverse(&m, "test") {
            Err(Error::Singular { condition, .. }) => assert!(condition > CONDITION_LIMIT),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inverse_roundtrip() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let inv = guarded_inverse(&m, "test").unwrap();
        let id = &m * inv;
        assert!((id - DMatrix::identity(2, 2)).abs().max() < 1e-14);
    }

    #[test]
    fn eigenvalues_sorted() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, -1.0]);
        assert_eq!(sym_eigenvalues(&m), vec![-1.0, 2.0]);
    }
}
