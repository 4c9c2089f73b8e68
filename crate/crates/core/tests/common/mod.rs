#![allow(dead_code)]

use esteq::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..p).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

/// `y = Xθ + σ ε`.
pub fn linear_data(seed: u64, n: usize, theta: &[f64], noise: f64) -> Dataset<f64> {
    let mut r = rng(seed);
    let x = gaussian_design(&mut r, n, theta.len());
    let y: Vec<f64> = x
        .iter()
        .map(|row| {
            let e: f64 = StandardNormal.sample(&mut r);
            row.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>() + noise * e
        })
        .collect();
    Dataset::from_rows(vec![], x).unwrap().with_response("y", y).unwrap()
}

pub fn logistic_data(seed: u64, n: usize, theta: &[f64]) -> Dataset<f64> {
    let mut r = rng(seed);
    let x = gaussian_design(&mut r, n, theta.len());
    let y: Vec<f64> = x
        .iter()
        .map(|row| {
            let eta: f64 = row.iter().zip(theta).map(|(a, b)| a * b).sum();
            let pr = 1.0 / (1.0 + (-eta).exp());
            if r.random::<f64>() < pr {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Dataset::from_rows(vec![], x).unwrap().with_response("y", y).unwrap()
}

/// Ordinary least squares by normal equations (independent of the solver).
pub fn ols(data: &Dataset<f64>) -> Vec<f64> {
    let p = data.arity();
    let n = data.n();
    let x = nalgebra::DMatrix::from_fn(n, p, |i, j| data.row(i)[j]);
    let y = nalgebra::DVector::from_column_slice(data.response().unwrap());
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * y;
    xtx.cholesky().unwrap().solve(&xty).iter().copied().collect()
}

/// Rows `[t, 1, z₁, c₁]`, `t ~ Bernoulli(σ(wᵀθ₁))`, `y = 1 + c₁ + t·(τ₀ + τ₁ z₁) + ε`.
pub fn cate_data(seed: u64, n: usize, theta1: &[f64; 3], tau: &[f64; 2]) -> Dataset<f64> {
    let mut r = rng(seed);
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let z1: f64 = StandardNormal.sample(&mut r);
        let c1: f64 = StandardNormal.sample(&mut r);
        let eta = theta1[0] + theta1[1] * z1 + theta1[2] * c1;
        let pr = 1.0 / (1.0 + (-eta).exp());
        let t = if r.random::<f64>() < pr { 1.0 } else { 0.0 };
        let e: f64 = StandardNormal.sample(&mut r);
        y.push(1.0 + c1 + t * (tau[0] + tau[1] * z1) + 0.5 * e);
        rows.push(vec![t, 1.0, z1, c1]);
    }
    Dataset::from_rows(vec![], rows).unwrap().with_response("y", y).unwrap()
}

/// `K` labelled samples, sample `k` drawn as `N(means[k], sd²)`.
pub fn labelled_normal(seed: u64, means: &[f64], per: usize, sd: f64) -> Dataset<f64> {
    let mut r = rng(seed);
    let mut v = Vec::new();
    let mut labels = Vec::new();
    for (k, m) in means.iter().enumerate() {
        for _ in 0..per {
            let e: f64 = StandardNormal.sample(&mut r);
            v.push(m + sd * e);
            labels.push(k + 1);
        }
    }
    Dataset::from_values(&v).unwrap().with_labels(labels).unwrap()
}
