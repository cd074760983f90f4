//! Independent dense-algebra oracles shared by the integration tests.
//!
//! Everything here is written from the textbook formulas with LU-based
//! inverses and determinants, so it shares no code path with the library's
//! Cholesky solver.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swgp::Hyperparameters;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    uniform(rng, lo.ln(), hi.ln()).exp()
}

pub fn se(a: f64, b: f64, sf: f64, l: f64) -> f64 {
    sf * sf * (-(a - b) * (a - b) / (2.0 * l * l)).exp()
}

pub fn dense_a(times: &[f64], hp: &Hyperparameters) -> DMatrix<f64> {
    let (sf, l, so) = (hp.sigma_f, hp.lengthscales[0], hp.sigma_on);
    let n = times.len();
    DMatrix::from_fn(n, n, |i, j| se(times[i], times[j], sf, l) + if i == j { so * so } else { 0.0 })
}

pub fn lu_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().lu().try_inverse().expect("invertible")
}

pub fn k_vec(t: f64, times: &[f64], hp: &Hyperparameters) -> DVector<f64> {
    DVector::from_iterator(times.len(), times.iter().map(|&s| se(t, s, hp.sigma_f, hp.lengthscales[0])))
}

pub fn dense_mean(times: &[f64], y: &[f64], hp: &Hyperparameters, t: f64) -> f64 {
    let inv = lu_inverse(&dense_a(times, hp));
    k_vec(t, times, hp).dot(&(inv * DVector::from_column_slice(y)))
}

pub fn dense_variance(times: &[f64], hp: &Hyperparameters, t: f64) -> f64 {
    let inv = lu_inverse(&dense_a(times, hp));
    let k = k_vec(t, times, hp);
    hp.sigma_f * hp.sigma_f - k.dot(&(inv * &k))
}

pub fn dense_nll(times: &[f64], y: &[f64], hp: &Hyperparameters) -> f64 {
    let a = dense_a(times, hp);
    let det = a.clone().lu().determinant();
    let y = DVector::from_column_slice(y);
    let n = times.len() as f64;
    0.5 * y.dot(&(lu_inverse(&a) * &y)) + 0.5 * det.ln() + 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// Sorted timestamps with random gaps in `[gap_lo, gap_hi)`.
/// Central difference of the dense NLL in component `j` of `θ`, using the
/// five-point stencil at step `1e-3·θ_j`. The two-point stencil at a tiny
/// step loses all digits to round-off when a component is ~1e-8 of the NLL.
#[allow(dead_code)]
pub fn nll_fd(times: &[f64], y: &[f64], hp: &Hyperparameters, j: usize) -> f64 {
    let theta = hp.to_vec();
    let h = 1e-3 * theta[j];
    let at = |s: f64| {
        let mut v = theta.clone();
        v[j] += s;
        dense_nll(times, y, &Hyperparameters::from_vec(&v).unwrap())
    };
    (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h)
}

pub fn random_times(rng: &mut ChaCha8Rng, n: usize, gap_lo: f64, gap_hi: f64) -> Vec<f64> {
    let mut t = uniform(rng, -1.0, 1.0);
    (0..n)
        .map(|_| {
            t += uniform(rng, gap_lo, gap_hi);
            t
        })
        .collect()
}

/// Sum of a few random sinusoids; smooth with a known Lipschitz constant.
#[derive(Debug, Clone)]
pub struct SmoothSignal {
    terms: Vec<(f64, f64, f64)>,
    offset: f64,
}

impl SmoothSignal {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let count = rng.random_range(1..=4);
        let terms =
            (0..count).map(|_| (uniform(rng, -1.5, 1.5), uniform(rng, 0.1, 8.0), uniform(rng, 0.0, 6.3))).collect();
        Self { terms, offset: uniform(rng, -1.0, 1.0) }
    }

    pub fn at(&self, t: f64) -> f64 {
        self.offset + self.terms.iter().map(|(a, w, p)| a * (w * t + p).sin()).sum::<f64>()
    }

    pub fn lipschitz(&self) -> f64 {
        self.terms.iter().map(|(a, w, _)| a.abs() * w).sum()
    }
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}
