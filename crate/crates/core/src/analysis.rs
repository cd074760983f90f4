//! Exact error analysis of a single scalar window.
//!
//! For a window `t_1 < … < t_N̄` with measurements `y_n = x_n + ε_n`, let
//! `μ_n`, `σ²_n` be the posterior of the GP trained on the first `n` pairs
//! (`μ_0 ≡ 0`, `σ²_0 ≡ σ_f²`). With
//!
//! ```text
//! η_n  = σ²_{n−1}(t_n) / (σ²_{n−1}(t_n) + σ_on²)
//! ν_n  = Π_{i=n+1..N̄} −σ_on² / (σ²_{i−1}(t_i) + σ_on²)      (ν_N̄ = 1)
//! Δ_n  = x_{n+1} − x_n + μ_n(t_n) − μ_n(t_{n+1})
//! Δ(t) = x(t) − x_N̄ + μ_N̄(t_N̄) − μ_N̄(t)
//! ```
//!
//! the estimation error is exactly
//!
//! ```text
//! μ_N̄(t) − x(t) = −Δ(t) − |ν_0| x_1 − Σ_{n<N̄} |ν_n| Δ_n + Σ_n |ν_n| η_n ε_n
//! ```
//!
//! which follows from the one-step update
//! `μ_j(t_j) = μ_{j−1}(t_j) + η_j (y_j − μ_{j−1}(t_j))`. The attenuation
//! weights enter through their magnitudes; the sign of `ν_n` only records the
//! parity of the product.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::gp::GpPosterior;
use crate::kernel::{Hyperparameters, Inputs};

/// Smallest admissible denominator `σ²_{N−1}(t) + σ_on²` in
/// [`block_inverse_update`].
pub const MIN_DENOMINATOR: f64 = 1e-14;

/// Inverse of `A_N = [[A_{N−1}, k], [kᵀ, k_self + σ_on²]]` from `A_{N−1}⁻¹`.
///
/// `a_inv_prev` may be `0×0`, which yields the `1×1` inverse. The caller is
/// responsible for `a_inv_prev` being an accurate inverse.
pub fn block_inverse_update(
    a_inv_prev: &DMatrix<f64>,
    k_vec: &DVector<f64>,
    k_self: f64,
    sigma_on: f64,
) -> Result<DMatrix<f64>> {
    let n = a_inv_prev.nrows();
    check_dim(n, a_inv_prev.ncols())?;
    check_dim(n, k_vec.len())?;
    let a = a_inv_prev * k_vec;
    let denom = k_self - k_vec.dot(&a) + sigma_on * sigma_on;
    if !(denom >= MIN_DENOMINATOR) {
        return Err(Error::NearSingular(denom));
    }
    let mut out = DMatrix::zeros(n + 1, n + 1);
    out.view_mut((0, 0), (n, n)).copy_from(a_inv_prev);
    let mut u = DVector::zeros(n + 1);
    u.rows_mut(0, n).copy_from(&a);
    u[n] = -1.0;
    out.ger(1.0 / denom, &u, &u, 1.0);
    Ok(out)
}

/// Noise pass-through factors and attenuation products of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaNu {
    /// `η_1 … η_N̄`.
    pub etas: Vec<f64>,
    /// `ν_0 … ν_N̄` with the sign of the product of negative factors.
    pub nus: Vec<f64>,
    /// `σ²_{n−1}(t_n)` for `n = 1 … N̄`.
    pub variances: Vec<f64>,
}

/// Posteriors trained on the first `1, 2, …, N̄` pairs.
fn nested_posteriors(times: &[f64], targets: &[f64], hp: &Hyperparameters) -> Result<Vec<GpPosterior>> {
    (1..=times.len()).map(|n| GpPosterior::fit(Inputs::scalar(&times[..n]), &targets[..n], hp)).collect()
}

fn eta_nu_from(times: &[f64], posts: &[GpPosterior], hp: &Hyperparameters) -> Result<EtaNu> {
    let n = times.len();
    let noise = hp.noise_variance();
    let mut variances = Vec::with_capacity(n);
    variances.push(hp.signal_variance());
    for i in 1..n {
        variances.push(posts[i - 1].predict_variance(&[times[i]])?);
    }
    let etas = variances.iter().map(|&s| s / (s + noise)).collect();
    let mut nus = vec![0.0; n + 1];
    nus[n] = 1.0;
    for i in (1..=n).rev() {
        nus[i - 1] = nus[i] * (-noise / (variances[i - 1] + noise));
    }
    Ok(EtaNu { etas, nus, variances })
}

pub fn eta_nu_sequences(times: &[f64], hp: &Hyperparameters) -> Result<EtaNu> {
    if times.is_empty() {
        return Err(Error::Empty("window"));
    }
    let zeros = vec![0.0; times.len()];
    // predictive variances do not depend on the targets
    let posts = nested_posteriors(&times[..times.len() - 1], &zeros[..times.len() - 1], hp)?;
    eta_nu_from(times, &posts, hp)
}

/// The four additive contributions to `μ_N̄(t) − x(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorDecomposition {
    /// `−Δ(t)`: extrapolation from the newest sample to `t`.
    pub delta_t: f64,
    /// `−|ν_0| x_1`: shrinkage toward the zero prior mean.
    pub prior_attenuation: f64,
    /// `−Σ |ν_n| Δ_n`: signal variation across the window.
    pub signal_variation: f64,
    /// `Σ |ν_n| η_n ε_n`: measurement noise that is passed through.
    pub noise_passthrough: f64,
    pub etas: Vec<f64>,
    pub nus: Vec<f64>,
    /// `Δ_1 … Δ_{N̄−1}`.
    pub signal_deltas: Vec<f64>,
    /// `Δ(t)`.
    pub prediction_delta: f64,
}

impl ErrorDecomposition {
    pub fn total(&self) -> f64 {
        self.delta_t + self.prior_attenuation + self.signal_variation + self.noise_passthrough
    }
}

/// Decomposes the estimation error at time `t` for a window with known
/// noise-free values `truth` and noise realisations `noise`.
///
/// `truth_at_t` is the noise-free signal at `t`; it equals the last entry of
/// `truth` when `t` is the newest sampling instant.
pub fn error_decomposition(
    times: &[f64],
    truth: &[f64],
    noise: &[f64],
    hp: &Hyperparameters,
    t: f64,
    truth_at_t: f64,
) -> Result<ErrorDecomposition> {
    let n = times.len();
    if n == 0 {
        return Err(Error::Empty("window"));
    }
    check_dim(n, truth.len())?;
    check_dim(n, noise.len())?;
    let targets: Vec<f64> = truth.iter().zip(noise).map(|(x, e)| x + e).collect();
    let posts = nested_posteriors(times, &targets, hp)?;
    let EtaNu { etas, nus, .. } = eta_nu_from(times, &posts, hp)?;

    let mut signal_deltas = Vec::with_capacity(n.saturating_sub(1));
    for i in 0..n - 1 {
        let mu = &posts[i];
        signal_deltas.push(truth[i + 1] - truth[i] + mu.predict_mean(&[times[i]])? - mu.predict_mean(&[times[i + 1]])?);
    }
    let last = &posts[n - 1];
    let prediction_delta = truth_at_t - truth[n - 1] + last.predict_mean(&[times[n - 1]])? - last.predict_mean(&[t])?;

    let signal_variation: f64 = -signal_deltas.iter().zip(&nus[1..n]).map(|(d, nu)| nu.abs() * d).sum::<f64>();
    let noise_passthrough: f64 = (0..n).map(|i| nus[i + 1].abs() * etas[i] * noise[i]).sum();

    Ok(ErrorDecomposition {
        delta_t: -prediction_delta,
        prior_attenuation: -nus[0].abs() * truth[0],
        signal_variation,
        noise_passthrough,
        etas,
        nus,
        signal_deltas,
        prediction_delta,
    })
}

/// `μ_N̄(t) − x(t)` from a single fit on the whole window.
pub fn direct_error(times: &[f64], targets: &[f64], hp: &Hyperparameters, t: f64, truth_at_t: f64) -> Result<f64> {
    let gp = GpPosterior::fit(Inputs::scalar(times), targets, hp)?;
    Ok(gp.predict_mean(&[t])? - truth_at_t)
}

/// Worst-case bound `c(t)` on `|μ_N̄(t) − x(t)|` under bounded noise.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformBound {
    pub value: f64,
    /// Estimated Lipschitz constants of `μ_1 … μ_N̄`.
    pub lip_mu: Vec<f64>,
    pub lip_x: f64,
    pub eps_bar: f64,
    /// How `lip_mu` was obtained.
    pub method: &'static str,
}

/// Grid cells per sampling period used for the mean-slope estimate.
pub const LIPSCHITZ_GRID_PER_PERIOD: usize = 100;

fn max_slope(gp: &GpPosterior, start: f64, cells: usize, pitch: f64) -> Result<f64> {
    let mut prev = gp.predict_mean(&[start])?;
    let mut best: f64 = 0.0;
    for k in 1..=cells {
        let v = gp.predict_mean(&[start + k as f64 * pitch])?;
        best = best.max((v - prev).abs() / pitch);
        prev = v;
    }
    Ok(best)
}

/// Bound for predictions up to one period `tau` after the newest sample.
///
/// `targets` are the measured values, `first_truth` the noise-free value at
/// the oldest timestamp, `lip_x` a Lipschitz constant of the signal and
/// `eps_bar` a bound on the noise magnitude.
pub fn uniform_error_bound(
    times: &[f64],
    targets: &[f64],
    first_truth: f64,
    hp: &Hyperparameters,
    eps_bar: f64,
    tau: f64,
    lip_x: f64,
) -> Result<UniformBound> {
    let n = times.len();
    if n == 0 {
        return Err(Error::Empty("window"));
    }
    check_dim(n, targets.len())?;
    if !(eps_bar >= 0.0 && lip_x >= 0.0 && tau > 0.0) {
        return Err(Error::InvalidArgument("eps_bar, lip_x must be >= 0 and tau > 0".into()));
    }
    let posts = nested_posteriors(times, targets, hp)?;
    let EtaNu { etas, nus, .. } = eta_nu_from(times, &posts, hp)?;

    let pitch = tau / LIPSCHITZ_GRID_PER_PERIOD as f64;
    let span = times[n - 1] + tau - times[0];
    let cells = (span / pitch).ceil() as usize;
    let lip_mu = posts.iter().map(|gp| max_slope(gp, times[0], cells, pitch)).collect::<Result<Vec<_>>>()?;

    let value = (nus[0] * first_truth).abs()
        + (0..n).map(|i| nus[i + 1].abs() * (etas[i] * eps_bar + (lip_mu[i] + lip_x) * tau)).sum::<f64>();
    Ok(UniformBound {
        value,
        lip_mu,
        lip_x,
        eps_bar,
        method: "max |slope| of each nested mean on a tau/100 grid over the window plus one period",
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn hp(sf: f64, l: f64, so: f64) -> Hyperparameters {
        Hyperparameters::scalar(sf, l, so).unwrap()
    }

    #[test]
    fn first_block_is_scalar_inverse() {
        let inv = block_inverse_update(&DMatrix::zeros(0, 0), &DVector::zeros(0), 2.0, 0.5).unwrap();
        assert_relative_eq!(inv[(0, 0)], 1.0 / 2.25, max_relative = 1e-15);
    }

    #[test]
    fn decoupled_points_give_block_diagonal_inverse() {
        let prev = DMatrix::from_element(1, 1, 1.0 / 1.1);
        let inv = block_inverse_update(&prev, &DVector::from_element(1, 1e-300), 1.0, 0.1f64.sqrt()).unwrap();
        assert!(inv[(0, 1)].abs() < 1e-200);
        assert_relative_eq!(inv[(1, 1)], 1.0 / 1.1, max_relative = 1e-15);
    }

    #[test]
    fn singular_update_rejected() {
        let prev = DMatrix::from_element(1, 1, 1.0);
        let r = block_inverse_update(&prev, &DVector::from_element(1, 1.0), 1.0, 0.0);
        assert!(matches!(r, Err(Error::NearSingular(_))));
    }

    #[test]
    fn zero_signal_zero_noise_has_zero_terms() {
        let times = [0.0, 0.01, 0.02, 0.03];
        let d = error_decomposition(&times, &[0.0; 4], &[0.0; 4], &hp(1.0, 0.1, 0.3), 0.03, 0.0).unwrap();
        assert_eq!(d.total(), 0.0);
        assert_eq!(d.delta_t, 0.0);
        assert_eq!(d.prior_attenuation, 0.0);
        assert_eq!(d.signal_variation, 0.0);
        assert_eq!(d.noise_passthrough, 0.0);
    }

    #[test]
    fn single_sample_basis() {
        let h = hp(1.3, 0.2, 0.4);
        let (x, e) = (0.8, -0.15);
        let d = error_decomposition(&[0.5], &[x], &[e], &h, 0.5, x).unwrap();
        let s0 = h.signal_variance();
        let eta = s0 / (s0 + h.noise_variance());
        let nu0 = -h.noise_variance() / (s0 + h.noise_variance());
        assert_relative_eq!(d.nus[0], nu0, max_relative = 1e-15);
        assert_eq!(d.nus[1], 1.0);
        assert_eq!(d.delta_t, 0.0);
        assert_relative_eq!(d.total(), eta * e - nu0.abs() * x, max_relative = 1e-14);
        let direct = direct_error(&[0.5], &[x + e], &h, 0.5, x).unwrap();
        assert_relative_eq!(d.total(), direct, max_relative = 1e-14);
    }

    #[test]
    fn sampling_instant_has_no_prediction_term() {
        let times: Vec<f64> = (0..6).map(|i| i as f64 * 0.01).collect();
        let truth: Vec<f64> = times.iter().map(|t| (7.0 * t).sin()).collect();
        let d = error_decomposition(&times, &truth, &[0.01; 6], &hp(1.0, 0.05, 0.2), 0.05, truth[5]).unwrap();
        assert_eq!(d.delta_t, 0.0);
    }

    #[test]
    fn eta_nu_limits() {
        let times: Vec<f64> = (0..5).map(|i| i as f64 * 1e-3).collect();
        let quiet = eta_nu_sequences(&times, &hp(1.0, 0.001, 1e-4)).unwrap();
        assert!(quiet.etas.iter().all(|&e| e > 0.999));
        assert!(quiet.nus[..4].iter().all(|v| v.abs() < 1e-6));
        let noisy = eta_nu_sequences(&times, &hp(1.0, 0.1, 1e3)).unwrap();
        assert!(noisy.etas.iter().all(|&e| e < 1e-5));
        for (n, nu) in noisy.nus.iter().enumerate() {
            assert!((nu.abs() - 1.0).abs() < 1e-4);
            let sign = if (5 - n) % 2 == 0 { 1.0 } else { -1.0 };
            assert_eq!(nu.signum(), sign);
        }
    }

    #[test]
    fn zero_bound_for_quiet_zero_signal() {
        let times = [0.0, 0.001, 0.002];
        let b = uniform_error_bound(&times, &[0.0; 3], 0.0, &hp(1.0, 0.1, 0.3), 0.0, 1e-3, 0.0).unwrap();
        assert_eq!(b.value, 0.0);
        assert!(b.lip_mu.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn single_point_bound_formula() {
        let h = hp(1.0, 0.05, 0.3);
        let (tau, eps, lx, x1, y1) = (1e-3, 0.2, 3.0, 0.5, 0.6);
        let b = uniform_error_bound(&[0.0], &[y1], x1, &h, eps, tau, lx).unwrap();
        let eta = 1.0 / (1.0 + 0.09);
        let nu0 = 0.09 / 1.09;
        let expected = nu0 * x1 + eta * eps + (b.lip_mu[0] + lx) * tau;
        assert_relative_eq!(b.value, expected, max_relative = 1e-14);
        assert!(b.lip_mu[0] > 0.0);
    }
}
