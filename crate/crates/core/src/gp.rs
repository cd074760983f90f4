//! Exact Gaussian-process posterior on a fixed data set.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_dim, Error, Result};
use crate::kernel::{kernel_matrix, kernel_vector, Hyperparameters, Inputs, KernelMatrix};

/// First jitter tried after a failed factorization, relative to `σ_f²`.
pub const JITTER_START: f64 = 1e-10;
/// Largest jitter tried before giving up, relative to `σ_f²`.
pub const JITTER_MAX: f64 = 1e-4;
/// Round-off allowance for negative predictive variances, relative to `σ_f²`.
pub const VARIANCE_CLAMP: f64 = 1e-12;

/// Factorized `A = K + σ_on² I` and weights `α = A⁻¹ y` for one data set.
///
/// Immutable once fitted.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    inputs: Inputs,
    targets: DVector<f64>,
    kernel: KernelMatrix,
    factor: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    hp: Hyperparameters,
}

/// Cholesky of `K + σ_on² I`, escalating diagonal jitter on failure.
fn factorize(kernel: &mut KernelMatrix, hp: &Hyperparameters) -> Result<Cholesky<f64, Dyn>> {
    let scale = hp.signal_variance();
    let mut jitter = 0.0;
    loop {
        kernel.jitter_applied = jitter;
        if let Some(chol) = Cholesky::new(kernel.regularized(hp.sigma_on)) {
            return Ok(chol);
        }
        jitter = if jitter == 0.0 { JITTER_START * scale } else { jitter * 10.0 };
        if jitter > JITTER_MAX * scale * (1.0 + 1e-9) {
            return Err(Error::Factorization { size: kernel.size(), jitter: kernel.jitter_applied });
        }
    }
}

impl GpPosterior {
    pub fn fit(inputs: Inputs, targets: &[f64], hp: &Hyperparameters) -> Result<Self> {
        hp.validate()?;
        if inputs.is_empty() {
            return Err(Error::Empty("training set"));
        }
        check_dim(inputs.len(), targets.len())?;
        let mut kernel = kernel_matrix(&inputs, hp)?;
        let factor = factorize(&mut kernel, hp)?;
        let targets = DVector::from_column_slice(targets);
        let alpha = factor.solve(&targets);
        Ok(Self { inputs, targets, kernel, factor, alpha, hp: hp.clone() })
    }

    /// Reuses this posterior's factorization for a new set of targets at
    /// `inputs`.
    ///
    /// Valid only when `inputs` has the same pairwise differences as the
    /// current inputs (a translated copy); the kernel is stationary so `A` is
    /// unchanged.
    pub fn with_targets(&self, inputs: Inputs, targets: &[f64]) -> Result<Self> {
        check_dim(self.inputs.len(), inputs.len())?;
        check_dim(self.inputs.dim(), inputs.dim())?;
        check_dim(inputs.len(), targets.len())?;
        let targets = DVector::from_column_slice(targets);
        let alpha = self.factor.solve(&targets);
        Ok(Self {
            inputs,
            targets,
            kernel: self.kernel.clone(),
            factor: self.factor.clone(),
            alpha,
            hp: self.hp.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &Inputs {
        &self.inputs
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hp
    }

    pub fn kernel(&self) -> &KernelMatrix {
        &self.kernel
    }

    pub fn jitter(&self) -> f64 {
        self.kernel.jitter_applied
    }

    /// `A` including noise and any jitter.
    pub fn a_matrix(&self) -> DMatrix<f64> {
        self.kernel.regularized(self.hp.sigma_on)
    }

    /// Lower-triangular Cholesky factor of `A`.
    pub fn factor_l(&self) -> DMatrix<f64> {
        self.factor.l()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.factor.inverse()
    }

    pub fn predict_mean(&self, z: &[f64]) -> Result<f64> {
        Ok(kernel_vector(z, &self.inputs, &self.hp)?.dot(&self.alpha))
    }

    pub fn predict_variance(&self, z: &[f64]) -> Result<f64> {
        let k = kernel_vector(z, &self.inputs, &self.hp)?;
        let v = self.factor.l_dirty().solve_lower_triangular(&k).expect("Cholesky factor has a positive diagonal");
        let var = self.hp.signal_variance() - v.norm_squared();
        if var >= 0.0 {
            Ok(var)
        } else if var >= -VARIANCE_CLAMP * self.hp.signal_variance() {
            Ok(0.0)
        } else {
            Err(Error::NegativeVariance(var))
        }
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.factor.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Negative log marginal likelihood of the targets.
    pub fn nll(&self) -> f64 {
        let n = self.len() as f64;
        0.5 * self.targets.dot(&self.alpha) + 0.5 * self.log_det() + 0.5 * n * (2.0 * PI).ln()
    }

    /// Gradient of [`nll`](Self::nll) with respect to the raw hyperparameters
    /// `[σ_f, l_1..l_ρ, σ_on]`.
    ///
    /// Any jitter is treated as a constant.
    pub fn nll_gradient(&self) -> Vec<f64> {
        let n = self.len();
        let rho = self.inputs.dim();
        let a_inv = self.factor.inverse();
        let alpha = &self.alpha;
        let k = &self.kernel.entries;
        let hp = &self.hp;

        // tr(W ∂A) with W = ααᵀ − A⁻¹, accumulated over the symmetric pairs.
        let mut tr_sf = 0.0;
        let mut tr_l = vec![0.0; rho];
        for i in 0..n {
            let zi = self.inputs.point(i);
            for j in 0..=i {
                let mult = if i == j { 1.0 } else { 2.0 };
                let w = mult * (alpha[i] * alpha[j] - a_inv[(i, j)]);
                let kij = k[(i, j)];
                tr_sf += w * kij;
                if i != j {
                    let zj = self.inputs.point(j);
                    for (d, tr) in tr_l.iter_mut().enumerate() {
                        let diff = zi[d] - zj[d];
                        *tr += w * kij * diff * diff;
                    }
                }
            }
        }
        let tr_noise = alpha.norm_squared() - a_inv.trace();

        let mut grad = Vec::with_capacity(rho + 2);
        grad.push(-0.5 * tr_sf * 2.0 / hp.sigma_f);
        for (d, tr) in tr_l.into_iter().enumerate() {
            let l = hp.lengthscales[d];
            grad.push(-0.5 * tr / (l * l * l));
        }
        grad.push(-0.5 * tr_noise * 2.0 * hp.sigma_on);
        grad
    }

    /// Gradient with respect to `log θ` (chain rule `∂/∂log θ = θ ∂/∂θ`).
    pub fn nll_gradient_log(&self) -> Vec<f64> {
        self.nll_gradient().into_iter().zip(self.hp.to_vec()).map(|(g, theta)| g * theta).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn hp(sf: f64, l: f64, so: f64) -> Hyperparameters {
        Hyperparameters::scalar(sf, l, so).unwrap()
    }

    #[test]
    fn single_point_weights() {
        let gp = GpPosterior::fit(Inputs::scalar(&[0.3]), &[2.0], &hp(1.0, 0.5, 1.0)).unwrap();
        assert_relative_eq!(gp.alpha()[0], 1.0, max_relative = 1e-15);
    }

    #[test]
    fn zero_targets_give_zero_weights_and_mean() {
        let z = Inputs::scalar(&[0.0, 0.1, 0.2]);
        let gp = GpPosterior::fit(z, &[0.0; 3], &hp(1.0, 0.3, 0.2)).unwrap();
        assert!(gp.alpha().iter().all(|&a| a == 0.0));
        for t in [-1.0, 0.05, 0.7] {
            assert_eq!(gp.predict_mean(&[t]).unwrap(), 0.0);
        }
    }

    #[test]
    fn single_point_shrinkage() {
        let gp = GpPosterior::fit(Inputs::scalar(&[0.0]), &[1.0], &hp(1.0, 0.5, 1.0)).unwrap();
        assert_relative_eq!(gp.predict_mean(&[0.0]).unwrap(), 0.5, max_relative = 1e-15);
        assert_relative_eq!(gp.predict_variance(&[0.0]).unwrap(), 0.5, max_relative = 1e-15);
    }

    #[test]
    fn far_away_variance_is_prior() {
        let gp = GpPosterior::fit(Inputs::scalar(&[0.0, 0.1]), &[1.0, 2.0], &hp(1.4, 0.05, 0.1)).unwrap();
        assert_relative_eq!(gp.predict_variance(&[1e3]).unwrap(), 1.96, max_relative = 1e-15);
    }

    #[test]
    fn nll_of_zero_target() {
        let gp = GpPosterior::fit(Inputs::scalar(&[0.0]), &[0.0], &hp(1.0, 1.0, 1.0)).unwrap();
        let expected = 0.5 * 2f64.ln() + 0.5 * (2.0 * PI).ln();
        assert_relative_eq!(gp.nll(), expected, max_relative = 1e-15);
    }

    #[test]
    fn scaling_targets_quadruples_quadratic_term() {
        let z = Inputs::scalar(&[0.0, 0.2, 0.5]);
        let y = [0.4, -1.0, 0.3];
        let h = hp(1.1, 0.4, 0.3);
        let a = GpPosterior::fit(z.clone(), &y, &h).unwrap();
        let y2: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let b = GpPosterior::fit(z.clone(), &y2, &h).unwrap();
        let zero = GpPosterior::fit(z, &[0.0; 3], &h).unwrap();
        let quad_a = a.nll() - zero.nll();
        let quad_b = b.nll() - zero.nll();
        assert_relative_eq!(quad_b, 4.0 * quad_a, max_relative = 1e-12);
    }

    #[test]
    fn noise_gradient_with_zero_targets() {
        let z = Inputs::scalar(&[0.0, 0.1, 0.3, 0.35]);
        let h = hp(0.9, 0.2, 0.4);
        let gp = GpPosterior::fit(z, &[0.0; 4], &h).unwrap();
        let g = gp.nll_gradient();
        let expected = h.sigma_on * gp.inverse().trace();
        assert_relative_eq!(g[2], expected, max_relative = 1e-12);
        assert!(g[2] > 0.0);
    }

    #[test]
    fn duplicate_inputs_escalate_jitter() {
        let z = Inputs::scalar(&[1.0; 6]);
        let h = hp(1.0, 1.0, 1e-12);
        let gp = GpPosterior::fit(z, &[1.0; 6], &h).unwrap();
        assert!(gp.jitter() > 0.0);
        assert!(gp.jitter() <= JITTER_MAX);
    }

    #[test]
    fn mismatched_targets_rejected() {
        assert!(GpPosterior::fit(Inputs::scalar(&[0.0, 1.0]), &[1.0], &hp(1.0, 1.0, 1.0)).is_err());
        assert!(GpPosterior::fit(Inputs::scalar(&[]), &[], &hp(1.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn fit_is_bitwise_deterministic() {
        let z = Inputs::scalar(&[0.0, 0.013, 0.02, 0.07, 0.071]);
        let y = [0.1, -0.4, 2.0, 0.3, 0.0];
        let h = hp(1.3, 0.05, 0.1);
        let a = GpPosterior::fit(z.clone(), &y, &h).unwrap();
        let b = GpPosterior::fit(z, &y, &h).unwrap();
        assert_eq!(a.alpha(), b.alpha());
    }

    #[test]
    fn translated_refit_matches_fresh_fit() {
        let h = hp(1.0, 0.1, 0.3);
        let a = GpPosterior::fit(Inputs::scalar(&[0.0, 0.001, 0.002]), &[1.0, 2.0, 3.0], &h).unwrap();
        let z2 = Inputs::scalar(&[0.001, 0.002, 0.003]);
        let reused = a.with_targets(z2.clone(), &[2.0, 3.0, 4.0]).unwrap();
        let fresh = GpPosterior::fit(z2, &[2.0, 3.0, 4.0], &h).unwrap();
        for (x, y) in reused.alpha().iter().zip(fresh.alpha().iter()) {
            assert_relative_eq!(*x, *y, max_relative = 1e-10);
        }
    }
}
