//! Squared-exponential covariance, kernel matrices and their hyperparameter
//! derivatives.
//!
//! Hyperparameters are ordered as `θ = [σ_f, l_1, …, l_ρ, σ_on]` wherever a
//! flat index is used.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// A set of `ρ`-dimensional input points stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Inputs {
    dim: usize,
    data: Vec<f64>,
}

impl Inputs {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("input dimension must be positive".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch { expected: dim * (data.len() / dim + 1), found: data.len() });
        }
        Ok(Self { dim, data })
    }

    /// One-dimensional inputs, e.g. sample timestamps.
    pub fn scalar(values: &[f64]) -> Self {
        Self { dim: 1, data: values.to_vec() }
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map(Vec::len).ok_or(Error::Empty("input points"))?;
        let mut data = Vec::with_capacity(dim * points.len());
        for p in points {
            check_dim(dim, p.len())?;
            data.extend_from_slice(p);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// The first `n` points.
    pub fn prefix(&self, n: usize) -> Inputs {
        Inputs { dim: self.dim, data: self.data[..n * self.dim].to_vec() }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Kernel and noise hyperparameters `θ = [σ_f, l, σ_on]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    pub sigma_f: f64,
    pub lengthscales: Vec<f64>,
    pub sigma_on: f64,
}

/// Names one entry of the flat hyperparameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hyper {
    SignalStd,
    Lengthscale(usize),
    NoiseStd,
}

impl Hyperparameters {
    pub fn new(sigma_f: f64, lengthscales: Vec<f64>, sigma_on: f64) -> Result<Self> {
        let hp = Self { sigma_f, lengthscales, sigma_on };
        hp.validate()?;
        Ok(hp)
    }

    /// Hyperparameters for scalar (time-indexed) inputs.
    pub fn scalar(sigma_f: f64, lengthscale: f64, sigma_on: f64) -> Result<Self> {
        Self::new(sigma_f, vec![lengthscale], sigma_on)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty() {
            return Err(Error::InvalidHyperparameter("at least one lengthscale is required".into()));
        }
        for (i, v) in self.to_vec().into_iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidHyperparameter(format!("θ[{i}] = {v} must be finite and strictly positive")));
            }
        }
        Ok(())
    }

    /// Input dimensionality ρ.
    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Length of the flat vector, `ρ + 2`.
    pub fn count(&self) -> usize {
        self.lengthscales.len() + 2
    }

    pub fn resolve(&self, index: usize) -> Result<Hyper> {
        let count = self.count();
        match index {
            0 => Ok(Hyper::SignalStd),
            i if i + 1 < count => Ok(Hyper::Lengthscale(i - 1)),
            i if i + 1 == count => Ok(Hyper::NoiseStd),
            index => Err(Error::InvalidIndex { index, count }),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.count());
        v.push(self.sigma_f);
        v.extend_from_slice(&self.lengthscales);
        v.push(self.sigma_on);
        v
    }

    pub fn from_vec(values: &[f64]) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::DimensionMismatch { expected: 3, found: values.len() });
        }
        let n = values.len();
        Self::new(values[0], values[1..n - 1].to_vec(), values[n - 1])
    }

    pub fn to_log(&self) -> Vec<f64> {
        self.to_vec().into_iter().map(f64::ln).collect()
    }

    pub fn from_log(log_values: &[f64]) -> Result<Self> {
        let raw: Vec<f64> = log_values.iter().map(|v| v.exp()).collect();
        Self::from_vec(&raw)
    }

    pub fn get(&self, which: Hyper) -> f64 {
        match which {
            Hyper::SignalStd => self.sigma_f,
            Hyper::Lengthscale(i) => self.lengthscales[i],
            Hyper::NoiseStd => self.sigma_on,
        }
    }

    pub fn noise_variance(&self) -> f64 {
        self.sigma_on * self.sigma_on
    }

    pub fn signal_variance(&self) -> f64 {
        self.sigma_f * self.sigma_f
    }
}

/// A stationary covariance function with analytic hyperparameter derivatives.
///
/// Implementations may assume argument dimensions agree with the
/// lengthscales; the checked entry points below verify this.
pub trait Kernel {
    fn eval(&self, a: &[f64], b: &[f64], hp: &Hyperparameters) -> f64;

    /// `∂k(a, b)/∂θ` for a kernel hyperparameter. The noise term lives on the
    /// diagonal of `A`, not in the kernel, so `Hyper::NoiseStd` yields 0.
    fn eval_partial(&self, a: &[f64], b: &[f64], hp: &Hyperparameters, which: Hyper) -> f64;
}

/// `k(z, z') = σ_f² exp(−Σ (z_i − z'_i)² / (2 l_i²))`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SquaredExponential;

impl SquaredExponential {
    #[inline]
    fn scaled_sq_dist(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(ls)
            .map(|((x, y), l)| {
                let d = (x - y) / l;
                d * d
            })
            .sum()
    }
}

impl Kernel for SquaredExponential {
    #[inline]
    fn eval(&self, a: &[f64], b: &[f64], hp: &Hyperparameters) -> f64 {
        hp.signal_variance() * (-0.5 * Self::scaled_sq_dist(a, b, &hp.lengthscales)).exp()
    }

    fn eval_partial(&self, a: &[f64], b: &[f64], hp: &Hyperparameters, which: Hyper) -> f64 {
        match which {
            Hyper::SignalStd => 2.0 * self.eval(a, b, hp) / hp.sigma_f,
            Hyper::Lengthscale(i) => {
                let l = hp.lengthscales[i];
                let d = a[i] - b[i];
                self.eval(a, b, hp) * d * d / (l * l * l)
            }
            Hyper::NoiseStd => 0.0,
        }
    }
}

/// Covariance matrix of a point set, plus whatever diagonal jitter was added
/// to make it factorizable.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub entries: DMatrix<f64>,
    pub jitter_applied: f64,
}

impl KernelMatrix {
    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    /// `K + (σ_on² + jitter) I`.
    pub fn regularized(&self, sigma_on: f64) -> DMatrix<f64> {
        let mut a = self.entries.clone();
        let add = sigma_on * sigma_on + self.jitter_applied;
        for i in 0..a.nrows() {
            a[(i, i)] += add;
        }
        a
    }
}

fn check_point(z: &[f64], hp: &Hyperparameters) -> Result<()> {
    check_dim(hp.dim(), z.len())
}

pub fn se_kernel(z: &[f64], z_prime: &[f64], hp: &Hyperparameters) -> Result<f64> {
    check_point(z, hp)?;
    check_point(z_prime, hp)?;
    Ok(SquaredExponential.eval(z, z_prime, hp))
}

pub fn kernel_matrix(inputs: &Inputs, hp: &Hyperparameters) -> Result<KernelMatrix> {
    kernel_matrix_with(&SquaredExponential, inputs, hp)
}

pub fn kernel_matrix_with<K: Kernel>(kernel: &K, inputs: &Inputs, hp: &Hyperparameters) -> Result<KernelMatrix> {
    if inputs.is_empty() {
        return Err(Error::Empty("kernel matrix inputs"));
    }
    check_dim(hp.dim(), inputs.dim())?;
    let n = inputs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        let zi = inputs.point(i);
        k[(i, i)] = kernel.eval(zi, zi, hp);
        for j in 0..i {
            let v = kernel.eval(zi, inputs.point(j), hp);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(KernelMatrix { entries: k, jitter_applied: 0.0 })
}

pub fn kernel_vector(z: &[f64], inputs: &Inputs, hp: &Hyperparameters) -> Result<DVector<f64>> {
    kernel_vector_with(&SquaredExponential, z, inputs, hp)
}

pub fn kernel_vector_with<K: Kernel>(
    kernel: &K,
    z: &[f64],
    inputs: &Inputs,
    hp: &Hyperparameters,
) -> Result<DVector<f64>> {
    check_point(z, hp)?;
    check_dim(hp.dim(), inputs.dim())?;
    Ok(DVector::from_iterator(inputs.len(), inputs.iter().map(|zi| kernel.eval(z, zi, hp))))
}

/// `∂A/∂θ_which` for `A = K + σ_on² I`, with respect to the raw (not log)
/// hyperparameter.
pub fn kernel_matrix_partial(inputs: &Inputs, hp: &Hyperparameters, which: usize) -> Result<DMatrix<f64>> {
    let which = hp.resolve(which)?;
    if inputs.is_empty() {
        return Err(Error::Empty("kernel matrix inputs"));
    }
    check_dim(hp.dim(), inputs.dim())?;
    let n = inputs.len();
    if which == Hyper::NoiseStd {
        return Ok(DMatrix::identity(n, n) * (2.0 * hp.sigma_on));
    }
    let kernel = SquaredExponential;
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        let zi = inputs.point(i);
        for j in 0..=i {
            let v = kernel.eval_partial(zi, inputs.point(j), hp, which);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(d)
}
