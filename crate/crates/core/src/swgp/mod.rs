//! Streaming sliding-window GP filter.
//!
//! Each output dimension runs an independent scalar GP over the most recent
//! `window` samples. On every `update_decimation`-th sample the filter
//!
//! 1. moves `log θ` by `−sign(∇)·Δ`, using the gradient stored at the
//!    previous refresh,
//! 2. refits the posterior on the current window with the new `θ`,
//! 3. computes the NLL gradient on that window and adapts `Δ`.
//!
//! The gradient used in step 1 never depends on the newest sample, so only
//! one factorization is needed per refresh.
//!
//! A filter is single-writer: `push` takes `&mut self`, `estimate` takes
//! `&self`.

mod rprop;
mod window;

pub use rprop::{RpropConfig, RpropState};
pub use window::SlidingWindow;

use nalgebra::DVector;

use crate::baseline::StepFilter;
use crate::error::{check_dim, Error, Result};
use crate::gp::GpPosterior;
use crate::kernel::{kernel_vector, Hyperparameters, Inputs};

/// Construction parameters for [`SwGpFilter`].
#[derive(Debug, Clone, PartialEq)]
pub struct SwGpConfig {
    /// Window capacity `N̄`.
    pub window: usize,
    /// Nominal sampling period `τ` in seconds.
    pub sample_period: f64,
    /// Number of independently filtered signal components.
    pub dims: usize,
    pub initial: Hyperparameters,
    pub rprop: RpropConfig,
    /// Refresh the posterior (and hyperparameters) every k-th sample.
    pub update_decimation: usize,
    pub adapt: bool,
    /// Raw-space box that adapted hyperparameters are clamped to.
    pub hyper_bounds: (f64, f64),
    /// Adapted lengthscales never drop below this many sample periods.
    /// Far below `τ` the off-diagonal kernel entries underflow, the
    /// lengthscale gradient is exactly zero and adaptation cannot recover.
    /// Zero disables the floor.
    pub min_lengthscale_periods: f64,
}

impl Default for SwGpConfig {
    fn default() -> Self {
        Self {
            window: 200,
            sample_period: 1e-3,
            dims: 1,
            initial: Hyperparameters { sigma_f: 1.0, lengthscales: vec![0.1], sigma_on: 0.1f64.sqrt() },
            rprop: RpropConfig::default(),
            update_decimation: 1,
            adapt: true,
            hyper_bounds: (1e-9, 1e9),
            min_lengthscale_periods: 1.0,
        }
    }
}

impl SwGpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.window == 0 {
            return bad("window must be positive");
        }
        if !(self.sample_period > 0.0 && self.sample_period.is_finite()) {
            return bad("sample period must be positive");
        }
        if self.dims == 0 {
            return bad("dims must be positive");
        }
        if self.update_decimation == 0 {
            return bad("update decimation must be positive");
        }
        self.initial.validate()?;
        if self.initial.dim() != 1 {
            return bad("time-indexed filtering uses exactly one lengthscale");
        }
        self.rprop.validate()?;
        let (lo, hi) = self.hyper_bounds;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return bad("hyperparameter bounds must satisfy 0 < lo < hi < inf");
        }
        let floor = self.min_lengthscale_periods * self.sample_period;
        if !(floor >= 0.0 && floor < hi) {
            return bad("lengthscale floor must be non-negative and below the upper bound");
        }
        Ok(())
    }
}

/// `N(t) = ⌊t/τ⌋ + 1` samples observed by time `t` under regular sampling
/// starting at zero.
pub fn samples_by(t: f64, tau: f64) -> u64 {
    (t / tau + 1e-9).floor() as u64 + 1
}

#[derive(Debug, Clone)]
struct Channel {
    window: SlidingWindow,
    hp: Hyperparameters,
    log_hp: Vec<f64>,
    rprop: RpropState,
    posterior: Option<GpPosterior>,
}

impl Channel {
    fn refresh(&mut self, cfg: &SwGpConfig) -> Result<()> {
        if cfg.adapt {
            let (lo, hi) = (cfg.hyper_bounds.0.ln(), cfg.hyper_bounds.1.ln());
            let l_lo = lo.max((cfg.min_lengthscale_periods * cfg.sample_period).ln());
            let last = self.log_hp.len() - 1;
            let step = self.rprop.descent_step();
            if step.iter().any(|&s| s != 0.0) {
                for (i, (v, s)) in self.log_hp.iter_mut().zip(step).enumerate() {
                    let floor = if i > 0 && i < last { l_lo } else { lo };
                    *v = (*v + s).clamp(floor, hi);
                }
                self.hp = Hyperparameters::from_log(&self.log_hp)?;
            }
        }

        let times = self.window.times();
        let values = self.window.values();
        let posterior = match self.posterior.as_ref() {
            Some(prev) if prev.hyperparameters() == &self.hp && same_spacing(prev.inputs(), &times) => {
                prev.with_targets(Inputs::scalar(&times), &values)?
            }
            _ => GpPosterior::fit(Inputs::scalar(&times), &values, &self.hp)?,
        };

        if cfg.adapt {
            self.rprop.step(&posterior.nll_gradient_log())?;
        }
        self.posterior = Some(posterior);
        Ok(())
    }
}

/// Whether `times` is a translate of the fitted inputs up to timestamp
/// round-off, so the stationary kernel matrix is unchanged.
fn same_spacing(fitted: &Inputs, times: &[f64]) -> bool {
    let old = fitted.as_slice();
    if old.len() != times.len() {
        return false;
    }
    let (Some(&old_last), Some(&new_last)) = (old.last(), times.last()) else {
        return false;
    };
    let tol = 8.0 * f64::EPSILON * new_last.abs().max(old_last.abs()).max(1.0);
    old.iter().zip(times).all(|(&a, &b)| ((b - new_last) - (a - old_last)).abs() <= tol)
}

/// Adaptive low-pass filter built from per-dimension sliding-window GPs.
#[derive(Debug, Clone)]
pub struct SwGpFilter {
    config: SwGpConfig,
    channels: Vec<Channel>,
    last_refresh: Option<f64>,
}

impl SwGpFilter {
    pub fn new(config: SwGpConfig) -> Result<Self> {
        config.validate()?;
        let params = config.initial.count();
        let channels = (0..config.dims)
            .map(|_| {
                Ok(Channel {
                    window: SlidingWindow::new(config.window)?,
                    hp: config.initial.clone(),
                    log_hp: config.initial.to_log(),
                    rprop: RpropState::new(params, config.rprop)?,
                    posterior: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config, channels, last_refresh: None })
    }

    pub fn config(&self) -> &SwGpConfig {
        &self.config
    }

    pub fn dims(&self) -> usize {
        self.config.dims
    }

    pub fn total_seen(&self) -> u64 {
        self.channels[0].window.total_seen()
    }

    pub fn last_refresh(&self) -> Option<f64> {
        self.last_refresh
    }

    pub fn window(&self, dim: usize) -> &SlidingWindow {
        &self.channels[dim].window
    }

    pub fn hyperparameters(&self, dim: usize) -> &Hyperparameters {
        &self.channels[dim].hp
    }

    pub fn rprop(&self, dim: usize) -> &RpropState {
        &self.channels[dim].rprop
    }

    pub fn posterior(&self, dim: usize) -> Option<&GpPosterior> {
        self.channels[dim].posterior.as_ref()
    }

    /// Adds one `d`-dimensional measurement taken at time `t`.
    pub fn push(&mut self, t: f64, y: &[f64]) -> Result<()> {
        check_dim(self.config.dims, y.len())?;
        if let Some(prev) = self.channels[0].window.last_time() {
            if !(t > prev) {
                return Err(Error::NonIncreasingTime { prev, next: t });
            }
        }
        let refresh = self.total_seen().is_multiple_of(self.config.update_decimation as u64);
        for (ch, &v) in self.channels.iter_mut().zip(y) {
            ch.window.push(t, v)?;
            if refresh {
                ch.refresh(&self.config)?;
            }
        }
        if refresh {
            self.last_refresh = Some(t);
        }
        Ok(())
    }

    fn check_prediction_time(&self, t: f64) -> Result<()> {
        match self.last_refresh {
            None => Err(Error::Empty("filter has no samples")),
            Some(r) if t < r => Err(Error::StalePrediction { t, refreshed: r }),
            Some(_) => Ok(()),
        }
    }

    /// Posterior mean of every dimension at `t`.
    pub fn estimate(&self, t: f64) -> Result<Vec<f64>> {
        self.check_prediction_time(t)?;
        self.channels.iter().map(|ch| ch.posterior.as_ref().expect("refreshed channel").predict_mean(&[t])).collect()
    }

    /// Posterior variance of every dimension at `t`.
    pub fn variance(&self, t: f64) -> Result<Vec<f64>> {
        self.check_prediction_time(t)?;
        self.channels
            .iter()
            .map(|ch| ch.posterior.as_ref().expect("refreshed channel").predict_variance(&[t]))
            .collect()
    }

    /// Weights `c = A⁻¹ k(t)` so that `estimate(t) = cᵀ y` over the fitted
    /// window, one vector per dimension.
    pub fn fir_coefficients(&self, t: f64) -> Result<Vec<DVector<f64>>> {
        self.check_prediction_time(t)?;
        self.channels
            .iter()
            .map(|ch| {
                let post = ch.posterior.as_ref().expect("refreshed channel");
                if post.len() < self.config.window {
                    return Err(Error::WindowNotFull { len: post.len(), capacity: self.config.window });
                }
                let k = kernel_vector(&[t], post.inputs(), post.hyperparameters())?;
                Ok(post.solve(&k))
            })
            .collect()
    }
}

impl StepFilter for SwGpFilter {
    fn name(&self) -> &str {
        "swgp"
    }

    fn step(&mut self, t: f64, sample: f64) -> Result<f64> {
        self.push(t, &[sample])?;
        Ok(self.estimate(t)?[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fixed(window: usize) -> SwGpConfig {
        SwGpConfig { window, adapt: false, ..SwGpConfig::default() }
    }

    #[test]
    fn first_push_keeps_hyperparameters() {
        let mut f = SwGpFilter::new(SwGpConfig::default()).unwrap();
        f.push(0.0, &[0.7]).unwrap();
        assert_eq!(f.window(0).len(), 1);
        assert_eq!(f.hyperparameters(0), &SwGpConfig::default().initial);
    }

    #[test]
    fn positive_gradient_lowers_log_parameter_by_step() {
        let cfg = SwGpConfig { window: 5, ..SwGpConfig::default() };
        let mut f = SwGpFilter::new(cfg).unwrap();
        f.push(0.0, &[0.3]).unwrap();
        let ch = &mut f.channels[0];
        let before = ch.log_hp.clone();
        ch.rprop = RpropState::new(3, RpropConfig { delta_init: 0.05, ..RpropConfig::default() }).unwrap();
        ch.rprop.step(&[2.0, 0.0, -1.0]).unwrap();
        f.push(0.001, &[0.1]).unwrap();
        let after = &f.channels[0].log_hp;
        assert_relative_eq!(after[0], before[0] - 0.05, max_relative = 1e-14);
        assert_eq!(after[1], before[1]);
        assert_relative_eq!(after[2], before[2] + 0.05, max_relative = 1e-14);
    }

    #[test]
    fn estimate_requires_samples() {
        let f = SwGpFilter::new(fixed(4)).unwrap();
        assert!(matches!(f.estimate(0.0), Err(Error::Empty(_))));
    }

    #[test]
    fn rejects_non_increasing_time_and_wrong_dims() {
        let mut f = SwGpFilter::new(fixed(4)).unwrap();
        f.push(0.0, &[1.0]).unwrap();
        assert!(matches!(f.push(0.0, &[1.0]), Err(Error::NonIncreasingTime { .. })));
        assert!(f.push(1.0, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_targets_estimate_zero() {
        let mut f = SwGpFilter::new(SwGpConfig { dims: 2, ..fixed(3) }).unwrap();
        for i in 0..5 {
            f.push(i as f64 * 1e-3, &[0.0, 0.0]).unwrap();
        }
        assert_eq!(f.estimate(0.004).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_sample_window_shrinks_measurement() {
        let init = Hyperparameters::scalar(1.0, 0.1, 0.5).unwrap();
        let mut f = SwGpFilter::new(SwGpConfig { initial: init, ..fixed(1) }).unwrap();
        f.push(0.0, &[0.2]).unwrap();
        f.push(0.001, &[2.0]).unwrap();
        let eta = 1.0 / (1.0 + 0.25);
        assert_relative_eq!(f.estimate(0.001).unwrap()[0], eta * 2.0, max_relative = 1e-14);
        let c = f.fir_coefficients(0.001).unwrap();
        assert_eq!(c[0].len(), 1);
        assert_relative_eq!(c[0][0], eta, max_relative = 1e-14);
    }

    #[test]
    fn huge_noise_shrinks_coefficients_to_zero() {
        let init = Hyperparameters::scalar(1.0, 0.1, 1e6).unwrap();
        let mut f = SwGpFilter::new(SwGpConfig { initial: init, ..fixed(10) }).unwrap();
        for i in 0..10 {
            f.push(i as f64 * 1e-3, &[1.0]).unwrap();
        }
        let c = f.fir_coefficients(9.0 * 1e-3).unwrap();
        assert!(c[0].iter().all(|v| v.abs() < 1e-11));
    }

    #[test]
    fn fir_requires_full_window() {
        let mut f = SwGpFilter::new(fixed(4)).unwrap();
        f.push(0.0, &[1.0]).unwrap();
        assert!(matches!(f.fir_coefficients(0.0), Err(Error::WindowNotFull { len: 1, capacity: 4 })));
    }

    #[test]
    fn decimation_refreshes_every_kth_sample() {
        let mut f = SwGpFilter::new(SwGpConfig { update_decimation: 3, ..fixed(10) }).unwrap();
        let mut refreshed = Vec::new();
        for i in 0..7 {
            let t = i as f64 * 1e-3;
            f.push(t, &[i as f64]).unwrap();
            refreshed.push(f.last_refresh().unwrap());
        }
        assert_eq!(refreshed, vec![0.0, 0.0, 0.0, 0.003, 0.003, 0.003, 0.006]);
        assert_eq!(f.posterior(0).unwrap().len(), 7);
        assert!(matches!(f.estimate(0.005), Err(Error::StalePrediction { .. })));
        assert!(f.estimate(0.0065).is_ok());
    }

    #[test]
    fn sample_count_relation() {
        let mut f = SwGpFilter::new(fixed(5)).unwrap();
        let tau = 1e-3;
        for n in 0..40u64 {
            let t = n as f64 * tau;
            f.push(t, &[1.0]).unwrap();
            assert_eq!(f.total_seen(), samples_by(t, tau));
        }
    }

    #[test]
    fn rejects_invalid_config() {
        assert!(SwGpFilter::new(SwGpConfig { window: 0, ..SwGpConfig::default() }).is_err());
        assert!(SwGpFilter::new(SwGpConfig { update_decimation: 0, ..SwGpConfig::default() }).is_err());
        assert!(SwGpFilter::new(SwGpConfig { hyper_bounds: (1.0, 0.5), ..SwGpConfig::default() }).is_err());
    }
}
