use crate::error::{check_dim, Error, Result};

/// Constants of the sign-based step-size adaptation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpropConfig {
    pub eta_plus: f64,
    pub eta_minus: f64,
    /// Initial step, in log-hyperparameter units.
    pub delta_init: f64,
    pub delta_min: f64,
    pub delta_max: f64,
}

impl Default for RpropConfig {
    fn default() -> Self {
        Self { eta_plus: 1.2, eta_minus: 0.5, delta_init: 0.01, delta_min: 1e-6, delta_max: 0.5 }
    }
}

impl RpropConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if !(self.eta_plus > 1.0 && self.eta_plus.is_finite()) {
            return bad("eta_plus must exceed 1");
        }
        if !(self.eta_minus > 0.0 && self.eta_minus < 1.0) {
            return bad("eta_minus must lie in (0, 1)");
        }
        if !(self.delta_min > 0.0 && self.delta_min <= self.delta_max && self.delta_max.is_finite()) {
            return bad("step bounds must satisfy 0 < delta_min <= delta_max");
        }
        if !(self.delta_init >= self.delta_min && self.delta_init <= self.delta_max) {
            return bad("delta_init must lie within [delta_min, delta_max]");
        }
        Ok(())
    }
}

/// Per-parameter step sizes and the last gradient seen.
#[derive(Debug, Clone, PartialEq)]
pub struct RpropState {
    config: RpropConfig,
    delta: Vec<f64>,
    prev_grad: Vec<f64>,
}

impl RpropState {
    pub fn new(params: usize, config: RpropConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, delta: vec![config.delta_init; params], prev_grad: vec![0.0; params] })
    }

    pub fn config(&self) -> &RpropConfig {
        &self.config
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn prev_grad(&self) -> &[f64] {
        &self.prev_grad
    }

    /// Adapts the step sizes from the sign agreement of `grad` with the stored
    /// gradient, then stores `grad`.
    pub fn step(&mut self, grad: &[f64]) -> Result<()> {
        check_dim(self.delta.len(), grad.len())?;
        let c = &self.config;
        for ((delta, prev), &g) in self.delta.iter_mut().zip(&mut self.prev_grad).zip(grad) {
            let p = g * *prev;
            if p > 0.0 {
                *delta = (*delta * c.eta_plus).min(c.delta_max);
            } else if p < 0.0 {
                *delta = (*delta * c.eta_minus).max(c.delta_min);
            }
            *prev = g;
        }
        Ok(())
    }

    /// Descent move `−sign(∇)·Δ` for the stored gradient; zero components do
    /// not move.
    pub fn descent_step(&self) -> Vec<f64> {
        self.prev_grad
            .iter()
            .zip(&self.delta)
            .map(|(&g, &d)| {
                if g > 0.0 {
                    -d
                } else if g < 0.0 {
                    d
                } else {
                    0.0
                }
            })
            .collect()
    }
}
