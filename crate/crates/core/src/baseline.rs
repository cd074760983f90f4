//! Classical causal reference filters: first-order low-pass, 4th-order
//! Butterworth, moving average and Savitzky–Golay.

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A causal filter consuming one sample at a time.
pub trait StepFilter {
    fn name(&self) -> &str;

    /// Consumes the sample taken at `t` and returns the filtered value at `t`.
    fn step(&mut self, t: f64, sample: f64) -> Result<f64>;
}

/// Passes samples through unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl StepFilter for Identity {
    fn name(&self) -> &str {
        "identity"
    }

    fn step(&mut self, _t: f64, sample: f64) -> Result<f64> {
        Ok(sample)
    }
}

/// Second-order section in transposed direct form II, `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
    s1: f64,
    s2: f64,
}

impl Biquad {
    pub fn new(b: [f64; 3], a: [f64; 2]) -> Self {
        Self { b, a, s1: 0.0, s2: 0.0 }
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.s1;
        self.s1 = self.b[1] * x - self.a[0] * y + self.s2;
        self.s2 = self.b[2] * x - self.a[1] * y;
        y
    }

    /// Magnitudes of the section's poles (roots of `z² + a1 z + a2`).
    pub fn pole_radii(&self) -> [f64; 2] {
        let (a1, a2) = (self.a[0], self.a[1]);
        let disc = a1 * a1 - 4.0 * a2;
        if disc >= 0.0 {
            let r = disc.sqrt();
            [((-a1 + r) / 2.0).abs(), ((-a1 - r) / 2.0).abs()]
        } else {
            // complex pair, |p|² = a2
            let m = a2.sqrt();
            [m, m]
        }
    }

    /// Complex frequency response `(re, im)` at normalized angular frequency `w`.
    pub fn response(&self, w: f64) -> (f64, f64) {
        let (c1, s1) = (w.cos(), -w.sin());
        let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (self.b[0] + self.b[1] * c1 + self.b[2] * c2, self.b[1] * s1 + self.b[2] * s2);
        let den = (1.0 + self.a[0] * c1 + self.a[1] * c2, self.a[0] * s1 + self.a[1] * s2);
        let d2 = den.0 * den.0 + den.1 * den.1;
        ((num.0 * den.0 + num.1 * den.1) / d2, (num.1 * den.0 - num.0 * den.1) / d2)
    }
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct IirFilter {
    name: String,
    sections: Vec<Biquad>,
}

fn check_cutoff(cutoff_hz: f64, fs_hz: f64) -> Result<f64> {
    if !(fs_hz > 0.0 && fs_hz.is_finite()) {
        return Err(Error::InvalidArgument(format!("sampling rate {fs_hz} must be positive")));
    }
    if !(cutoff_hz > 0.0 && cutoff_hz < fs_hz / 2.0) {
        return Err(Error::InvalidArgument(format!("cutoff {cutoff_hz} Hz must lie in (0, {}) Hz", fs_hz / 2.0)));
    }
    // pre-warped analog cutoff, normalized
    Ok((PI * cutoff_hz / fs_hz).tan())
}

impl IirFilter {
    pub fn from_sections(name: impl Into<String>, sections: Vec<Biquad>) -> Result<Self> {
        let f = Self { name: name.into(), sections };
        if f.max_pole_radius() >= 1.0 {
            return Err(Error::InvalidArgument("IIR design is unstable".into()));
        }
        Ok(f)
    }

    /// Bilinear transform of `1 / (1 + s/ω_c)` with the cutoff pre-warped.
    pub fn first_order_lowpass(cutoff_hz: f64, fs_hz: f64) -> Result<Self> {
        let k = check_cutoff(cutoff_hz, fs_hz)?;
        let b0 = k / (1.0 + k);
        let a1 = (k - 1.0) / (k + 1.0);
        Self::from_sections("first_order_lowpass", vec![Biquad::new([b0, b0, 0.0], [a1, 0.0])])
    }

    /// 4th-order Butterworth low-pass as two bilinear-transformed biquads.
    pub fn butterworth4(cutoff_hz: f64, fs_hz: f64) -> Result<Self> {
        let k = check_cutoff(cutoff_hz, fs_hz)?;
        let sections = [PI / 8.0, 3.0 * PI / 8.0]
            .iter()
            .map(|angle| {
                // analog section s² + 2cos(angle) s + 1 for a pole pair of the prototype
                let two_zeta = 2.0 * angle.cos();
                let norm = 1.0 + two_zeta * k + k * k;
                let b0 = k * k / norm;
                Biquad::new([b0, 2.0 * b0, b0], [2.0 * (k * k - 1.0) / norm, (1.0 - two_zeta * k + k * k) / norm])
            })
            .collect();
        Self::from_sections("butterworth4", sections)
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn max_pole_radius(&self) -> f64 {
        self.sections.iter().flat_map(|s| s.pole_radii()).fold(0.0, f64::max)
    }

    /// Analytic `(amplitude, phase)` at `f_hz`.
    pub fn frequency_response(&self, f_hz: f64, fs_hz: f64) -> (f64, f64) {
        let w = 2.0 * PI * f_hz / fs_hz;
        let (mut re, mut im) = (1.0, 0.0);
        for s in &self.sections {
            let (r, i) = s.response(w);
            (re, im) = (re * r - im * i, re * i + im * r);
        }
        (re.hypot(im), im.atan2(re))
    }

    pub fn process(&mut self, x: f64) -> f64 {
        self.sections.iter_mut().fold(x, |acc, s| s.process(acc))
    }
}

impl StepFilter for IirFilter {
    fn name(&self) -> &str {
        &self.name
    }

    fn step(&mut self, _t: f64, sample: f64) -> Result<f64> {
        Ok(self.process(sample))
    }
}

/// Causal FIR over the last `N̄` samples.
///
/// While fewer than `N̄` samples have arrived, the filter applies the
/// coefficients designed for the current fill level, so it emits output from
/// the first sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    name: String,
    /// `warmup[m - 1]` holds the coefficients for `m` available samples,
    /// newest first; the last entry is the steady-state design.
    warmup: Vec<Vec<f64>>,
    buffer: VecDeque<f64>,
}

impl FirFilter {
    fn from_designs(name: &str, warmup: Vec<Vec<f64>>) -> Self {
        let n = warmup.len();
        Self { name: name.to_string(), warmup, buffer: VecDeque::with_capacity(n + 1) }
    }

    pub fn moving_average(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidArgument("moving-average window must be positive".into()));
        }
        let designs = (1..=window).map(|m| vec![1.0 / m as f64; m]).collect();
        Ok(Self::from_designs("moving_average", designs))
    }

    /// Least-squares polynomial fit of degree `order` over the window,
    /// evaluated at the newest sample.
    pub fn savitzky_golay(window: usize, order: usize) -> Result<Self> {
        if window < order + 1 {
            return Err(Error::InvalidArgument(format!(
                "Savitzky-Golay window {window} must be at least order + 1 = {}",
                order + 1
            )));
        }
        let designs = (1..=window).map(|m| sg_endpoint_weights(m, order.min(m - 1))).collect();
        Ok(Self::from_designs("savitzky_golay", designs))
    }

    pub fn window(&self) -> usize {
        self.warmup.len()
    }

    /// Steady-state coefficients, newest sample first.
    pub fn coefficients(&self) -> &[f64] {
        self.warmup.last().expect("non-empty design")
    }

    pub fn process(&mut self, x: f64) -> f64 {
        self.buffer.push_front(x);
        self.buffer.truncate(self.warmup.len());
        let c = &self.warmup[self.buffer.len() - 1];
        c.iter().zip(&self.buffer).map(|(c, x)| c * x).sum()
    }
}

/// Weights `w` (newest first) such that `wᵀy` is the degree-`order`
/// least-squares fit to `m` samples evaluated at the newest one.
fn sg_endpoint_weights(m: usize, order: usize) -> Vec<f64> {
    if m == 1 {
        return vec![1.0];
    }
    // u ∈ [-1, 0] keeps the normal equations well conditioned; newest at u = 0.
    let scale = (m - 1) as f64;
    let v = DMatrix::from_fn(m, order + 1, |i, p| (-(i as f64) / scale).powi(p as i32));
    let gram = v.transpose() * &v;
    let mut e0 = DVector::zeros(order + 1);
    e0[0] = 1.0;
    // w = V (VᵀV)⁻¹ e0
    let g = gram.cholesky().expect("Vandermonde Gram matrix is positive definite").solve(&e0);
    (&v * g).iter().copied().collect()
}

impl StepFilter for FirFilter {
    fn name(&self) -> &str {
        &self.name
    }

    fn step(&mut self, _t: f64, sample: f64) -> Result<f64> {
        Ok(self.process(sample))
    }
}
