//! Two-link planar manipulator under PD control with noisy joint
//! measurements, optionally smoothed by an SW-GP filter in the loop.

use std::time::Instant;

use nalgebra::{Matrix2, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::kernel::Hyperparameters;
use crate::swgp::{SwGpConfig, SwGpFilter};

/// Physical parameters of the two-link arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManipulatorParams {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub l2: f64,
    /// Distance from each joint to its link's center of mass.
    pub lc1: f64,
    pub lc2: f64,
    /// Link inertias about the center of mass.
    pub i1: f64,
    pub i2: f64,
    pub g: f64,
}

impl Default for ManipulatorParams {
    /// Unit-mass, unit-length uniform rods.
    fn default() -> Self {
        Self { m1: 1.0, m2: 1.0, l1: 1.0, l2: 1.0, lc1: 0.5, lc2: 0.5, i1: 1.0 / 12.0, i2: 1.0 / 12.0, g: 9.81 }
    }
}

impl ManipulatorParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.m1, self.m2, self.l1, self.l2, self.lc1, self.lc2, self.i1, self.i2];
        if positive.iter().all(|v| *v > 0.0 && v.is_finite()) && self.g.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument("masses, lengths and inertias must be positive".into()))
        }
    }

    pub fn mass_matrix(&self, q: [f64; 2]) -> Matrix2<f64> {
        let c2 = q[1].cos();
        let m22 = self.i2 + self.m2 * self.lc2 * self.lc2;
        let m12 = m22 + self.m2 * self.l1 * self.lc2 * c2;
        let m11 = self.i1
            + self.m1 * self.lc1 * self.lc1
            + m22
            + self.m2 * (self.l1 * self.l1 + 2.0 * self.l1 * self.lc2 * c2);
        Matrix2::new(m11, m12, m12, m22)
    }

    /// Coriolis and centrifugal torques `C(q, q̇) q̇`.
    pub fn coriolis(&self, q: [f64; 2], qd: [f64; 2]) -> Vector2<f64> {
        let h = self.m2 * self.l1 * self.lc2 * q[1].sin();
        Vector2::new(-h * (2.0 * qd[0] * qd[1] + qd[1] * qd[1]), h * qd[0] * qd[0])
    }

    pub fn gravity(&self, q: [f64; 2]) -> Vector2<f64> {
        let c12 = (q[0] + q[1]).cos();
        Vector2::new(
            (self.m1 * self.lc1 + self.m2 * self.l1) * self.g * q[0].cos() + self.m2 * self.lc2 * self.g * c12,
            self.m2 * self.lc2 * self.g * c12,
        )
    }

    pub fn kinetic_energy(&self, q: [f64; 2], qd: [f64; 2]) -> f64 {
        let v = Vector2::from(qd);
        0.5 * v.dot(&(self.mass_matrix(q) * v))
    }
}

/// Joint accelerations `M⁻¹ (u − C q̇ − g)`.
pub fn dynamics(q: [f64; 2], qd: [f64; 2], u: [f64; 2], params: &ManipulatorParams) -> Result<[f64; 2]> {
    let rhs = Vector2::from(u) - params.coriolis(q, qd) - params.gravity(q);
    let m = params.mass_matrix(q);
    let det = m.determinant();
    if !(det.abs() > 1e-12) {
        return Err(Error::NearSingular(det));
    }
    let qdd = m.cholesky().ok_or(Error::NearSingular(det))?.solve(&rhs);
    Ok([qdd[0], qdd[1]])
}

/// State `[q1, q2, q̇1, q̇2]`.
pub type State = [f64; 4];

fn derivative(x: &State, u: [f64; 2], p: &ManipulatorParams) -> Result<State> {
    let a = dynamics([x[0], x[1]], [x[2], x[3]], u, p)?;
    Ok([x[2], x[3], a[0], a[1]])
}

fn axpy(x: &State, h: f64, k: &State) -> State {
    std::array::from_fn(|i| x[i] + h * k[i])
}

/// Advances the state by `dt` with `substeps` classic RK4 steps under a
/// constant input.
pub fn integrate(x: State, u: [f64; 2], dt: f64, substeps: usize, p: &ManipulatorParams) -> Result<State> {
    let h = dt / substeps as f64;
    let mut x = x;
    for _ in 0..substeps {
        let k1 = derivative(&x, u, p)?;
        let k2 = derivative(&axpy(&x, h / 2.0, &k1), u, p)?;
        let k3 = derivative(&axpy(&x, h / 2.0, &k2), u, p)?;
        let k4 = derivative(&axpy(&x, h, &k3), u, p)?;
        x = std::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    Ok(x)
}

/// Joint reference and its time derivative.
pub fn reference(t: f64) -> ([f64; 2], [f64; 2]) {
    let s = (0.1 * t * t).sin();
    let ds = 0.2 * t * (0.1 * t * t).cos();
    ([s, 0.5 * s], [ds, 0.5 * ds])
}

/// Which positions feed the finite-difference velocity estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocitySource {
    /// Filter output when the filter is on.
    Filtered,
    /// Raw measurements regardless of filtering.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterMode {
    None,
    SwGp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopConfig {
    pub kp: f64,
    pub kd: f64,
    pub fs_hz: f64,
    /// Std of the additive joint-angle noise.
    pub noise_std: f64,
    pub window: usize,
    pub update_decimation: usize,
    pub duration_s: f64,
    pub repetitions: usize,
    pub substeps: usize,
    pub velocity: VelocitySource,
    pub params: ManipulatorParams,
    pub initial: Hyperparameters,
    /// Joint angle or rate magnitude treated as divergence.
    pub divergence: f64,
}

impl Default for ClosedLoopConfig {
    fn default() -> Self {
        Self {
            kp: 100.0,
            kd: 10.0,
            fs_hz: 1000.0,
            noise_std: 0.1,
            window: 50,
            update_decimation: 3,
            duration_s: 20.0,
            repetitions: 20,
            substeps: 10,
            velocity: VelocitySource::Filtered,
            params: ManipulatorParams::default(),
            initial: Hyperparameters { sigma_f: 1.0, lengthscales: vec![0.1], sigma_on: 0.1 },
            divergence: 1e3,
        }
    }
}

impl ClosedLoopConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let ok = self.fs_hz > 0.0
            && self.noise_std >= 0.0
            && self.duration_s >= 0.0
            && self.substeps > 0
            && self.divergence > 0.0
            && [self.kp, self.kd, self.fs_hz, self.noise_std, self.duration_s].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("invalid closed-loop configuration".into()))
        }
    }

    pub fn ticks(&self) -> usize {
        (self.duration_s * self.fs_hz).round() as usize
    }

    fn filter_config(&self) -> SwGpConfig {
        SwGpConfig {
            window: self.window,
            sample_period: 1.0 / self.fs_hz,
            dims: 2,
            initial: self.initial.clone(),
            update_decimation: self.update_decimation,
            ..SwGpConfig::default()
        }
    }
}

/// State and signals at one control tick, before the input is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub q: [f64; 2],
    pub qd: [f64; 2],
    pub q_meas: [f64; 2],
    pub q_filt: [f64; 2],
    pub u: [f64; 2],
}

impl TrajectoryRow {
    pub fn state(&self) -> State {
        [self.q[0], self.q[1], self.qd[0], self.qd[1]]
    }
}

pub const TRAJECTORY_COLUMNS: [&str; 11] =
    ["t", "q1", "q2", "qd1", "qd2", "q1_meas", "q2_meas", "q1_filt", "q2_filt", "u1", "u2"];

/// Simulates the loop with a zero-order hold on the input. The noise stream
/// depends only on `seed`, so filtered and unfiltered runs see identical noise.
pub fn run_closed_loop(cfg: &ClosedLoopConfig, mode: FilterMode, seed: u64) -> Result<Vec<TrajectoryRow>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = if cfg.noise_std > 0.0 {
        Some(Normal::new(0.0, cfg.noise_std).map_err(|e| Error::InvalidArgument(e.to_string()))?)
    } else {
        None
    };
    let mut filter = match mode {
        FilterMode::None => None,
        FilterMode::SwGp => Some(SwGpFilter::new(cfg.filter_config())?),
    };
    let dt = 1.0 / cfg.fs_hz;
    let (q0, _) = reference(0.0);
    let mut x: State = [q0[0], q0[1], 0.0, 0.0];
    let mut prev_pos: Option<[f64; 2]> = None;
    let mut log = Vec::with_capacity(cfg.ticks());

    for k in 0..cfg.ticks() {
        let t = k as f64 / cfg.fs_hz;
        if x.iter().any(|v| !(v.abs() <= cfg.divergence)) {
            return Err(Error::Unstable { t });
        }
        let mut q_meas = [x[0], x[1]];
        if let Some(d) = &noise {
            for v in &mut q_meas {
                *v += d.sample(&mut rng);
            }
        }
        let q_filt = match filter.as_mut() {
            Some(f) => {
                f.push(t, &q_meas)?;
                let e = f.estimate(t)?;
                [e[0], e[1]]
            }
            None => q_meas,
        };
        let pos = match cfg.velocity {
            VelocitySource::Filtered => q_filt,
            VelocitySource::Raw => q_meas,
        };
        // the arm starts at rest, so the first difference is taken as zero
        let vel = prev_pos.map_or([0.0; 2], |p| [(pos[0] - p[0]) / dt, (pos[1] - p[1]) / dt]);
        prev_pos = Some(pos);

        let (qr, qdr) = reference(t);
        let u: [f64; 2] = std::array::from_fn(|i| -cfg.kp * (q_filt[i] - qr[i]) - cfg.kd * (vel[i] - qdr[i]));
        log.push(TrajectoryRow { t, q: [x[0], x[1]], qd: [x[2], x[3]], q_meas, q_filt, u });
        x = integrate(x, u, dt, cfg.substeps, &cfg.params)?;
    }
    Ok(log)
}

/// Per-tick squared state deviation, averaged over the four state components.
pub fn state_error_series(a: &[TrajectoryRow], b: &[TrajectoryRow]) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| {
            let (sa, sb) = (ra.state(), rb.state());
            sa.iter().zip(&sb).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / 4.0
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopComparison {
    pub seed: u64,
    pub mse_filtered: f64,
    pub mse_unfiltered: f64,
    pub filtered_series: Vec<f64>,
    pub unfiltered_series: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Runs the noisy loop with and without the filter and compares each against
/// a twin driven by noiseless measurements.
pub fn compare_closed_loop(cfg: &ClosedLoopConfig, seed: u64) -> Result<ClosedLoopComparison> {
    let twin_cfg = ClosedLoopConfig { noise_std: 0.0, ..cfg.clone() };
    let twin = run_closed_loop(&twin_cfg, FilterMode::None, seed)?;
    let unfiltered = run_closed_loop(cfg, FilterMode::None, seed)?;
    let filtered = run_closed_loop(cfg, FilterMode::SwGp, seed)?;
    let filtered_series = state_error_series(&filtered, &twin);
    let unfiltered_series = state_error_series(&unfiltered, &twin);
    Ok(ClosedLoopComparison {
        seed,
        mse_filtered: mean(&filtered_series),
        mse_unfiltered: mean(&unfiltered_series),
        filtered_series,
        unfiltered_series,
    })
}

/// Wall-clock cost of SW-GP calls, in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    pub window: usize,
    pub calls: usize,
    pub update_mean: f64,
    pub update_std: f64,
    pub predict_mean: f64,
    pub predict_std: f64,
    pub update_mean_first_half: f64,
    pub update_mean_second_half: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let m = mean(v);
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len().max(2) - 1) as f64;
    (m, var.sqrt())
}

/// Times `calls` adaptive updates and predictions on a noisy 1 Hz sine after
/// filling the window.
pub fn benchmark_latency(window: usize, calls: usize, seed: u64) -> Result<LatencyReport> {
    if calls == 0 {
        return Err(Error::InvalidArgument("calls must be at least 1".into()));
    }
    let fs = 1000.0;
    let mut filter = SwGpFilter::new(SwGpConfig { window, sample_period: 1.0 / fs, ..SwGpConfig::default() })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.1f64.sqrt()).expect("valid std");
    let mut sample = |i: usize| {
        let t = i as f64 / fs;
        (t, (2.0 * std::f64::consts::PI * t).sin() + noise.sample(&mut rng))
    };
    for i in 0..window {
        let (t, y) = sample(i);
        filter.push(t, &[y])?;
    }
    let mut update = Vec::with_capacity(calls);
    let mut predict = Vec::with_capacity(calls);
    let mut sink = 0.0;
    for i in window..window + calls {
        let (t, y) = sample(i);
        let start = Instant::now();
        filter.push(t, &[y])?;
        update.push(start.elapsed().as_secs_f64());
        let start = Instant::now();
        sink += filter.estimate(t)?[0];
        predict.push(start.elapsed().as_secs_f64());
    }
    std::hint::black_box(sink);
    let (update_mean, update_std) = mean_std(&update);
    let (predict_mean, predict_std) = mean_std(&predict);
    let half = calls / 2;
    Ok(LatencyReport {
        window,
        calls,
        update_mean,
        update_std,
        predict_mean,
        predict_std,
        update_mean_first_half: mean(&update[..half.max(1).min(calls)]),
        update_mean_second_half: mean(&update[half..]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gravity_compensation_is_equilibrium() {
        let p = ManipulatorParams::default();
        for q in [[0.0, 0.0], [0.7, -1.2], [2.0, 3.0]] {
            let g = p.gravity(q);
            let a = dynamics(q, [0.0, 0.0], [g[0], g[1]], &p).unwrap();
            assert!(a[0].abs() < 1e-12 && a[1].abs() < 1e-12);
        }
    }

    #[test]
    fn mass_matrix_symmetric_positive_definite() {
        let p = ManipulatorParams::default();
        for i in 0..50 {
            let q = [i as f64 * 0.37, -(i as f64) * 0.91];
            let m = p.mass_matrix(q);
            assert_eq!(m, m.transpose());
            assert!(m[(0, 0)] > 0.0 && m.determinant() > 0.0);
        }
    }

    #[test]
    fn kinetic_energy_conserved_without_gravity_or_input() {
        let p = ManipulatorParams { g: 0.0, ..ManipulatorParams::default() };
        let mut x: State = [0.3, -0.4, 1.5, -2.0];
        let e0 = p.kinetic_energy([x[0], x[1]], [x[2], x[3]]);
        for _ in 0..1000 {
            x = integrate(x, [0.0, 0.0], 1e-3, 10, &p).unwrap();
        }
        let e1 = p.kinetic_energy([x[0], x[1]], [x[2], x[3]]);
        assert!(((e1 - e0) / e0).abs() < 1e-3, "{e0} -> {e1}");
    }

    #[test]
    fn reference_derivative_matches_difference() {
        let h = 1e-6;
        for t in [0.0, 1.0, 7.5] {
            let (a, _) = reference(t - h);
            let (b, _) = reference(t + h);
            let (_, d) = reference(t);
            for i in 0..2 {
                assert_relative_eq!((b[i] - a[i]) / (2.0 * h), d[i], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn replay_is_deterministic() {
        let cfg = ClosedLoopConfig { duration_s: 0.3, ..ClosedLoopConfig::default() };
        let a = run_closed_loop(&cfg, FilterMode::SwGp, 4).unwrap();
        let b = run_closed_loop(&cfg, FilterMode::SwGp, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 300);
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = ClosedLoopConfig { kp: -1e6, duration_s: 5.0, noise_std: 0.0, ..ClosedLoopConfig::default() };
        assert!(matches!(run_closed_loop(&cfg, FilterMode::None, 0), Err(Error::Unstable { .. })));
    }

    #[test]
    fn latency_report_shape() {
        let r = benchmark_latency(1, 100, 0).unwrap();
        assert_eq!(r.calls, 100);
        assert!(r.update_mean > 0.0 && r.predict_mean > 0.0);
    }
}
