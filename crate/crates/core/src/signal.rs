//! Test signals, frequency-response measurement and MSE sweeps.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;

use crate::baseline::StepFilter;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum SignalKind {
    Sine {
        frequency_hz: f64,
    },
    /// `sin(2π (f0 t + ½ rate t²))`
    Chirp {
        start_hz: f64,
        rate_hz_per_s: f64,
    },
    Constant,
    /// Pre-sampled values at `fs_hz`; `duration_s` is ignored.
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Noise {
    None,
    Gaussian {
        std: f64,
    },
    /// Uniform on `[-bound, bound]`.
    Uniform {
        bound: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub kind: SignalKind,
    pub amplitude: f64,
    pub fs_hz: f64,
    pub duration_s: f64,
    pub noise: Noise,
    pub seed: u64,
}

impl SignalSpec {
    pub fn sine(frequency_hz: f64, fs_hz: f64, duration_s: f64) -> Self {
        Self { kind: SignalKind::Sine { frequency_hz }, amplitude: 1.0, fs_hz, duration_s, noise: Noise::None, seed: 0 }
    }

    pub fn with_noise(mut self, noise: Noise, seed: u64) -> Self {
        self.noise = noise;
        self.seed = seed;
        self
    }

    fn max_frequency(&self) -> f64 {
        match self.kind {
            SignalKind::Sine { frequency_hz } => frequency_hz,
            SignalKind::Chirp { start_hz, rate_hz_per_s } => {
                start_hz.abs().max((start_hz + rate_hz_per_s * self.duration_s).abs())
            }
            SignalKind::Constant | SignalKind::Custom(_) => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.fs_hz > 0.0 && self.fs_hz.is_finite()) {
            return bad(format!("sampling rate {} must be positive", self.fs_hz));
        }
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration {} must be non-negative", self.duration_s));
        }
        if !(self.max_frequency() < self.fs_hz / 2.0) {
            return bad(format!("signal frequency {} Hz exceeds Nyquist", self.max_frequency()));
        }
        match self.noise {
            Noise::Gaussian { std: s } | Noise::Uniform { bound: s } if !(s >= 0.0 && s.is_finite()) => {
                bad(format!("noise scale {s} must be non-negative"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub clean: f64,
    pub noise: f64,
    /// `clean + noise`
    pub noisy: f64,
}

/// Seeded noise source; ChaCha is counter based, so streams are reproducible
/// across platforms.
enum NoiseSource {
    Silent,
    Gaussian(Normal<f64>, ChaCha8Rng),
    Uniform(Uniform<f64>, ChaCha8Rng),
}

impl NoiseSource {
    fn new(noise: Noise, seed: u64) -> Result<Self> {
        let rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(match noise {
            Noise::None => Self::Silent,
            Noise::Gaussian { std: 0.0 } => Self::Silent,
            Noise::Uniform { bound: 0.0 } => Self::Silent,
            Noise::Gaussian { std } => {
                Self::Gaussian(Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?, rng)
            }
            Noise::Uniform { bound } => Self::Uniform(
                Uniform::new_inclusive(-bound, bound).map_err(|e| Error::InvalidArgument(e.to_string()))?,
                rng,
            ),
        })
    }

    fn next(&mut self) -> f64 {
        match self {
            Self::Silent => 0.0,
            Self::Gaussian(d, rng) => d.sample(rng),
            Self::Uniform(d, rng) => d.sample(rng),
        }
    }
}

/// Samples the signal at `t_i = i / fs`.
pub fn generate(spec: &SignalSpec) -> Result<Vec<Sample>> {
    spec.validate()?;
    let mut noise = NoiseSource::new(spec.noise, spec.seed)?;
    let n = match &spec.kind {
        SignalKind::Custom(values) => values.len(),
        _ => (spec.duration_s * spec.fs_hz).round() as usize,
    };
    let a = spec.amplitude;
    Ok((0..n)
        .map(|i| {
            let t = i as f64 / spec.fs_hz;
            let clean = match &spec.kind {
                SignalKind::Sine { frequency_hz } => a * (2.0 * PI * frequency_hz * t).sin(),
                SignalKind::Chirp { start_hz, rate_hz_per_s } => {
                    a * (2.0 * PI * (start_hz * t + 0.5 * rate_hz_per_s * t * t)).sin()
                }
                SignalKind::Constant => a,
                SignalKind::Custom(values) => a * values[i],
            };
            let e = noise.next();
            Sample { t, clean, noise: e, noisy: clean + e }
        })
        .collect())
}

/// Steady-state gain and phase of a filter at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodePoint {
    pub frequency_hz: f64,
    pub amplitude_ratio: f64,
    /// In `(−π, π]`.
    pub phase_rad: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodeMeasurement {
    pub point: BodePoint,
    /// RMS of the sinusoid-fit residual relative to the fitted amplitude.
    pub residual: f64,
}

/// Residual above which an output is not considered sinusoidal.
pub const SINUSOID_RESIDUAL_LIMIT: f64 = 0.2;
/// Shortest measurement window, in seconds.
pub const MIN_MEASURE_S: f64 = 0.5;

impl BodeMeasurement {
    pub fn is_sinusoidal(&self) -> bool {
        self.residual <= SINUSOID_RESIDUAL_LIMIT
    }
}

/// Transient to discard before measuring: two periods or one full window,
/// whichever is longer.
pub fn settle_time(f_hz: f64, window: usize, fs_hz: f64) -> f64 {
    (2.0 / f_hz).max(window as f64 / fs_hz)
}

pub fn measure_time(f_hz: f64) -> f64 {
    (2.0 / f_hz).max(MIN_MEASURE_S)
}

fn wrap_phase(p: f64) -> f64 {
    let mut p = p.rem_euclid(2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    }
    p
}

/// Drives `filter` with `sin(2πft)` sampled at `fs_hz` and fits
/// `A sin(2πft + φ)` to the output after `settle_s`.
pub fn measure_response(
    filter: &mut dyn StepFilter,
    f_hz: f64,
    fs_hz: f64,
    settle_s: f64,
    measure_s: f64,
) -> Result<BodeMeasurement> {
    if !(f_hz > 0.0 && f_hz < fs_hz / 2.0) {
        return Err(Error::InvalidArgument(format!("frequency {f_hz} Hz outside (0, fs/2)")));
    }
    if !(measure_s * f_hz >= 2.0 - 1e-9) {
        return Err(Error::InvalidArgument(format!(
            "measurement window {measure_s} s covers fewer than two periods of {f_hz} Hz"
        )));
    }
    let w = 2.0 * PI * f_hz;
    let skip = (settle_s * fs_hz).ceil() as usize;
    let total = skip + (measure_s * fs_hz).round() as usize;
    // normal equations for y ≈ a sin + b cos
    let (mut ss, mut sc, mut cc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut kept = Vec::with_capacity(total - skip);
    for i in 0..total {
        let t = i as f64 / fs_hz;
        let y = filter.step(t, (w * t).sin())?;
        if i >= skip {
            let (s, c) = (w * t).sin_cos();
            ss += s * s;
            sc += s * c;
            cc += c * c;
            ys += y * s;
            yc += y * c;
            kept.push((s, c, y));
        }
    }
    let det = ss * cc - sc * sc;
    let a = (ys * cc - yc * sc) / det;
    let b = (yc * ss - ys * sc) / det;
    let amplitude = a.hypot(b);
    let rss: f64 = kept.iter().map(|(s, c, y)| (y - a * s - b * c).powi(2)).sum();
    let rms = (rss / kept.len() as f64).sqrt();
    let residual = if amplitude > 0.0 {
        rms / amplitude
    } else if rms == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(BodeMeasurement {
        point: BodePoint { frequency_hz: f_hz, amplitude_ratio: amplitude, phase_rad: wrap_phase(b.atan2(a)) },
        residual,
    })
}

/// Builds a fresh filter for each independent run.
pub type FilterFactory<'a> = dyn Fn() -> Result<Box<dyn StepFilter>> + Sync + 'a;

/// Measures the response at each frequency, one fresh filter per point.
/// `window` sets the minimum settle time.
pub fn bode_sweep(
    factory: &FilterFactory<'_>,
    freqs: &[f64],
    fs_hz: f64,
    window: usize,
) -> Result<Vec<BodeMeasurement>> {
    freqs
        .par_iter()
        .map(|&f| {
            let mut filter = factory()?;
            measure_response(filter.as_mut(), f, fs_hz, settle_time(f, window, fs_hz), measure_time(f))
        })
        .collect()
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count).map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64)).collect()
}

/// Log-spaced grid with `per_decade` points per decade.
pub fn log_frequencies(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    log_grid(lo, hi, (decades * per_decade as f64).round() as usize + 1)
}

/// First −3 dB crossing, interpolated in log-log coordinates.
pub fn cutoff_crossing(points: &[BodePoint]) -> Option<f64> {
    let mut pts: Vec<_> = points.to_vec();
    pts.sort_by(|a, b| a.frequency_hz.total_cmp(&b.frequency_hz));
    let level = 0.5f64.sqrt();
    pts.windows(2).find_map(|w| {
        let (p, q) = (w[0], w[1]);
        if p.amplitude_ratio >= level && q.amplitude_ratio < level {
            let (lf0, lf1) = (p.frequency_hz.ln(), q.frequency_hz.ln());
            let (la0, la1) = (p.amplitude_ratio.ln(), q.amplitude_ratio.max(1e-300).ln());
            Some((lf0 + (level.ln() - la0) * (lf1 - lf0) / (la1 - la0)).exp())
        } else {
            None
        }
    })
}

/// A filter factory with a display name.
pub struct NamedFactory<'a> {
    pub name: String,
    pub make: Box<FilterFactory<'a>>,
}

impl<'a> NamedFactory<'a> {
    pub fn new(name: impl Into<String>, make: impl Fn() -> Result<Box<dyn StepFilter>> + Sync + 'a) -> Self {
        Self { name: name.into(), make: Box::new(make) }
    }
}

/// How long each sweep run lasts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DurationPolicy {
    /// Exactly the configured duration.
    Strict,
    /// At least this many periods of the test frequency.
    AtLeastPeriods(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseSweepConfig {
    pub freqs: Vec<f64>,
    pub noise: Noise,
    pub duration_s: f64,
    pub duration_policy: DurationPolicy,
    pub repetitions: usize,
    pub fs_hz: f64,
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for MseSweepConfig {
    fn default() -> Self {
        Self {
            freqs: log_frequencies(0.01, 100.0, 25),
            noise: Noise::Gaussian { std: 0.1f64.sqrt() },
            duration_s: 1.0,
            duration_policy: DurationPolicy::AtLeastPeriods(2.0),
            repetitions: 20,
            fs_hz: 1000.0,
            amplitude: 1.0,
            seed: 0,
        }
    }
}

impl MseSweepConfig {
    pub fn run_duration(&self, f_hz: f64) -> f64 {
        match self.duration_policy {
            DurationPolicy::Strict => self.duration_s,
            DurationPolicy::AtLeastPeriods(p) => self.duration_s.max(p / f_hz),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseRow {
    pub frequency_hz: f64,
    pub filter_name: String,
    pub mse_mean: f64,
    /// Sample standard deviation across repetitions (0 for a single run).
    pub mse_std: f64,
}

/// SplitMix64 finalizer, used to derive independent per-run seeds.
pub fn mix_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z =
        base.wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15)).wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mean squared error of `filter` output against the clean signal.
pub fn run_mse(filter: &mut dyn StepFilter, samples: &[Sample]) -> Result<f64> {
    let mut acc = 0.0;
    for s in samples {
        let y = filter.step(s.t, s.noisy)?;
        acc += (y - s.clean).powi(2);
    }
    Ok(acc / samples.len().max(1) as f64)
}

/// Runs every filter on the same noisy sine at each frequency, repeated with
/// independent noise, and reports MSE against the clean signal.
///
/// Rows are ordered by frequency, then by filter order.
pub fn mse_sweep(filters: &[NamedFactory<'_>], cfg: &MseSweepConfig) -> Result<Vec<MseRow>> {
    if cfg.repetitions == 0 {
        return Err(Error::InvalidArgument("repetitions must be at least 1".into()));
    }
    let jobs: Vec<(usize, usize)> =
        (0..cfg.freqs.len()).flat_map(|fi| (0..cfg.repetitions).map(move |r| (fi, r))).collect();
    let results: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(fi, rep)| {
            let f = cfg.freqs[fi];
            let spec = SignalSpec {
                kind: SignalKind::Sine { frequency_hz: f },
                amplitude: cfg.amplitude,
                fs_hz: cfg.fs_hz,
                duration_s: cfg.run_duration(f),
                noise: cfg.noise,
                seed: mix_seed(cfg.seed, fi as u64, rep as u64),
            };
            let samples = generate(&spec)?;
            filters
                .iter()
                .map(|nf| {
                    let mut filter = (nf.make)()?;
                    run_mse(filter.as_mut(), &samples)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(cfg.freqs.len() * filters.len());
    for (fi, &f) in cfg.freqs.iter().enumerate() {
        let runs = &results[fi * cfg.repetitions..(fi + 1) * cfg.repetitions];
        for (k, nf) in filters.iter().enumerate() {
            let vals: Vec<f64> = runs.iter().map(|r| r[k]).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let std = if vals.len() > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            rows.push(MseRow { frequency_hz: f, filter_name: nf.name.clone(), mse_mean: mean, mse_std: std });
        }
    }
    Ok(rows)
}
