use std::fs::File;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use swgp::analysis::{direct_error, error_decomposition, uniform_error_bound};
use swgp::robot::{
    benchmark_latency, compare_closed_loop, run_closed_loop, ClosedLoopConfig, FilterMode, VelocitySource,
    TRAJECTORY_COLUMNS,
};
use swgp::signal::{
    bode_sweep, cutoff_crossing, log_frequencies, log_grid, mse_sweep, DurationPolicy, MseSweepConfig, NamedFactory,
    Noise,
};
use swgp::swgp::RpropConfig;
use swgp::{FirFilter, Hyperparameters, IirFilter, StepFilter, SwGpConfig, SwGpFilter};

use crate::output::{num, sidecar, write_atomic, write_csv};
use crate::settings::{key, Key, Settings};
use crate::CliError;

pub const FILTERS: [&str; 5] = ["swgp", "butterworth4", "lowpass1", "moving-average", "savitzky-golay"];

fn swgp_keys(adapt: &'static str) -> Vec<Key> {
    vec![
        key("window", "200", "SW-GP window size"),
        key("sigma-f", "1", "initial signal std"),
        key("lengthscale", "0.1", "initial lengthscale in seconds"),
        key("sigma-on", "0.31622776601683794", "initial observation-noise std"),
        key("adapt", adapt, "adapt hyperparameters online"),
        key("decimation", "1", "refresh the posterior every k-th sample"),
        key("eta-plus", "1.2", "RPROP step growth factor"),
        key("eta-minus", "0.5", "RPROP step shrink factor"),
        key("delta-init", "0.01", "initial log-space step"),
        key("delta-min", "1e-6", "smallest log-space step"),
        key("delta-max", "0.5", "largest log-space step"),
    ]
}

fn baseline_keys() -> Vec<Key> {
    vec![
        key("cutoff-hz", "20", "cutoff of the IIR baselines"),
        key("fir-window", "200", "taps of the FIR baselines"),
        key("sg-order", "3", "Savitzky-Golay polynomial order"),
    ]
}

pub fn keys(cmd: &str) -> Vec<Key> {
    let mut k = match cmd {
        "filter" => vec![
            key("input", "", "input CSV with columns t,y1..yd"),
            key("out", "filtered.csv", "output CSV"),
            key("sample-period", "auto", "nominal sampling period in seconds; auto uses the mean spacing"),
        ],
        "bode" => vec![
            key("out", "bode.csv", "output CSV"),
            key("filter", "swgp", "filter to measure"),
            key("fs", "1000", "sampling rate in Hz"),
            key("fmin", "1", "lowest frequency in Hz"),
            key("fmax", "300", "highest frequency in Hz"),
            key("points", "15", "log-spaced frequency points"),
            key("freqs", "", "explicit comma-separated frequencies, overrides the grid"),
        ],
        "mse" => vec![
            key("out", "mse.csv", "output CSV"),
            key("seed", "0", "base noise seed"),
            key("filters", "swgp,butterworth4,lowpass1,moving-average,savitzky-golay", "filters to compare"),
            key("freqs", "", "comma-separated frequencies [default: 25 per decade over 0.01-100 Hz]"),
            key("reps", "20", "noise realisations per frequency"),
            key("duration", "1", "run length in seconds"),
            key("strict", "false", "use exactly --duration even below two periods"),
            key("noise-var", "0.1", "Gaussian noise variance"),
            key("fs", "1000", "sampling rate in Hz"),
            key("amplitude", "1", "sine amplitude"),
        ],
        "robot" => vec![
            key("out", "robot.csv", "trajectory CSV for the first seed"),
            key("seed", "0", "first noise seed"),
            key("reps", "20", "number of seeds"),
            key("mode", "swgp", "trajectory to write: swgp or none"),
            key("duration", "20", "simulated seconds"),
            key("noise-std", "0.1", "joint-angle measurement noise std"),
            key("window", "50", "SW-GP window size"),
            key("decimation", "3", "refresh the posterior every k-th tick"),
            key("sigma-f", "1", "initial signal std"),
            key("lengthscale", "0.1", "initial lengthscale in seconds"),
            key("sigma-on", "0.1", "initial observation-noise std"),
            key("kp", "100", "proportional gain"),
            key("kd", "10", "derivative gain"),
            key("fs", "1000", "control rate in Hz"),
            key("substeps", "10", "RK4 steps per control tick"),
            key("velocity", "filtered", "positions differentiated for velocity: filtered or raw"),
        ],
        "bench" => vec![
            key("out", "bench.csv", "output CSV"),
            key("seed", "0", "noise seed"),
            key("window", "50", "SW-GP window size"),
            key("calls", "10000", "timed update and predict calls"),
        ],
        "decompose" => vec![
            key("out", "decompose.csv", "output CSV"),
            key("seed", "0", "scenario seed"),
            key("scenarios", "100", "random windows to decompose"),
            key("window", "10", "samples per window"),
            key("sample-period", "0.01", "spacing of the samples in seconds"),
            key("noise-bound", "0.1", "uniform noise half-width"),
            key("sigma-f", "1", "signal std"),
            key("lengthscale", "0.1", "lengthscale in seconds"),
            key("sigma-on", "0.3", "observation-noise std"),
        ],
        other => unreachable!("unknown subcommand {other}"),
    };
    match cmd {
        "filter" => k.extend(swgp_keys("true")),
        "bode" => {
            k.extend(swgp_keys("false"));
            k.extend(baseline_keys());
        }
        "mse" => {
            k.extend(swgp_keys("true"));
            k.extend(baseline_keys());
        }
        _ => {}
    }
    k
}

pub fn about(cmd: &str) -> &'static str {
    match cmd {
        "filter" => "Filter a CSV of timestamped measurements with the adaptive SW-GP",
        "bode" => "Measure a filter's frequency response on clean sines",
        "mse" => "Compare filter MSE on noisy sines across frequencies",
        "robot" => "Run the noisy two-link manipulator loop with and without filtering",
        "bench" => "Time SW-GP updates and predictions",
        "decompose" => "Split SW-GP estimation errors into their additive terms",
        _ => unreachable!(),
    }
}

pub const COMMANDS: [&str; 6] = ["filter", "bode", "mse", "robot", "bench", "decompose"];

pub fn run(cmd: &str, s: &Settings) -> Result<String, CliError> {
    let out = PathBuf::from(s.str("out"));
    let summary = match cmd {
        "filter" => filter(s, &out)?,
        "bode" => bode(s, &out)?,
        "mse" => mse(s, &out)?,
        "robot" => robot(s, &out)?,
        "bench" => bench(s, &out)?,
        "decompose" => decompose(s, &out)?,
        _ => unreachable!(),
    };
    let echo = sidecar(&out, "config");
    write_atomic(&echo, s.echo().as_bytes())?;
    Ok(format!("{summary}\nwrote {} (resolved config in {})", out.display(), echo.display()))
}

fn hyper(s: &Settings) -> Result<Hyperparameters, CliError> {
    Ok(Hyperparameters::scalar(s.positive("sigma-f")?, s.positive("lengthscale")?, s.positive("sigma-on")?)?)
}

fn swgp_config(s: &Settings, sample_period: f64, dims: usize) -> Result<SwGpConfig, CliError> {
    let rprop = RpropConfig {
        eta_plus: s.positive("eta-plus")?,
        eta_minus: s.positive("eta-minus")?,
        delta_init: s.positive("delta-init")?,
        delta_min: s.positive("delta-min")?,
        delta_max: s.positive("delta-max")?,
    };
    rprop.validate().map_err(|e| CliError::Usage(format!("--eta-plus/--eta-minus/--delta-*: {e}")))?;
    Ok(SwGpConfig {
        window: s.count("window")?,
        sample_period,
        dims,
        initial: hyper(s)?,
        rprop,
        update_decimation: s.count("decimation")?,
        adapt: s.bool("adapt")?,
        ..SwGpConfig::default()
    })
}

fn factory<'a>(name: &str, s: &Settings, fs: f64) -> Result<NamedFactory<'a>, CliError> {
    Ok(match name {
        "swgp" => {
            let cfg = swgp_config(s, 1.0 / fs, 1)?;
            SwGpFilter::new(cfg.clone())?;
            NamedFactory::new(name, move || Ok(Box::new(SwGpFilter::new(cfg.clone())?) as Box<dyn StepFilter>))
        }
        "butterworth4" | "lowpass1" => {
            let fc = s.positive("cutoff-hz")?;
            if fc >= fs / 2.0 {
                return Err(CliError::Usage(format!("--cutoff-hz: {fc} Hz is not below Nyquist ({} Hz)", fs / 2.0)));
            }
            if name == "butterworth4" {
                NamedFactory::new(name, move || Ok(Box::new(IirFilter::butterworth4(fc, fs)?) as Box<dyn StepFilter>))
            } else {
                NamedFactory::new(name, move || {
                    Ok(Box::new(IirFilter::first_order_lowpass(fc, fs)?) as Box<dyn StepFilter>)
                })
            }
        }
        "moving-average" => {
            let n = s.count("fir-window")?;
            NamedFactory::new(name, move || Ok(Box::new(FirFilter::moving_average(n)?) as Box<dyn StepFilter>))
        }
        "savitzky-golay" => {
            let (n, order) = (s.count("fir-window")?, s.u64("sg-order")? as usize);
            FirFilter::savitzky_golay(n, order).map_err(|e| CliError::Usage(format!("--sg-order: {e}")))?;
            NamedFactory::new(name, move || Ok(Box::new(FirFilter::savitzky_golay(n, order)?) as Box<dyn StepFilter>))
        }
        other => {
            return Err(CliError::Usage(format!("unknown filter `{other}`; expected one of {}", FILTERS.join(", "))))
        }
    })
}

/// Timestamps and measurement rows of a `t,y1..yd` CSV.
pub struct Series {
    pub columns: usize,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

pub fn read_series(path: &Path) -> Result<Series, CliError> {
    let file = File::open(path).map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let usage = |e: csv::Error| CliError::Usage(format!("{}: {e}", path.display()));
    let header = rdr.headers().map_err(usage)?.clone();
    if header.len() < 2 {
        return Err(CliError::Usage(format!("{}: expected columns t,y1..yd", path.display())));
    }
    let mut series = Series { columns: header.len() - 1, times: Vec::new(), values: Vec::new() };
    for rec in rdr.records() {
        let rec = rec.map_err(usage)?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(rec.len());
        for (field, name) in rec.iter().zip(header.iter()) {
            let v = field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                CliError::Usage(format!("{}: line {line}: column {name}: invalid number `{field}`", path.display()))
            })?;
            row.push(v);
        }
        let t = row.remove(0);
        if let Some(&prev) = series.times.last() {
            if !(t > prev) {
                return Err(CliError::Usage(format!(
                    "{}: line {line}: time {t} does not increase after {prev}",
                    path.display()
                )));
            }
        }
        series.times.push(t);
        series.values.push(row);
    }
    if series.times.is_empty() {
        return Err(CliError::Usage(format!("{}: no samples", path.display())));
    }
    Ok(series)
}

fn filter(s: &Settings, out: &Path) -> Result<String, CliError> {
    let input = s.str("input");
    if input.is_empty() {
        return Err(CliError::Usage("--input: an input CSV is required".into()));
    }
    let series = read_series(Path::new(input))?;
    let n = series.times.len();
    let tau = match s.str("sample-period") {
        "auto" if n > 1 => (series.times[n - 1] - series.times[0]) / (n - 1) as f64,
        "auto" => 1.0,
        _ => s.positive("sample-period")?,
    };
    let mut f = SwGpFilter::new(swgp_config(s, tau, series.columns)?)?;
    let mut rows = Vec::with_capacity(n);
    for (t, y) in series.times.iter().zip(&series.values) {
        f.push(*t, y)?;
        let mut row = vec![num(*t)];
        row.extend(f.estimate(*t)?.into_iter().map(num));
        rows.push(row);
    }
    let header: Vec<String> =
        std::iter::once("t".to_string()).chain((1..=series.columns).map(|i| format!("x{i}_hat"))).collect();
    write_csv(out, &header.iter().map(String::as_str).collect::<Vec<_>>(), rows)?;

    let hp_path = sidecar(out, "hyper.csv");
    let hp_rows = (0..series.columns).map(|d| {
        let h = f.hyperparameters(d);
        vec![(d + 1).to_string(), num(h.sigma_f), num(h.lengthscales[0]), num(h.sigma_on)]
    });
    write_csv(&hp_path, &["dim", "sigma_f", "lengthscale", "sigma_on"], hp_rows)?;
    Ok(format!("filtered {n} samples x {} columns; final hyperparameters in {}", series.columns, hp_path.display()))
}

fn bode(s: &Settings, out: &Path) -> Result<String, CliError> {
    let fs = s.positive("fs")?;
    let freqs = match s.list("freqs")? {
        Some(f) => f,
        None => {
            let (lo, hi) = (s.positive("fmin")?, s.positive("fmax")?);
            if lo >= hi {
                return Err(CliError::Usage("--fmin must be below --fmax".into()));
            }
            log_grid(lo, hi, s.count("points")?)
        }
    };
    if let Some(f) = freqs.iter().find(|f| **f >= fs / 2.0) {
        return Err(CliError::Usage(format!("--freqs: {f} Hz is not below Nyquist ({} Hz)", fs / 2.0)));
    }
    let name = s.choice("filter", &FILTERS)?;
    let nf = factory(name, s, fs)?;
    // settle over one window for FIR filters and one second for IIR ones
    let settle = match name {
        "swgp" => s.count("window")?,
        "moving-average" | "savitzky-golay" => s.count("fir-window")?,
        _ => fs.round() as usize,
    };
    let pts = bode_sweep(nf.make.as_ref(), &freqs, fs, settle)?;
    write_csv(
        out,
        &["frequency_hz", "amplitude_ratio", "phase_rad", "residual"],
        pts.iter().map(|m| {
            vec![num(m.point.frequency_hz), num(m.point.amplitude_ratio), num(m.point.phase_rad), num(m.residual)]
        }),
    )?;
    let points: Vec<_> = pts.iter().map(|m| m.point).collect();
    Ok(match cutoff_crossing(&points) {
        Some(fc) => format!("{name}: -3 dB crossing at {fc:.3} Hz"),
        None => format!("{name}: no -3 dB crossing in the measured range"),
    })
}

fn mse(s: &Settings, out: &Path) -> Result<String, CliError> {
    let fs = s.positive("fs")?;
    let freqs = s.list("freqs")?.unwrap_or_else(|| log_frequencies(0.01, 100.0, 25));
    if let Some(f) = freqs.iter().find(|f| **f >= fs / 2.0) {
        return Err(CliError::Usage(format!("--freqs: {f} Hz is not below Nyquist ({} Hz)", fs / 2.0)));
    }
    let names: Vec<&str> = s.str("filters").split(',').map(str::trim).collect();
    let filters = names.iter().map(|n| factory(n, s, fs)).collect::<Result<Vec<_>, _>>()?;
    let cfg = MseSweepConfig {
        freqs,
        noise: Noise::Gaussian { std: s.non_negative("noise-var")?.sqrt() },
        duration_s: s.positive("duration")?,
        duration_policy: if s.bool("strict")? { DurationPolicy::Strict } else { DurationPolicy::AtLeastPeriods(2.0) },
        repetitions: s.count("reps")?,
        fs_hz: fs,
        amplitude: s.f64("amplitude")?,
        seed: s.u64("seed")?,
    };
    let rows = mse_sweep(&filters, &cfg)?;
    write_csv(
        out,
        &["frequency_hz", "filter", "mse_mean", "mse_std"],
        rows.iter().map(|r| vec![num(r.frequency_hz), r.filter_name.clone(), num(r.mse_mean), num(r.mse_std)]),
    )?;
    Ok(format!("{} frequencies x {} filters x {} repetitions", cfg.freqs.len(), filters.len(), cfg.repetitions))
}

fn robot(s: &Settings, out: &Path) -> Result<String, CliError> {
    let cfg = ClosedLoopConfig {
        kp: s.non_negative("kp")?,
        kd: s.non_negative("kd")?,
        fs_hz: s.positive("fs")?,
        noise_std: s.non_negative("noise-std")?,
        window: s.count("window")?,
        update_decimation: s.count("decimation")?,
        duration_s: s.positive("duration")?,
        repetitions: s.count("reps")?,
        substeps: s.count("substeps")?,
        velocity: match s.choice("velocity", &["filtered", "raw"])? {
            "raw" => VelocitySource::Raw,
            _ => VelocitySource::Filtered,
        },
        initial: hyper(s)?,
        ..ClosedLoopConfig::default()
    };
    let mode = match s.choice("mode", &["swgp", "none"])? {
        "none" => FilterMode::None,
        _ => FilterMode::SwGp,
    };
    let seed = s.u64("seed")?;
    let traj = run_closed_loop(&cfg, mode, seed)?;
    write_csv(
        out,
        &TRAJECTORY_COLUMNS,
        traj.iter().map(|r| {
            [r.t, r.q[0], r.q[1], r.qd[0], r.qd[1], r.q_meas[0], r.q_meas[1], r.q_filt[0], r.q_filt[1], r.u[0], r.u[1]]
                .into_iter()
                .map(num)
                .collect()
        }),
    )?;

    let seeds: Vec<u64> = (0..cfg.repetitions as u64).map(|i| seed.wrapping_add(i)).collect();
    let results = seeds.par_iter().map(|&k| compare_closed_loop(&cfg, k)).collect::<Result<Vec<_>, _>>()?;
    let summary = sidecar(out, "summary.csv");
    write_csv(
        &summary,
        &["seed", "mse_filtered", "mse_unfiltered"],
        results.iter().map(|c| vec![c.seed.to_string(), num(c.mse_filtered), num(c.mse_unfiltered)]),
    )?;
    let wins = results.iter().filter(|c| c.mse_filtered < c.mse_unfiltered).count();
    Ok(format!(
        "filtered loop beat unfiltered loop in {wins} of {} seeds; summary in {}",
        results.len(),
        summary.display()
    ))
}

fn bench(s: &Settings, out: &Path) -> Result<String, CliError> {
    let r = benchmark_latency(s.count("window")?, s.count("calls")?, s.u64("seed")?)?;
    write_csv(
        out,
        &[
            "window",
            "calls",
            "update_mean_s",
            "update_std_s",
            "predict_mean_s",
            "predict_std_s",
            "update_mean_first_half_s",
            "update_mean_second_half_s",
        ],
        [vec![
            r.window.to_string(),
            r.calls.to_string(),
            num(r.update_mean),
            num(r.update_std),
            num(r.predict_mean),
            num(r.predict_std),
            num(r.update_mean_first_half),
            num(r.update_mean_second_half),
        ]],
    )?;
    Ok(format!(
        "window {}: update {:.4} ms, predict {:.4} ms over {} calls",
        r.window,
        r.update_mean * 1e3,
        r.predict_mean * 1e3,
        r.calls
    ))
}

/// Sum of three random sines and its Lipschitz constant.
struct Scenario {
    terms: [(f64, f64, f64); 3],
}

impl Scenario {
    fn random(r: &mut ChaCha8Rng) -> Self {
        let mut term =
            || (r.random_range(-1.0..1.0), r.random_range(0.1..5.0), r.random_range(0.0..std::f64::consts::TAU));
        Self { terms: [term(), term(), term()] }
    }

    fn at(&self, t: f64) -> f64 {
        self.terms.iter().map(|(a, f, p)| a * (std::f64::consts::TAU * f * t + p).sin()).sum()
    }

    fn lipschitz(&self) -> f64 {
        self.terms.iter().map(|(a, f, _)| a.abs() * std::f64::consts::TAU * f).sum()
    }
}

fn decompose(s: &Settings, out: &Path) -> Result<String, CliError> {
    let h = hyper(s)?;
    let (n, tau, bound) = (s.count("window")?, s.positive("sample-period")?, s.non_negative("noise-bound")?);
    let mut r = ChaCha8Rng::seed_from_u64(s.u64("seed")?);
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for k in 0..s.count("scenarios")? {
        let sig = Scenario::random(&mut r);
        let t0 = r.random_range(0.0..10.0);
        let times: Vec<f64> = (0..n).map(|i| t0 + i as f64 * tau).collect();
        let truth: Vec<f64> = times.iter().map(|&t| sig.at(t)).collect();
        let noise: Vec<f64> = (0..n).map(|_| if bound > 0.0 { r.random_range(-bound..=bound) } else { 0.0 }).collect();
        let t = times[n - 1] + r.random_range(0.0..1.0) * tau;
        let targets: Vec<f64> = truth.iter().zip(&noise).map(|(x, e)| x + e).collect();
        let d = error_decomposition(&times, &truth, &noise, &h, t, sig.at(t))?;
        let direct = direct_error(&times, &targets, &h, t, sig.at(t))?;
        let c = uniform_error_bound(&times, &targets, truth[0], &h, bound, tau, sig.lipschitz())?;
        worst = worst.max((d.total() - direct).abs());
        rows.push(vec![
            k.to_string(),
            num(t),
            num(d.delta_t),
            num(d.prior_attenuation),
            num(d.signal_variation),
            num(d.noise_passthrough),
            num(d.total()),
            num(direct),
            num(c.value),
        ]);
    }
    let count = rows.len();
    write_csv(
        out,
        &[
            "scenario",
            "t",
            "delta_t",
            "prior_attenuation",
            "signal_variation",
            "noise_passthrough",
            "total",
            "direct_error",
            "bound",
        ],
        rows,
    )?;
    Ok(format!("{count} scenarios, max |total - direct_error| = {worst:.2e}"))
}
