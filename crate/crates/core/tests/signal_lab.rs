use swgp::baseline::Identity;
use swgp::signal::{
    bode_sweep, cutoff_crossing, generate, log_grid, mse_sweep, MseSweepConfig, NamedFactory, Noise, SignalKind,
    SignalSpec,
};
use swgp::{Hyperparameters, IirFilter, StepFilter, SwGpConfig, SwGpFilter};

fn fixed_swgp(l: f64) -> SwGpConfig {
    SwGpConfig {
        window: 200,
        initial: Hyperparameters::scalar(1.0, l, 0.1f64.sqrt()).unwrap(),
        adapt: false,
        ..SwGpConfig::default()
    }
}

fn crossing(l: f64) -> f64 {
    let factory = move || -> swgp::Result<Box<dyn StepFilter>> { Ok(Box::new(SwGpFilter::new(fixed_swgp(l))?)) };
    let pts: Vec<_> =
        bode_sweep(&factory, &log_grid(1.0, 300.0, 15), 1000.0, 200).unwrap().into_iter().map(|m| m.point).collect();
    cutoff_crossing(&pts).expect("response drops below -3 dB")
}

#[test]
fn gaussian_noise_variance() {
    let spec = SignalSpec { kind: SignalKind::Constant, amplitude: 0.0, ..SignalSpec::sine(1.0, 1000.0, 1000.0) }
        .with_noise(Noise::Gaussian { std: 0.1f64.sqrt() }, 2024);
    let s = generate(&spec).unwrap();
    assert_eq!(s.len(), 1_000_000);
    let mean = s.iter().map(|x| x.noisy).sum::<f64>() / s.len() as f64;
    let var = s.iter().map(|x| (x.noisy - mean).powi(2)).sum::<f64>() / (s.len() - 1) as f64;
    assert!((var - 0.1).abs() < 0.001, "{var}");
}

#[test]
fn swgp_cutoff_follows_lengthscale() {
    let f01 = crossing(0.1);
    assert!((13.0..=27.0).contains(&f01), "l = 0.1 crossing at {f01} Hz");
    let (f04, f001) = (crossing(0.4), crossing(0.01));
    assert!(f04 < f01 && f01 < f001, "{f04} {f01} {f001}");
}

#[test]
fn adaptive_swgp_beats_butterworth_above_its_cutoff() {
    let cfg = MseSweepConfig { freqs: vec![60.0], repetitions: 3, seed: 5, ..MseSweepConfig::default() };
    let filters = [
        NamedFactory::new("swgp", || Ok(Box::new(SwGpFilter::new(SwGpConfig::default())?) as Box<dyn StepFilter>)),
        NamedFactory::new("butterworth4", || {
            Ok(Box::new(IirFilter::butterworth4(20.0, 1000.0)?) as Box<dyn StepFilter>)
        }),
    ];
    let rows = mse_sweep(&filters, &cfg).unwrap();
    assert!(rows[0].mse_mean < rows[1].mse_mean, "{rows:?}");
}

#[test]
fn sweeps_are_reproducible() {
    let cfg = MseSweepConfig { freqs: vec![0.5, 7.0], repetitions: 2, seed: 11, ..MseSweepConfig::default() };
    let filters = [
        NamedFactory::new("identity", || Ok(Box::new(Identity) as Box<dyn StepFilter>)),
        NamedFactory::new("swgp", || {
            Ok(Box::new(SwGpFilter::new(SwGpConfig { window: 20, ..SwGpConfig::default() })?) as Box<dyn StepFilter>)
        }),
    ];
    let a = mse_sweep(&filters, &cfg).unwrap();
    let b = mse_sweep(&filters, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.iter().map(|r| r.filter_name.as_str()).collect::<Vec<_>>(), ["identity", "swgp", "identity", "swgp"]);
}
