//! Statistical properties checked by Monte Carlo over many seeds.

use rydbeat::dynamics::{add_noise, intensity_trace, Channel, Emitter, EmitterSet, InstrumentResponse, NoiseModel, TimeTrace};
use rydbeat::fitting::{fit_fringe_slice, fit_lifetime, FringeModel, IrfHint, LifetimeFitOptions};

const SEEDS: u64 = 60;

fn clean_trace() -> TimeTrace {
    let set = EmitterSet::new(vec![Emitter {
        state: "4S".parse().unwrap(),
        energy_mev: 0.0,
        lifetime_ps: 5.7,
        amplitude: 30.0,
        phase: 0.0,
    }])
    .unwrap();
    let t: Vec<f64> = (0..=1000).map(|i| -20.0 + i as f64 * 0.1).collect();
    intensity_trace(&set, &t, &Channel::Unbounded, Some(&InstrumentResponse::default())).unwrap()
}

fn mean_sigma(clean: &[f64], noise: f64, fit: impl Fn(Vec<f64>) -> f64) -> f64 {
    (0..SEEDS)
        .map(|seed| fit(add_noise(clean, NoiseModel::Gaussian { sigma: noise }, 1000 + seed).unwrap()))
        .sum::<f64>()
        / SEEDS as f64
}

#[test]
fn doubling_noise_doubles_lifetime_sigma() {
    let clean = clean_trace();
    let fit = |y: Vec<f64>| {
        let tr = TimeTrace::new(clean.t.clone(), y).unwrap();
        fit_lifetime(&tr, IrfHint::Free, &LifetimeFitOptions::default())
            .unwrap()
            .sigma("tau")
            .unwrap()
    };
    let peak = clean.intensity.iter().cloned().fold(0.0, f64::max);
    let s1 = mean_sigma(&clean.intensity, 0.01 * peak, fit);
    let s2 = mean_sigma(&clean.intensity, 0.02 * peak, fit);
    let ratio = s2 / s1;
    assert!((ratio - 2.0).abs() <= 0.4, "σ(τ) ratio {ratio} ({s1} → {s2})");
}

#[test]
fn doubling_noise_doubles_fringe_contrast_sigma() {
    let m = FringeModel { a: 1.0, x0: 200.0, sigma: 70.0, c: 0.5, k: 0.8, phi: 0.3 };
    let x: Vec<f64> = (0..400).map(|i| i as f64).collect();
    let clean: Vec<f64> = x.iter().map(|&x| m.eval(x)).collect();
    let fit = |y: Vec<f64>| fit_fringe_slice(&x, &y).unwrap().sigma("C").unwrap();
    let s1 = mean_sigma(&clean, 0.01, fit);
    let s2 = mean_sigma(&clean, 0.02, fit);
    let ratio = s2 / s1;
    assert!((ratio - 2.0).abs() <= 0.4, "σ(C) ratio {ratio} ({s1} → {s2})");
}

/// The reported parameter sigma matches the scatter of the estimates.
#[test]
fn lifetime_sigma_matches_scatter() {
    let clean = clean_trace();
    let peak = clean.intensity.iter().cloned().fold(0.0, f64::max);
    let (taus, sigmas): (Vec<f64>, Vec<f64>) = (0..SEEDS)
        .map(|seed| {
            let y = add_noise(&clean.intensity, NoiseModel::Gaussian { sigma: 0.02 * peak }, 5000 + seed).unwrap();
            let f = fit_lifetime(&TimeTrace::new(clean.t.clone(), y).unwrap(), IrfHint::Free, &LifetimeFitOptions::default()).unwrap();
            (f.value("tau").unwrap(), f.sigma("tau").unwrap())
        })
        .unzip();
    let n = taus.len() as f64;
    let mean = taus.iter().sum::<f64>() / n;
    let scatter = (taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let reported = sigmas.iter().sum::<f64>() / n;
    assert!((scatter / reported - 1.0).abs() < 0.35, "scatter {scatter} vs reported {reported}");
    assert!((mean - 5.7).abs() < 3.0 * scatter, "mean {mean}");
}
