use serde::{Deserialize, Serialize};
use libm::erfc;

use super::lsq::{least_squares, Data, LsqOptions, ParamSpec};
use super::{FitFlag, FitResult};
use crate::dynamics::TimeTrace;
use crate::error::{Error, Result};
use crate::units::fwhm_to_sigma;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
/// Above this argument `erfcx` switches from `exp(z²)·erfc(z)` to the
/// continued fraction.
const ERFCX_SWITCH: f64 = 5.0;

/// Scaled complementary error function `exp(z²)·erfc(z)`.
pub fn erfcx(z: f64) -> f64 {
    if z < ERFCX_SWITCH {
        return (z * z).exp() * erfc(z);
    }
    // erfc(z) = e^{−z²}/√π · 1/(z + ½/(z + 1/(z + 3/2/(z + …)))), evaluated
    // with the modified Lentz algorithm.
    let tiny = 1e-300;
    let mut f = z;
    let mut c = z;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64 / 2.0;
        d = z + a * d;
        d = if d.abs() < tiny { 1.0 / tiny } else { 1.0 / d };
        c = z + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / (f * std::f64::consts::PI.sqrt())
}

/// Gaussian instrument response convolved with a one-sided exponential
/// decay, plus an optional prompt Gaussian at `t0` and a flat baseline.
/// `amp` is the area of the decay component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmgModel {
    pub t0: f64,
    pub sigma: f64,
    pub tau: f64,
    pub amp: f64,
    #[serde(default)]
    pub baseline: f64,
    #[serde(default)]
    pub prompt_amp: f64,
}

impl EmgModel {
    pub const PARAMS: [&'static str; 6] = ["t0", "sigma", "tau", "amp", "baseline", "prompt_amp"];

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !(self.tau > 0.0) || !(self.amp >= 0.0) || !self.t0.is_finite() {
            return Err(Error::invalid(format!(
                "EMG needs sigma > 0, tau > 0, amp >= 0: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn from_params(p: &[f64]) -> Self {
        Self {
            t0: p[0],
            sigma: p[1],
            tau: p[2],
            amp: p[3],
            baseline: p[4],
            prompt_amp: p[5],
        }
    }

    pub fn from_fit(fit: &FitResult) -> Result<Self> {
        Ok(Self {
            t0: fit.value("t0")?,
            sigma: fit.value("sigma")?,
            tau: fit.value("tau")?,
            amp: fit.value("amp")?,
            baseline: fit.value("baseline")?,
            prompt_amp: fit.value("prompt_amp")?,
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        emg_eval(self, t)
    }
}

/// Closed-form EMG, stable for every sign of the erfc argument.
pub fn emg_eval(m: &EmgModel, t: f64) -> f64 {
    let u = t - m.t0;
    let z = m.sigma / (SQRT_2 * m.tau) - u / (SQRT_2 * m.sigma);
    let gauss = (-0.5 * (u / m.sigma).powi(2)).exp();
    let decay = if z < 0.0 {
        (0.5 * (m.sigma / m.tau).powi(2) - u / m.tau).exp() * erfc(z)
    } else {
        // exp(σ²/2τ² − u/τ)·erfc(z) = exp(−u²/2σ²)·erfcx(z)
        gauss * erfcx(z)
    };
    m.amp / (2.0 * m.tau) * decay + m.prompt_amp * gauss + m.baseline
}

/// What is known about the instrument response, as a FWHM in ps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", content = "fwhm_ps", rename_all = "snake_case")]
pub enum IrfHint {
    /// Width fitted from a 1 ps (σ) start.
    #[default]
    Free,
    /// Width fitted from the given start.
    Initial(f64),
    /// Width held at the given value.
    Fixed(f64),
}

/// Per-point weights for trace fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Unit,
    /// σ = √counts, floored at one count.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LifetimeFitOptions {
    pub weighting: Weighting,
    /// Fit a prompt (SHG) Gaussian at `t0`.
    pub prompt: bool,
    /// Fit a constant baseline.
    pub baseline: bool,
    pub max_iterations: usize,
}

impl Default for LifetimeFitOptions {
    fn default() -> Self {
        Self {
            weighting: Weighting::Unit,
            prompt: false,
            baseline: true,
            max_iterations: LsqOptions::default().max_iterations,
        }
    }
}

/// Tail slope estimate of the decay time from `ln(y − baseline)` between 80%
/// and 5% of the peak, beyond two IRF widths after the peak.
fn tail_tau(trace: &TimeTrace, peak: usize, baseline: f64, sigma: f64) -> Option<f64> {
    let top = trace.intensity[peak] - baseline;
    let t_start = trace.t[peak] + 2.0 * sigma;
    let pts: Vec<(f64, f64)> = trace
        .t
        .iter()
        .zip(&trace.intensity)
        .skip(peak)
        .filter(|(&t, &y)| t >= t_start && y - baseline > 0.05 * top && y - baseline < 0.8 * top)
        .map(|(&t, &y)| (t, (y - baseline).ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let slope = sxy / sxx;
    (slope < 0.0).then(|| -1.0 / slope)
}

/// Fits an [`EmgModel`] to a decay trace and returns `tau` with its fit
/// uncertainty.
///
/// Starting values come from the data: `t0` one IRF width before the peak,
/// `tau` from the log-slope of the tail, `amp` from the integral. A decay
/// time that collapses below the IRF width, or whose uncertainty exceeds its
/// value, is flagged [`FitFlag::Unconstrained`] and reported as not
/// converged.
pub fn fit_lifetime(trace: &TimeTrace, irf: IrfHint, options: &LifetimeFitOptions) -> Result<FitResult> {
    let n = trace.len();
    if n < 8 {
        return Err(Error::InsufficientData { needed: 8, got: n });
    }
    let peak = trace.peak_index();
    if peak as f64 > 0.8 * (n - 1) as f64 {
        return Err(Error::InsufficientCoverage(format!(
            "intensity maximum at {:.3} ps lies in the last 20% of the window ending at {:.3} ps",
            trace.t[peak],
            trace.t[n - 1]
        )));
    }
    let (sigma0, sigma_fixed) = match irf {
        IrfHint::Free => (1.0, false),
        IrfHint::Initial(f) | IrfHint::Fixed(f) => {
            if !(f > 0.0) || !f.is_finite() {
                return Err(Error::invalid(format!("IRF FWHM must be positive, got {f}")));
            }
            (fwhm_to_sigma(f), matches!(irf, IrfHint::Fixed(_)))
        }
    };
    let mut sorted = trace.intensity.clone();
    sorted.sort_by(f64::total_cmp);
    let baseline0 = sorted[n / 50];
    let top = trace.intensity[peak] - baseline0;
    if !(top > 0.0) {
        return Err(Error::invalid("trace has no signal above its baseline"));
    }
    let span = trace.t[n - 1] - trace.t[0];
    let tau0 = tail_tau(trace, peak, baseline0, sigma0)
        .unwrap_or((trace.t[n - 1] - trace.t[peak]) / 5.0)
        .clamp(trace.dt(), span);
    let area = trace
        .intensity
        .iter()
        .map(|y| (y - baseline0).max(0.0))
        .sum::<f64>()
        * trace.dt();

    let mut specs = vec![
        ParamSpec::free("t0", trace.t[peak] - sigma0),
        if sigma_fixed {
            ParamSpec::fixed("sigma", sigma0)
        } else {
            ParamSpec::positive("sigma", sigma0)
        },
        ParamSpec::positive("tau", tau0),
        ParamSpec::positive("amp", area.max(f64::MIN_POSITIVE)),
        if options.baseline {
            ParamSpec::free("baseline", baseline0)
        } else {
            ParamSpec::fixed("baseline", 0.0)
        },
        if options.prompt {
            ParamSpec::positive("prompt_amp", 0.01 * top)
        } else {
            ParamSpec::fixed("prompt_amp", 0.0)
        },
    ];
    // Sigma of the IRF must stay well inside the window.
    specs[1].upper = if sigma_fixed { f64::INFINITY } else { span };
    if !sigma_fixed && specs[1].init >= span {
        specs[1].init = span / 2.0;
    }
    let weights: Option<Vec<f64>> = match options.weighting {
        Weighting::Unit => None,
        Weighting::Poisson => Some(trace.intensity.iter().map(|&y| y.max(1.0).sqrt()).collect()),
    };
    let mut data = Data::new(&trace.t, &trace.intensity);
    if let Some(w) = &weights {
        data = data.with_sigma(w);
    }
    let lsq = LsqOptions {
        max_iterations: options.max_iterations,
        ..LsqOptions::default()
    };
    let model = |p: &[f64], t: f64| emg_eval(&EmgModel::from_params(p), t);
    let mut fit = least_squares(model, data, &specs, &lsq)?.named("emg");
    let (tau, tau_sigma, sigma) = (fit.value("tau")?, fit.sigma("tau")?, fit.value("sigma")?);
    if tau < 0.05 * sigma || tau_sigma > tau || !tau_sigma.is_finite() {
        fit.converged = false;
        fit.flag(FitFlag::Unconstrained);
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{add_noise, intensity_trace, Channel, Emitter, EmitterSet, InstrumentResponse, NoiseModel, UniformGrid};
    use crate::states::StateId;
    use proptest::prelude::*;

    /// Independent oracle: Simpson's rule on a 1 fs grid of
    /// ∫₀^∞ (amp/τ)e^{−s/τ} g(t − t0 − s) ds.
    fn brute_force(m: &EmgModel, t: f64) -> f64 {
        let u = t - m.t0;
        let lo = (u - 12.0 * m.sigma).max(0.0);
        let hi = (u + 12.0 * m.sigma).max(lo);
        if hi <= lo {
            return m.baseline;
        }
        let mut n = ((hi - lo) / 1e-3).ceil() as usize;
        n += n % 2;
        let h = (hi - lo) / n as f64;
        let norm = 1.0 / (m.sigma * std::f64::consts::TAU.sqrt());
        let f = |s: f64| (m.amp / m.tau) * (-s / m.tau).exp() * norm * (-0.5 * ((u - s) / m.sigma).powi(2)).exp();
        let mut acc = f(lo) + f(hi);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * h);
        }
        acc * h / 3.0 + m.baseline
    }

    fn model(t0: f64, sigma: f64, tau: f64) -> EmgModel {
        EmgModel {
            t0,
            sigma,
            tau,
            amp: 1.0,
            baseline: 0.0,
            prompt_amp: 0.0,
        }
    }

    #[test]
    fn delta_irf_limit() {
        let tau = 5.0;
        let m = EmgModel {
            baseline: 0.2,
            ..model(1.0, 1e-4 * tau, tau)
        };
        for t in [1.5, 3.0, 10.0, 30.0] {
            let exact = (1.0 / tau) * (-(t - 1.0) / tau).exp() + 0.2;
            assert!((emg_eval(&m, t) - exact).abs() / exact < 1e-6);
        }
    }

    #[test]
    fn matches_numerical_convolution() {
        let m = EmgModel {
            amp: 1000.0,
            ..model(10.0, 1.1, 5.1)
        };
        for t in [5.0, 8.0, 10.0, 11.3, 14.0, 20.0, 35.0, 60.0] {
            let (a, b) = (emg_eval(&m, t), brute_force(&m, t));
            assert!((a - b).abs() / b < 1e-8, "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn far_left_is_baseline() {
        let m = EmgModel {
            baseline: 3.0,
            prompt_amp: 2.0,
            ..model(0.0, 1.0, 3.0)
        };
        assert_eq!(emg_eval(&m, -1e3), 3.0);
        assert!(emg_eval(&m, 1e4).is_finite());
    }

    #[test]
    fn erfcx_branches_agree() {
        // Continued fraction versus the direct product where both are accurate.
        for z in [5.0f64, 5.5, 6.0, 8.0] {
            let direct = (z * z).exp() * erfc(z);
            assert!((erfcx(z) - direct).abs() / direct < 1e-13, "{z}: {} vs {direct}", erfcx(z));
        }
        // Reference values from 30-digit arbitrary-precision arithmetic.
        #[allow(clippy::excessive_precision)]
        for (z, want) in [
            (-3.0, 16205.988853999586625),
            (-1.0, 5.0089800807622834663),
            (0.3, 0.73459933456765515237),
            (2.0, 0.25539567631050574387),
            (4.9, 0.11287909055975893179),
            (8.0, 0.069985166200880927722),
        ] {
            assert!((erfcx(z) - want).abs() / want < 1e-14, "{z}");
        }
        let below = erfcx(ERFCX_SWITCH - 1e-12);
        assert!((below - erfcx(ERFCX_SWITCH)).abs() / below < 1e-12);
        let z = 1e4;
        let asym = 1.0 / (z * std::f64::consts::PI.sqrt()) * (1.0 - 0.5 / (z * z));
        assert!((erfcx(z) - asym).abs() / asym < 1e-12);
        assert!((erfcx(0.0) - 1.0).abs() < 1e-15);
    }

    fn simulate(tau: f64, seed: u64) -> TimeTrace {
        let set = EmitterSet::new(vec![Emitter {
            state: StateId::yellow(3, crate::states::Series::S),
            energy_mev: 0.0,
            lifetime_ps: tau,
            amplitude: 1.0,
            phase: 0.0,
        }])
        .unwrap();
        let t = UniformGrid::new(-20.0, 120.0, 0.1).unwrap().points();
        let irf = InstrumentResponse::new(2.6, 0.6).unwrap();
        let clean = intensity_trace(&set, &t, &Channel::Unbounded, Some(&irf))
            .unwrap()
            .scaled_to_peak(1e5);
        let noisy = add_noise(&clean.intensity, NoiseModel::Poisson { peak_counts: 1e5 }, seed).unwrap();
        TimeTrace::new(t, noisy).unwrap()
    }

    #[test]
    fn recovers_3s_lifetime() {
        let fit = fit_lifetime(
            &simulate(3.1, 1),
            IrfHint::Initial(2.6),
            &LifetimeFitOptions {
                weighting: Weighting::Poisson,
                ..Default::default()
            },
        )
        .unwrap();
        let tau = fit.value("tau").unwrap();
        assert!(fit.converged);
        assert!((tau - 3.1).abs() <= 0.1, "{tau}");
        assert!(fit.sigma("tau").unwrap() <= 0.1);
        assert!((fit.value("sigma").unwrap() - fwhm_to_sigma(2.6)).abs() < 0.05);
    }

    #[test]
    fn recovers_8s_lifetime_free_irf() {
        let fit = fit_lifetime(&simulate(21.5, 2), IrfHint::Free, &LifetimeFitOptions::default()).unwrap();
        let tau = fit.value("tau").unwrap();
        assert!((tau - 21.5).abs() / 21.5 < 0.05, "{tau}");
    }

    #[test]
    fn peak_near_end_rejected() {
        let t: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let y: Vec<f64> = t.iter().map(|&t| (-(t - 95.0).powi(2) / 8.0).exp()).collect();
        let r = fit_lifetime(&TimeTrace::new(t, y).unwrap(), IrfHint::Free, &Default::default());
        assert!(matches!(r, Err(Error::InsufficientCoverage(_))));
    }

    #[test]
    fn pure_gaussian_leaves_tau_unconstrained() {
        let t: Vec<f64> = (0..600).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|&t| 100.0 * (-(t - 15.0).powi(2) / 2.0).exp()).collect();
        match fit_lifetime(&TimeTrace::new(t, y).unwrap(), IrfHint::Free, &Default::default()) {
            Err(Error::DegenerateFit(_)) => {}
            Ok(fit) => assert!(!fit.converged, "{fit:?}"),
            Err(e) => panic!("{e}"),
        }
    }

    proptest! {
        #[test]
        fn finite_and_nonnegative(t in -50.0f64..200.0, sigma in 0.05f64..5.0, tau in 0.1f64..50.0, base in 0.0f64..10.0) {
            let m = EmgModel { baseline: base, prompt_amp: 1.0, ..model(0.0, sigma, tau) };
            let v = emg_eval(&m, t);
            prop_assert!(v.is_finite() && v >= 0.0);
        }

        #[test]
        fn decreasing_in_the_tail(sigma in 0.1f64..3.0, tau in 0.5f64..25.0, extra in 0.0f64..50.0) {
            let m = model(0.0, sigma, tau);
            let t = 3.0 * sigma + tau + extra;
            prop_assert!(emg_eval(&m, t + 0.01) < emg_eval(&m, t));
        }

        #[test]
        fn noise_free_round_trip(sigma in 0.5f64..2.0, tau in 1.0f64..20.0, f in proptest::array::uniform4(0.7f64..1.3)) {
            let truth = EmgModel { amp: 500.0, baseline: 2.0, ..model(5.0, sigma, tau) };
            let t: Vec<f64> = (0..800).map(|i| i as f64 * 0.15).collect();
            let y: Vec<f64> = t.iter().map(|&t| emg_eval(&truth, t)).collect();
            let specs = [
                ParamSpec::free("t0", 5.0 + (f[0] - 1.0)),
                ParamSpec::positive("sigma", sigma * f[1]),
                ParamSpec::positive("tau", tau * f[2]),
                ParamSpec::positive("amp", 500.0 * f[3]),
                ParamSpec::free("baseline", 2.0 * f[0]),
                ParamSpec::fixed("prompt_amp", 0.0),
            ];
            let fit = least_squares(|p: &[f64], t| emg_eval(&EmgModel::from_params(p), t), Data::new(&t, &y), &specs, &LsqOptions::default()).unwrap();
            let got = EmgModel::from_params(&fit.values);
            for (a, b) in [(got.t0, 5.0), (got.sigma, sigma), (got.tau, tau), (got.amp, 500.0), (got.baseline, 2.0)] {
                prop_assert!((a - b).abs() / b.abs() < 1e-6, "{a} vs {b}");
            }
        }
    }
}
