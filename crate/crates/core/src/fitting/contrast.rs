use serde::{Deserialize, Serialize};

use super::lsq::{least_squares, Data, LsqOptions, ParamSpec};
use super::{FitFlag, FitResult};
use crate::error::{Error, Result};

/// Shortest coherence time the interferometer resolves (ps).
pub const RESOLUTION_LIMIT_PS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DecayShape {
    #[default]
    Exponential,
    Gaussian,
}

/// Contrast decay `C0·f(Δt/T2) + floor` with `f(s) = e^{−s}` or `e^{−s²}`;
/// in both shapes `T2` is the 1/e delay of the decaying part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastDecayModel {
    #[serde(rename = "C0")]
    pub c0: f64,
    #[serde(rename = "T2")]
    pub t2: f64,
    pub shape: DecayShape,
    pub floor: f64,
}

impl ContrastDecayModel {
    pub fn eval(&self, delay: f64) -> f64 {
        let s = delay.abs() / self.t2;
        let f = match self.shape {
            DecayShape::Exponential => (-s).exp(),
            DecayShape::Gaussian => (-s * s).exp(),
        };
        self.c0 * f + self.floor
    }

    pub fn from_fit(fit: &FitResult, shape: DecayShape) -> Result<Self> {
        Ok(Self {
            c0: fit.value("C0")?,
            t2: fit.value("T2")?,
            shape,
            floor: fit.value("floor")?,
        })
    }
}

/// One contrast measurement. A zero `sigma` means "unknown".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastPoint {
    pub delay_ps: f64,
    pub contrast: f64,
    #[serde(default)]
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum FloorMode {
    /// Free, bounded below by zero.
    #[default]
    Free,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ContrastFitOptions {
    pub shape: DecayShape,
    pub floor: FloorMode,
}

/// Fits contrast versus delay. Points are weighted by their sigmas when all
/// of them are positive, otherwise uniformly. A recovered `T2` below
/// [`RESOLUTION_LIMIT_PS`] is flagged [`FitFlag::ResolutionLimited`].
pub fn fit_contrast_decay(series: &[ContrastPoint], options: &ContrastFitOptions) -> Result<FitResult> {
    if series.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            got: series.len(),
        });
    }
    let mut pts = series.to_vec();
    pts.sort_by(|a, b| a.delay_ps.total_cmp(&b.delay_ps));
    if pts.iter().any(|p| !p.delay_ps.is_finite() || !p.contrast.is_finite() || p.sigma < 0.0) {
        return Err(Error::invalid("contrast series has non-finite values or negative sigmas"));
    }
    let (first, last) = (pts[0], pts[pts.len() - 1]);
    if !(last.contrast < 0.6 * first.contrast) {
        return Err(Error::InsufficientDecay(format!(
            "contrast falls only from {:.3} to {:.3} over {:.2}–{:.2} ps",
            first.contrast, last.contrast, first.delay_ps, last.delay_ps
        )));
    }
    let x: Vec<f64> = pts.iter().map(|p| p.delay_ps).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.contrast).collect();
    let sig: Vec<f64> = pts.iter().map(|p| p.sigma).collect();
    let weighted = sig.iter().all(|&s| s > 0.0);

    // Starting values: floor from the tail, T2 from the 1/e crossing.
    let floor0 = match options.floor {
        FloorMode::Fixed(v) => v,
        FloorMode::Free => (0.5 * y.iter().cloned().fold(f64::INFINITY, f64::min)).max(0.0),
    };
    let c0 = (first.contrast - floor0).clamp(0.05, 0.99);
    let target = floor0 + c0 / std::f64::consts::E;
    let t2_0 = pts
        .windows(2)
        .find(|w| w[0].contrast >= target && w[1].contrast < target)
        .map(|w| {
            let f = (w[0].contrast - target) / (w[0].contrast - w[1].contrast);
            w[0].delay_ps + f * (w[1].delay_ps - w[0].delay_ps) - first.delay_ps
        })
        .filter(|t| *t > 0.0)
        .unwrap_or((last.delay_ps - first.delay_ps) / 2.0)
        .max(1e-3);
    let specs = [
        ParamSpec::bounded("C0", c0, 0.0, 1.0),
        ParamSpec::positive("T2", t2_0),
        match options.floor {
            FloorMode::Free => ParamSpec::bounded("floor", floor0.max(1e-3), 0.0, 1.0),
            FloorMode::Fixed(v) => ParamSpec::fixed("floor", v),
        },
    ];
    let shape = options.shape;
    let model = move |p: &[f64], t: f64| {
        ContrastDecayModel {
            c0: p[0],
            t2: p[1],
            shape,
            floor: p[2],
        }
        .eval(t)
    };
    let mut data = Data::new(&x, &y);
    if weighted {
        data = data.with_sigma(&sig);
    }
    let name = match shape {
        DecayShape::Exponential => "contrast_exponential",
        DecayShape::Gaussian => "contrast_gaussian",
    };
    let mut fit = least_squares(model, data, &specs, &LsqOptions::default())?.named(name);
    if fit.value("T2")? < RESOLUTION_LIMIT_PS {
        fit.flag(FitFlag::ResolutionLimited);
    }
    Ok(fit)
}

/// Comparison of a coherence time with the `T2 ≤ 2·T1` limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T2BoundReport {
    pub t2_ps: f64,
    pub t2_sigma_ps: f64,
    pub t1_ps: f64,
    pub t1_sigma_ps: f64,
    pub t2_max_ps: f64,
    /// `T2 − 2T1` exceeds twice the combined uncertainty.
    pub violation: bool,
    /// Implied pure dephasing rate `max(0, 1/T2 − 1/(2T1))` (ps⁻¹).
    pub gamma_phi_per_ps: f64,
}

pub fn t2_bound(t2: f64, t2_sigma: f64, t1: f64, t1_sigma: f64) -> Result<T2BoundReport> {
    if !(t2 > 0.0) || !(t1 > 0.0) || !t2.is_finite() || !t1.is_finite() || !(t2_sigma >= 0.0) || !(t1_sigma >= 0.0) {
        return Err(Error::invalid(format!(
            "T2 bound needs finite positive times and non-negative sigmas (T2 {t2} ± {t2_sigma}, T1 {t1} ± {t1_sigma})"
        )));
    }
    let combined = t2_sigma.hypot(2.0 * t1_sigma);
    Ok(T2BoundReport {
        t2_ps: t2,
        t2_sigma_ps: t2_sigma,
        t1_ps: t1,
        t1_sigma_ps: t1_sigma,
        t2_max_ps: 2.0 * t1,
        violation: t2 - 2.0 * t1 > 2.0 * combined,
        gamma_phi_per_ps: (1.0 / t2 - 1.0 / (2.0 * t1)).max(0.0),
    })
}

/// [`t2_bound`] for the `T2` of a contrast-decay fit.
pub fn validate_t2_bound(t2: &FitResult, t1: f64, t1_sigma: f64) -> Result<T2BoundReport> {
    t2_bound(t2.value("T2")?, t2.sigma("T2")?, t1, t1_sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{add_noise, NoiseModel};
    use proptest::prelude::*;

    fn series(m: &ContrastDecayModel, delays: &[f64], noise: f64, seed: u64) -> Vec<ContrastPoint> {
        let clean: Vec<f64> = delays.iter().map(|&d| m.eval(d)).collect();
        let noisy = if noise > 0.0 {
            add_noise(&clean, NoiseModel::Gaussian { sigma: noise }, seed).unwrap()
        } else {
            clean
        };
        delays
            .iter()
            .zip(noisy)
            .map(|(&d, c)| ContrastPoint {
                delay_ps: d,
                contrast: c,
                sigma: noise,
            })
            .collect()
    }

    fn delays(stop: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| stop * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn recovers_t2_from_noisy_series() {
        let m = ContrastDecayModel {
            c0: 0.95,
            t2: 6.2,
            shape: DecayShape::Exponential,
            floor: 0.0,
        };
        // 5% contrast noise, averaged over seeds to check bias and spread.
        let mut hits = 0;
        for seed in 0..20 {
            let s = series(&m, &delays(15.0, 16), 0.05 * 0.95, seed);
            let fit = fit_contrast_decay(&s, &Default::default()).unwrap();
            let t2 = fit.value("T2").unwrap();
            if (t2 - 6.2).abs() <= 0.4 {
                hits += 1;
            }
        }
        assert!(hits >= 14, "{hits}/20 within 0.4 ps");
    }

    #[test]
    fn constant_series_is_insufficient_decay() {
        let s: Vec<ContrastPoint> = (0..8)
            .map(|i| ContrastPoint {
                delay_ps: i as f64,
                contrast: 0.8,
                sigma: 0.01,
            })
            .collect();
        assert!(matches!(
            fit_contrast_decay(&s, &Default::default()),
            Err(Error::InsufficientDecay(_))
        ));
    }

    #[test]
    fn short_t2_flags_resolution() {
        let m = ContrastDecayModel {
            c0: 0.9,
            t2: 3.0,
            shape: DecayShape::Exponential,
            floor: 0.02,
        };
        let fit = fit_contrast_decay(&series(&m, &delays(15.0, 16), 0.0, 0), &Default::default()).unwrap();
        assert!((fit.value("T2").unwrap() - 3.0).abs() < 1e-6);
        assert!(fit.has_flag(FitFlag::ResolutionLimited));
    }

    #[test]
    fn too_few_points() {
        let m = ContrastDecayModel {
            c0: 0.9,
            t2: 3.0,
            shape: DecayShape::Exponential,
            floor: 0.0,
        };
        assert!(matches!(
            fit_contrast_decay(&series(&m, &[0.0, 5.0, 10.0], 0.0, 0), &Default::default()),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn bound_examples() {
        let r = t2_bound(6.2, 0.3, 3.1, 0.0).unwrap();
        assert!(!r.violation);
        assert_eq!(r.gamma_phi_per_ps, 0.0);
        let r = t2_bound(12.0, 0.5, 20.0, 0.0).unwrap();
        assert!((r.gamma_phi_per_ps - (1.0 / 12.0 - 1.0 / 40.0)).abs() < 1e-15);
        assert!((r.gamma_phi_per_ps - 0.0583).abs() < 1e-4);
        assert!(t2_bound(50.0, 1.0, 10.0, 0.0).unwrap().violation);
        assert!(t2_bound(-1.0, 1.0, 10.0, 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn noise_free_round_trip(c0 in 0.3f64..0.95, t2 in 2.0f64..12.0, floor in 0.01f64..0.1, gaussian: bool,
                                 f in proptest::array::uniform3(0.7f64..1.3)) {
            let shape = if gaussian { DecayShape::Gaussian } else { DecayShape::Exponential };
            let m = ContrastDecayModel { c0, t2, shape, floor };
            let d = delays(3.0 * t2, 24);
            let s = series(&m, &d, 0.0, 0);
            let x: Vec<f64> = s.iter().map(|p| p.delay_ps).collect();
            let y: Vec<f64> = s.iter().map(|p| p.contrast).collect();
            let specs = [
                ParamSpec::bounded("C0", (c0 * f[0]).min(0.99), 0.0, 1.0),
                ParamSpec::positive("T2", t2 * f[1]),
                ParamSpec::bounded("floor", floor * f[2], 0.0, 1.0),
            ];
            let fit = least_squares(
                move |p: &[f64], t| ContrastDecayModel { c0: p[0], t2: p[1], shape, floor: p[2] }.eval(t),
                Data::new(&x, &y), &specs, &LsqOptions::default()).unwrap();
            let got = ContrastDecayModel::from_fit(&fit, shape).unwrap();
            prop_assert!((got.c0 - c0).abs() / c0 < 1e-6);
            prop_assert!((got.t2 - t2).abs() / t2 < 1e-6);
            prop_assert!((got.floor - floor).abs() / floor < 1e-6);
            // The automatic initialization reaches the same optimum.
            let auto = fit_contrast_decay(&s, &ContrastFitOptions { shape, floor: FloorMode::Free }).unwrap();
            prop_assert!((auto.value("T2").unwrap() - t2).abs() / t2 < 1e-6);
        }
    }
}
