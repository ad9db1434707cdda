//! Quantum-beat analysis: detrending, power spectrum, peak picking and
//! assignment of beat frequencies to state-pair splits.

mod assign;
mod report;
mod spectrum;

use serde::{Deserialize, Serialize};

use crate::dynamics::TimeTrace;
use crate::error::{Error, Result};
use crate::fitting::{fit_lifetime, EmgModel, FitResult, IrfHint, LifetimeFitOptions, Weighting};

pub use assign::{assign_peaks, candidate_pool, AssignOptions, BeatAssignment, Candidate, DEFAULT_TOLERANCE_MEV};
pub use report::{beat_report, BeatOptions, BeatReport, BeatRow, WindowStart};
pub use spectrum::{find_peaks, find_peaks_with, power_spectrum, BeatPeak, BeatSpectrum, PeakOptions, PeakRank, Window};

/// How the slow population decay is removed before the FFT.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetrendMethod {
    /// Subtract a fitted IRF-convolved exponential.
    EmgResidual {
        #[serde(default)]
        irf: IrfHint,
        #[serde(default)]
        weighting: Weighting,
    },
    /// Subtract a centred moving average of the given width.
    MovingMean { width_ps: f64 },
}

impl Default for DetrendMethod {
    fn default() -> Self {
        DetrendMethod::EmgResidual {
            irf: IrfHint::Free,
            weighting: Weighting::Unit,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detrended {
    pub trace: TimeTrace,
    /// The subtracted smooth component.
    pub smooth: Vec<f64>,
    pub fit: Option<FitResult>,
    /// Moving-mean width below three periods of the dominant oscillation;
    /// its amplitude is then attenuated.
    pub short_width: bool,
}

/// Centred boxcar average; windows shrink at the edges.
fn moving_mean(y: &[f64], half: usize) -> Vec<f64> {
    let n = y.len();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + y[i];
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Removes the smooth part of `trace`, leaving the beats.
pub fn detrend(trace: &TimeTrace, method: &DetrendMethod) -> Result<Detrended> {
    match *method {
        DetrendMethod::EmgResidual { irf, weighting } => {
            let options = LifetimeFitOptions {
                weighting,
                ..LifetimeFitOptions::default()
            };
            let fit = fit_lifetime(trace, irf, &options).map_err(|e| Error::Detrend(Box::new(e)))?;
            let model = EmgModel::from_fit(&fit)?;
            let smooth: Vec<f64> = trace.t.iter().map(|&t| model.eval(t)).collect();
            Ok(Detrended {
                trace: residual(trace, &smooth),
                smooth,
                fit: Some(fit),
                short_width: false,
            })
        }
        DetrendMethod::MovingMean { width_ps } => {
            if !(width_ps > 0.0) {
                return Err(Error::invalid("moving-mean width must be positive"));
            }
            let dt = trace.dt();
            let half = ((width_ps / dt) / 2.0).round().max(1.0) as usize;
            let smooth = moving_mean(&trace.intensity, half);
            let out = residual(trace, &smooth);
            let dominant = power_spectrum(&out, Window::Hann, 4)
                .ok()
                .and_then(|s| find_peaks(&s, 0.02).ok())
                .and_then(|p| p.first().map(|p| 1.0 / p.nu));
            Ok(Detrended {
                short_width: dominant.is_some_and(|period| width_ps < 3.0 * period),
                trace: out,
                smooth,
                fit: None,
            })
        }
    }
}

fn residual(trace: &TimeTrace, smooth: &[f64]) -> TimeTrace {
    TimeTrace {
        t: trace.t.clone(),
        intensity: trace.intensity.iter().zip(smooth).map(|(y, s)| y - s).collect(),
        meta: trace.meta.clone(),
    }
}
