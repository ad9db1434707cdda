use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dynamics::{check_uniform, TimeTrace};
use crate::error::{Error, Result};
use crate::units::thz_to_mev;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Hann,
    Rect,
}

impl Window {
    /// Window coefficients for `n` samples.
    pub fn weights(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / (n - 1) as f64).cos()))
                .collect(),
        }
    }
}

/// One-sided power spectrum of a time trace. Frequencies in THz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatSpectrum {
    pub freq: Vec<f64>,
    pub power: Vec<f64>,
    pub window: Window,
    pub pad_factor: usize,
    /// 1 / (record length) of the analyzed trace.
    pub native_resolution: f64,
}

impl BeatSpectrum {
    pub fn df(&self) -> f64 {
        self.freq[1] - self.freq[0]
    }
}

/// Windowed, zero-padded power spectrum scaled so that the sum of `power`
/// equals the energy `Σ(w·x)²` of the windowed samples.
pub fn power_spectrum(trace: &TimeTrace, window: Window, pad_factor: usize) -> Result<BeatSpectrum> {
    let n = trace.len();
    if n < 32 {
        return Err(Error::InsufficientData { needed: 32, got: n });
    }
    if pad_factor < 1 {
        return Err(Error::invalid("pad factor must be at least 1"));
    }
    let dt = check_uniform(&trace.t)?;
    let w = window.weights(n);
    let m = n * pad_factor;
    let mut buf: Vec<Complex64> = trace
        .intensity
        .iter()
        .zip(&w)
        .map(|(x, w)| Complex64::new(x * w, 0.0))
        .collect();
    buf.resize(m, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let half = m / 2;
    let power: Vec<f64> = (0..=half)
        .map(|k| {
            let p = buf[k].norm_sqr() / m as f64;
            if k == 0 || (m.is_multiple_of(2) && k == half) {
                p
            } else {
                2.0 * p
            }
        })
        .collect();
    let df = 1.0 / (m as f64 * dt);
    Ok(BeatSpectrum {
        freq: (0..=half).map(|k| k as f64 * df).collect(),
        power,
        window,
        pad_factor,
        native_resolution: 1.0 / (n as f64 * dt),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakRank {
    Major,
    Minor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatPeak {
    #[serde(rename = "nu_THz")]
    pub nu: f64,
    #[serde(rename = "nu_err_THz")]
    pub nu_err: f64,
    #[serde(rename = "energy_meV")]
    pub energy: f64,
    #[serde(rename = "energy_err_meV")]
    pub energy_err: f64,
    /// Peak power relative to the major peak.
    pub amplitude: f64,
    pub rank: PeakRank,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeakOptions {
    /// Minimum topographic prominence as a fraction of the largest peak.
    pub min_prominence: f64,
    /// Minimum peak power over the median power of the spectrum.
    pub min_significance: f64,
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self {
            min_prominence: 0.02,
            min_significance: 20.0,
        }
    }
}

/// [`find_peaks_with`] using the default significance threshold.
pub fn find_peaks(spec: &BeatSpectrum, min_prominence: f64) -> Result<Vec<BeatPeak>> {
    find_peaks_with(
        spec,
        &PeakOptions {
            min_prominence,
            ..PeakOptions::default()
        },
    )
}

/// Local maxima above 1.5 native bins whose prominence and power clear the
/// thresholds, largest first. Positions are refined by 3-point parabolic
/// interpolation; `nu_err = max(native/2, |shift|)`.
pub fn find_peaks_with(spec: &BeatSpectrum, options: &PeakOptions) -> Result<Vec<BeatPeak>> {
    let p = &spec.power;
    if p.len() < 3 || spec.freq.len() != p.len() {
        return Err(Error::invalid("spectrum too short"));
    }
    if !(0.0..=1.0).contains(&options.min_prominence) || !(options.min_significance >= 0.0) {
        return Err(Error::invalid("peak thresholds out of range"));
    }
    let df = spec.df();
    let first = ((1.5 * spec.native_resolution) / df).ceil() as usize;
    if first + 1 >= p.len() {
        return Ok(Vec::new());
    }
    let band = &p[first..];
    let max = band.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Ok(Vec::new());
    }
    let mut sorted = band.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];

    let mut found = Vec::new();
    for i in first.max(1)..p.len() - 1 {
        if !(p[i] > p[i - 1] && p[i] >= p[i + 1]) {
            continue;
        }
        if p[i] < options.min_significance * median {
            continue;
        }
        if prominence(p, i, first) < options.min_prominence * max {
            continue;
        }
        let (l, c, r) = (p[i - 1], p[i], p[i + 1]);
        let den = l - 2.0 * c + r;
        let shift = if den < 0.0 { (0.5 * (l - r) / den).clamp(-0.5, 0.5) } else { 0.0 };
        let nu = spec.freq[i] + shift * df;
        let nu_err = (spec.native_resolution / 2.0).max(shift.abs() * df);
        found.push((c, nu, nu_err));
    }
    found.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)));
    let top = found.first().map_or(1.0, |f| f.0);
    found
        .iter()
        .enumerate()
        .map(|(k, &(c, nu, nu_err))| {
            Ok(BeatPeak {
                nu,
                nu_err,
                energy: thz_to_mev(nu)?,
                energy_err: thz_to_mev(nu_err)?,
                amplitude: c / top,
                rank: if k == 0 { PeakRank::Major } else { PeakRank::Minor },
            })
        })
        .collect()
}

/// Height of `p[i]` above the higher of the two minima separating it from
/// taller peaks (or the band edges).
fn prominence(p: &[f64], i: usize, first: usize) -> f64 {
    let mut left_min = p[i];
    let mut j = i;
    while j > first {
        j -= 1;
        if p[j] > p[i] {
            break;
        }
        left_min = left_min.min(p[j]);
    }
    let mut right_min = p[i];
    for &v in &p[i + 1..] {
        if v > p[i] {
            break;
        }
        right_min = right_min.min(v);
    }
    p[i] - left_min.max(right_min)
}
