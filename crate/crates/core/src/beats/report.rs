use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    assign_peaks, detrend, find_peaks_with, power_spectrum, AssignOptions, BeatSpectrum, Candidate, DetrendMethod,
    PeakOptions, PeakRank, Window,
};
use crate::dynamics::{InstrumentResponse, TimeTrace};
use crate::error::{Error, Result};
use crate::states::{StateCatalog, StateId};

/// Where the FFT window begins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "ps", rename_all = "snake_case")]
pub enum WindowStart {
    /// This long after the intensity maximum (by default one IRF FWHM, which
    /// drops the prompt second-harmonic replica).
    AfterPeak(f64),
    Absolute(f64),
}

impl Default for WindowStart {
    fn default() -> Self {
        WindowStart::AfterPeak(InstrumentResponse::default().time_fwhm_ps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeatOptions {
    pub detrend: DetrendMethod,
    pub window_start: WindowStart,
    pub window: Window,
    pub pad_factor: usize,
    pub peaks: PeakOptions,
    pub assign: AssignOptions,
}

impl Default for BeatOptions {
    fn default() -> Self {
        Self {
            detrend: DetrendMethod::default(),
            window_start: WindowStart::default(),
            window: Window::Hann,
            pad_factor: 4,
            peaks: PeakOptions::default(),
            assign: AssignOptions::default(),
        }
    }
}

impl BeatOptions {
    pub fn with_focus(mut self, state: StateId) -> Self {
        self.assign.focus = Some(state);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatRow {
    pub rank: PeakRank,
    #[serde(rename = "nu_THz")]
    pub nu: f64,
    #[serde(rename = "nu_err_THz")]
    pub nu_err: f64,
    #[serde(rename = "energy_meV")]
    pub energy: f64,
    #[serde(rename = "energy_err_meV")]
    pub energy_err: f64,
    pub amplitude: f64,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatReport {
    pub window_start_ps: f64,
    pub window_end_ps: f64,
    pub rows: Vec<BeatRow>,
    #[serde(skip)]
    pub spectrum: Option<BeatSpectrum>,
}

impl BeatReport {
    pub fn major(&self) -> Option<&BeatRow> {
        self.rows.iter().find(|r| r.rank == PeakRank::Major)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned plain-text table, one line per peak.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<6} {:>16} {:>16} {:>8}  candidates (split meV, |mismatch| meV)",
            "rank", "freq (THz)", "energy (meV)", "rel.pow"
        );
        for r in &self.rows {
            let cands = if r.candidates.is_empty() {
                "-".to_string()
            } else {
                r.candidates
                    .iter()
                    .map(|c| format!("{} ({:.2}, {:.3})", c.label(), c.split_mev, c.mismatch_mev))
                    .collect::<Vec<_>>()
                    .join("; ")
            };
            let rank = match r.rank {
                PeakRank::Major => "major",
                PeakRank::Minor => "minor",
            };
            let _ = writeln!(
                out,
                "{:<6} {:>16} {:>16} {:>8.3}  {}",
                rank,
                format!("{:.4} ± {:.4}", r.nu, r.nu_err),
                format!("{:.3} ± {:.3}", r.energy, r.energy_err),
                r.amplitude,
                cands
            );
        }
        out
    }
}

/// Detrend → window → power spectrum → peaks → assignment.
pub fn beat_report(trace: &TimeTrace, catalog: &StateCatalog, options: &BeatOptions) -> Result<BeatReport> {
    let detrended = detrend(trace, &options.detrend)?;
    let start = match options.window_start {
        WindowStart::AfterPeak(d) => trace.t[trace.peak_index()] + d,
        WindowStart::Absolute(t) => t,
    };
    let mut window = detrended.trace.window_from(start);
    if window.len() < 32 {
        return Err(Error::InsufficientData {
            needed: 32,
            got: window.len(),
        });
    }
    let mean = window.intensity.iter().sum::<f64>() / window.len() as f64;
    window.intensity.iter_mut().for_each(|v| *v -= mean);
    let spectrum = power_spectrum(&window, options.window, options.pad_factor)?;
    let peaks = find_peaks_with(&spectrum, &options.peaks)?;
    let assigned = assign_peaks(&peaks, catalog, &options.assign)?;
    Ok(BeatReport {
        window_start_ps: window.t[0],
        window_end_ps: window.t[window.len() - 1],
        rows: assigned
            .into_iter()
            .map(|a| BeatRow {
                rank: a.peak.rank,
                nu: a.peak.nu,
                nu_err: a.peak.nu_err,
                energy: a.peak.energy,
                energy_err: a.peak.energy_err,
                amplitude: a.peak.amplitude,
                candidates: a.candidates,
            })
            .collect(),
        spectrum: Some(spectrum),
    })
}
