//! Forward model of the emission from a coherent superposition of exciton
//! states: time traces, time-energy spectrograms and interferometer fringe
//! images.
//!
//! Each emitter `k` contributes a field
//! `c_k(t) = w_k a_k e^{iφ_k} e^{−iE_k t/ħ − t/(2τ_k)}` for `t ≥ 0`, where
//! `w_k` is the amplitude response of the detection channel. The detected
//! intensity keeps the diagonal terms `|c_k|²` and scales the interference
//! cross terms by the visibility β and a pure-dephasing decay `e^{−2γ_φ t}`.

mod coherence;
mod grid;
mod noise;
mod trace;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::states::{StateCatalog, StateId};
use crate::units::{self, fwhm_to_sigma};

pub use coherence::{fringe_image, g1, FringeGeometry, FringeImage};
pub use grid::{check_uniform, UniformGrid};
pub use noise::{add_noise, add_noise_rows, NoiseModel};
pub use trace::{
    field_amplitude, gaussian_blur, intensity_trace, spectrogram, Spectrogram, TimeTrace,
    TraceBasis, TraceMeta,
};

/// Streak-camera pulse duration (ps, FWHM).
pub const PULSE_FWHM_PS: f64 = 2.44;
/// Absolute streak-camera time resolution (ps).
pub const STREAK_RESOLUTION_PS: f64 = 0.8;
/// Streak-camera spectral resolution (meV).
pub const STREAK_ENERGY_RESOLUTION_MEV: f64 = 0.6;
/// CCD spectral resolution (meV).
pub const CCD_ENERGY_RESOLUTION_MEV: f64 = 0.2;

/// One state taking part in the superposition. Energy in meV relative to
/// the set's reference, lifetime in ps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Emitter {
    pub state: StateId,
    pub energy_mev: f64,
    pub lifetime_ps: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Emitter {
    pub(crate) fn omega(&self) -> f64 {
        units::angular_frequency(self.energy_mev)
    }

    pub(crate) fn field_decay_rate(&self) -> f64 {
        0.5 / self.lifetime_ps
    }
}

/// Emitters plus the global knobs acting on their interference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitterSet {
    pub emitters: Vec<Emitter>,
    /// β ∈ [0, 1], scales the beat (cross) terms of the intensity.
    #[serde(default = "one")]
    pub cross_visibility: f64,
    /// γ_φ in ps⁻¹.
    #[serde(default)]
    pub pure_dephasing_rate: f64,
    /// Square root of the peak height of the prompt second-harmonic replica.
    #[serde(default)]
    pub shg_prompt_amplitude: f64,
}

fn one() -> f64 {
    1.0
}

impl EmitterSet {
    pub fn new(emitters: Vec<Emitter>) -> Result<Self> {
        let set = Self {
            emitters,
            cross_visibility: 1.0,
            pure_dephasing_rate: 0.0,
            shg_prompt_amplitude: 0.0,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn with_cross_visibility(mut self, beta: f64) -> Self {
        self.cross_visibility = beta;
        self
    }

    pub fn with_pure_dephasing(mut self, gamma_phi: f64) -> Self {
        self.pure_dephasing_rate = gamma_phi;
        self
    }

    pub fn with_shg_prompt(mut self, amplitude: f64) -> Self {
        self.shg_prompt_amplitude = amplitude;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.emitters {
            if !(e.lifetime_ps > 0.0) || !e.lifetime_ps.is_finite() {
                return Err(Error::invalid(format!(
                    "{}: lifetime must be positive, got {}",
                    e.state, e.lifetime_ps
                )));
            }
            if !(e.amplitude >= 0.0) || !e.amplitude.is_finite() {
                return Err(Error::invalid(format!(
                    "{}: amplitude must be non-negative, got {}",
                    e.state, e.amplitude
                )));
            }
            if !e.energy_mev.is_finite() || !e.phase.is_finite() {
                return Err(Error::invalid(format!("{}: energy and phase must be finite", e.state)));
            }
        }
        if !(0.0..=1.0).contains(&self.cross_visibility) {
            return Err(Error::invalid(format!(
                "cross visibility must be in [0, 1], got {}",
                self.cross_visibility
            )));
        }
        if !(self.pure_dephasing_rate >= 0.0) || !self.pure_dephasing_rate.is_finite() {
            return Err(Error::invalid("pure dephasing rate must be finite and >= 0"));
        }
        if !(self.shg_prompt_amplitude >= 0.0) || !self.shg_prompt_amplitude.is_finite() {
            return Err(Error::invalid("SHG prompt amplitude must be finite and >= 0"));
        }
        Ok(())
    }

    /// Build a set from catalog states.
    ///
    /// Energies are taken relative to `reference_mev`. With
    /// `prefer_overrides`, every state after the first is placed at the
    /// quoted beat split from the first state when the catalog has one, so
    /// the simulated beat frequency matches the quoted split rather than the
    /// energy difference.
    pub fn from_catalog(
        catalog: &StateCatalog,
        specs: &[EmitterSpec],
        reference_mev: f64,
        prefer_overrides: bool,
    ) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::invalid("emitter list is empty"));
        }
        let anchor = specs[0].state;
        let anchor_energy = specs[0]
            .energy_mev
            .map(Ok)
            .unwrap_or_else(|| catalog.require(&anchor).map(|r| r.energy_mev() - reference_mev))?;
        let mut emitters = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let record = catalog.get(&spec.state);
            let energy_mev = match spec.energy_mev {
                Some(e) => e,
                None if i == 0 => anchor_energy,
                None => {
                    let over = if prefer_overrides {
                        catalog.split_override(&anchor, &spec.state)
                    } else {
                        None
                    };
                    match (over, record) {
                        (Some(split), Some(r)) => {
                            let sign = if r.energy_mev() - reference_mev >= anchor_energy {
                                1.0
                            } else {
                                -1.0
                            };
                            anchor_energy + sign * split
                        }
                        (Some(split), None) => {
                            // Partner known only through its split: place it
                            // on the side of the anchor set by series order.
                            let sign = if spec.state > anchor { 1.0 } else { -1.0 };
                            anchor_energy + sign * split
                        }
                        (None, Some(r)) => r.energy_mev() - reference_mev,
                        (None, None) => {
                            return Err(Error::NotFound(format!(
                                "state {} has no catalog energy",
                                spec.state
                            )))
                        }
                    }
                }
            };
            let lifetime_ps = match (spec.lifetime_ps, record) {
                (Some(t), _) => t,
                (None, Some(r)) => r.lifetime,
                (None, None) => {
                    return Err(Error::NotFound(format!(
                        "state {} has no catalog lifetime",
                        spec.state
                    )))
                }
            };
            emitters.push(Emitter {
                state: spec.state,
                energy_mev,
                lifetime_ps,
                amplitude: spec.amplitude,
                phase: spec.phase,
            });
        }
        Self::new(emitters)
    }

    /// An anchor emitter (unit amplitude, energy 0) plus one weak partner
    /// per beat line, placed `h·ν` above it.
    ///
    /// Partner amplitudes are chosen so that, after the time response `irf`,
    /// the beat against the anchor has the requested fractional `depth`.
    /// Partners stay weak (depths must be small) so that partner-partner
    /// beats remain second order.
    pub fn beating(anchor: StateId, lifetime_ps: f64, lines: &[BeatLine], irf: Option<&InstrumentResponse>) -> Result<Self> {
        let mut emitters = vec![Emitter {
            state: anchor,
            energy_mev: 0.0,
            lifetime_ps,
            amplitude: 1.0,
            phase: 0.0,
        }];
        for line in lines {
            if !(line.nu_thz > 0.0) || !(line.depth > 0.0 && line.depth < 1.0) {
                return Err(Error::invalid(format!(
                    "beat line {}: need ν > 0 and depth in (0, 1), got {} THz / {}",
                    line.partner, line.nu_thz, line.depth
                )));
            }
            let transfer = irf.map_or(1.0, |r| r.beat_transfer(line.nu_thz));
            emitters.push(Emitter {
                state: line.partner,
                energy_mev: units::thz_to_mev(line.nu_thz)?,
                lifetime_ps,
                amplitude: line.depth / (2.0 * transfer),
                phase: 0.0,
            });
        }
        Self::new(emitters)
    }

    pub(crate) fn max_angular_split(&self) -> f64 {
        let mut max: f64 = 0.0;
        for (j, a) in self.emitters.iter().enumerate() {
            for b in &self.emitters[j + 1..] {
                max = max.max((a.omega() - b.omega()).abs());
            }
        }
        max
    }
}

/// One beat component requested from [`EmitterSet::beating`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatLine {
    pub partner: StateId,
    #[serde(rename = "nu_THz")]
    pub nu_thz: f64,
    /// Fractional modulation of the detected intensity.
    pub depth: f64,
}

/// Emitter request resolved against a catalog by [`EmitterSet::from_catalog`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitterSpec {
    pub state: StateId,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
    /// Explicit energy (meV, relative to the reference); catalog otherwise.
    #[serde(default, rename = "energy_meV", skip_serializing_if = "Option::is_none")]
    pub energy_mev: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lifetime_ps: Option<f64>,
}

impl EmitterSpec {
    pub fn new(state: StateId, amplitude: f64) -> Self {
        Self {
            state,
            amplitude,
            phase: 0.0,
            energy_mev: None,
            lifetime_ps: None,
        }
    }
}

/// Gaussian instrument response in time and energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstrumentResponse {
    pub time_fwhm_ps: f64,
    #[serde(rename = "energy_fwhm_meV")]
    pub energy_fwhm_mev: f64,
}

impl InstrumentResponse {
    pub fn new(time_fwhm_ps: f64, energy_fwhm_mev: f64) -> Result<Self> {
        let irf = Self {
            time_fwhm_ps,
            energy_fwhm_mev,
        };
        irf.validate()?;
        Ok(irf)
    }

    /// Pulse duration and streak resolution added in quadrature, with the
    /// streak-camera spectral resolution.
    pub fn streak_camera() -> Self {
        Self {
            time_fwhm_ps: PULSE_FWHM_PS.hypot(STREAK_RESOLUTION_PS),
            energy_fwhm_mev: STREAK_ENERGY_RESOLUTION_MEV,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.time_fwhm_ps > 0.0) || !(self.energy_fwhm_mev > 0.0) {
            return Err(Error::invalid(format!(
                "instrument widths must be positive, got {} ps / {} meV",
                self.time_fwhm_ps, self.energy_fwhm_mev
            )));
        }
        Ok(())
    }

    pub fn time_sigma(&self) -> f64 {
        fwhm_to_sigma(self.time_fwhm_ps)
    }

    pub fn energy_sigma(&self) -> f64 {
        fwhm_to_sigma(self.energy_fwhm_mev)
    }

    /// Amplitude factor by which the time response attenuates a beat at
    /// `nu_thz`: the Gaussian's Fourier transform, `exp(−(2πνσ)²/2)`.
    pub fn beat_transfer(&self, nu_thz: f64) -> f64 {
        let x = std::f64::consts::TAU * nu_thz * self.time_sigma();
        (-0.5 * x * x).exp()
    }
}

impl Default for InstrumentResponse {
    fn default() -> Self {
        Self::streak_camera()
    }
}

/// Spectral detection channel.
///
/// A Gaussian channel filters each emitter's field with
/// `w = exp(−(E − center)²/(4σ²))`, i.e. an intensity response of standard
/// deviation σ.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Channel {
    #[default]
    Unbounded,
    Gaussian {
        #[serde(rename = "center_meV")]
        center_mev: f64,
        #[serde(rename = "sigma_meV")]
        sigma_mev: f64,
    },
}

impl Channel {
    pub fn gaussian(center_mev: f64, sigma_mev: f64) -> Self {
        Channel::Gaussian {
            center_mev,
            sigma_mev,
        }
    }

    /// Channel centred at `center_mev` with an intensity FWHM.
    pub fn from_fwhm(center_mev: f64, fwhm_mev: f64) -> Self {
        Self::gaussian(center_mev, fwhm_to_sigma(fwhm_mev))
    }

    pub fn weight(&self, energy_mev: f64) -> f64 {
        match *self {
            Channel::Unbounded => 1.0,
            Channel::Gaussian {
                center_mev,
                sigma_mev,
            } => {
                let d = energy_mev - center_mev;
                (-d * d / (4.0 * sigma_mev * sigma_mev)).exp()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Channel::Gaussian { sigma_mev, center_mev } if !(sigma_mev > 0.0) || !center_mev.is_finite() => {
                Err(Error::invalid("channel width must be positive"))
            }
            _ => Ok(()),
        }
    }

    pub fn center(&self) -> Option<f64> {
        match *self {
            Channel::Unbounded => None,
            Channel::Gaussian { center_mev, .. } => Some(center_mev),
        }
    }

    pub fn sigma(&self) -> Option<f64> {
        match *self {
            Channel::Unbounded => None,
            Channel::Gaussian { sigma_mev, .. } => Some(sigma_mev),
        }
    }
}

/// Per-emitter complex field amplitude without channel weighting.
pub(crate) fn emitter_field(e: &Emitter, t: f64) -> Complex64 {
    let mag = e.amplitude * (-t * e.field_decay_rate()).exp();
    Complex64::from_polar(mag, e.phase - e.omega() * t)
}
