//! Physical constants and the frequency/energy/time conversions used
//! throughout the toolkit.
//!
//! Energies are in meV, times in ps and frequencies in THz, so the Planck
//! constant is expressed in meV·ps (equivalently meV/THz).

use crate::error::{Error, Result};

/// Planck and reduced Planck constants in meV·ps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysConstants {
    pub h: f64,
    pub hbar: f64,
}

impl PhysConstants {
    pub const CODATA: PhysConstants = PhysConstants {
        h: PLANCK_MEV_PS,
        hbar: HBAR_MEV_PS,
    };
}

impl Default for PhysConstants {
    fn default() -> Self {
        Self::CODATA
    }
}

/// h in meV·ps.
pub const PLANCK_MEV_PS: f64 = 4.135667696;
/// ħ in meV·ps.
pub const HBAR_MEV_PS: f64 = 0.6582119569;

/// Ratio between a Gaussian's FWHM and its standard deviation, 2√(2 ln 2).
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / FWHM_PER_SIGMA
}

pub fn sigma_to_fwhm(sigma: f64) -> f64 {
    sigma * FWHM_PER_SIGMA
}

/// Photon energy of a frequency, E = h·ν.
pub fn thz_to_mev(nu_thz: f64) -> Result<f64> {
    if !(nu_thz >= 0.0) || !nu_thz.is_finite() {
        return Err(Error::invalid(format!(
            "frequency must be finite and non-negative, got {nu_thz} THz"
        )));
    }
    Ok(PLANCK_MEV_PS * nu_thz)
}

/// Frequency of an energy quantum, ν = E/h.
pub fn mev_to_thz(e_mev: f64) -> Result<f64> {
    if !(e_mev >= 0.0) || !e_mev.is_finite() {
        return Err(Error::invalid(format!(
            "energy must be finite and non-negative, got {e_mev} meV"
        )));
    }
    Ok(e_mev / PLANCK_MEV_PS)
}

/// Lifetime-limited time scale ħ/Γ of a line of width `gamma_mev`.
///
/// The map is its own inverse up to units: feeding the result (read as meV)
/// back in returns the original width.
pub fn inverse_linewidth(gamma_mev: f64) -> Result<f64> {
    if !(gamma_mev > 0.0) || !gamma_mev.is_finite() {
        return Err(Error::invalid(format!(
            "linewidth must be finite and positive, got {gamma_mev} meV"
        )));
    }
    Ok(HBAR_MEV_PS / gamma_mev)
}

/// Angular frequency (rad/ps) of an energy in meV.
pub(crate) fn angular_frequency(e_mev: f64) -> f64 {
    e_mev / HBAR_MEV_PS
}
