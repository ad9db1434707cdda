use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{check_uniform, Channel, EmitterSet};
use crate::error::{Error, Result};

/// First-order field autocorrelation at interferometer delay `delay` (ps).
///
/// Each emitter enters with its time-integrated detected intensity
/// `w_k² a_k² τ_k` and the phase factor `e^{−iE_kΔt/ħ}`; its modulus decays
/// as `exp(−|Δt|(1/(2τ_k) + γ_φ))`. `g1(0) = 1` and `g1(−Δt) = g1(Δt)*`.
pub fn g1(set: &EmitterSet, delay: f64, channel: &Channel) -> Result<Complex64> {
    if set.emitters.is_empty() {
        return Err(Error::invalid("g1 of an empty emitter set"));
    }
    if !delay.is_finite() {
        return Err(Error::invalid("delay must be finite"));
    }
    set.validate()?;
    let mut total = 0.0;
    let mut acc = Complex64::new(0.0, 0.0);
    for e in &set.emitters {
        let w = channel.weight(e.energy_mev);
        let p = w * w * e.amplitude * e.amplitude * e.lifetime_ps;
        total += p;
        let decay = (-delay.abs() * (e.field_decay_rate() + set.pure_dephasing_rate)).exp();
        acc += Complex64::from_polar(p * decay, -e.omega() * delay);
    }
    if !(total > 0.0) {
        return Err(Error::invalid("no emission reaches this channel"));
    }
    Ok(acc / total)
}

/// Off-axis interferometer geometry along the slit, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeGeometry {
    pub pixels: usize,
    pub x0: f64,
    pub sigma_x: f64,
    /// Fringe wavenumber in rad/pixel.
    pub k: f64,
    pub phi: f64,
    /// Envelope peak (counts) of the brightest energy row.
    pub amplitude: f64,
}

impl Default for FringeGeometry {
    fn default() -> Self {
        Self {
            pixels: 400,
            x0: 200.0,
            sigma_x: 80.0,
            k: 0.5,
            phi: 0.3,
            amplitude: 1e4,
        }
    }
}

impl FringeGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.pixels < 8 || !(self.sigma_x > 0.0) || !(self.k > 0.0) || !(self.amplitude > 0.0) {
            return Err(Error::invalid(format!(
                "invalid fringe geometry: {self:?} (need pixels >= 8, sigma_x > 0, k > 0, amplitude > 0)"
            )));
        }
        if !self.x0.is_finite() || !self.phi.is_finite() {
            return Err(Error::invalid("fringe centre and phase must be finite"));
        }
        Ok(())
    }
}

/// Fringe pattern over pixel position × energy at one delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeImage {
    pub x: Vec<f64>,
    pub e: Vec<f64>,
    /// `intensity[i_e][i_x]`: one fringe row per energy.
    pub intensity: Vec<Vec<f64>>,
    pub delay: f64,
}

impl FringeImage {
    pub fn row(&self, i_e: usize) -> &[f64] {
        &self.intensity[i_e]
    }
}

/// Interferometer image: every energy row is a Gaussian envelope times
/// `½(C cos(kx + φ + arg g1) + 1)` with `C = |g1|` of that energy channel.
pub fn fringe_image(
    set: &EmitterSet,
    delay: f64,
    geometry: &FringeGeometry,
    e: &[f64],
    channel_fwhm: f64,
) -> Result<FringeImage> {
    geometry.validate()?;
    if !delay.is_finite() {
        return Err(Error::invalid("delay must be finite"));
    }
    if !(channel_fwhm > 0.0) {
        return Err(Error::invalid("channel width must be positive"));
    }
    if e.len() > 1 {
        check_uniform(e)?;
    } else if e.is_empty() {
        return Err(Error::invalid("energy grid is empty"));
    }
    let x: Vec<f64> = (0..geometry.pixels).map(|i| i as f64).collect();
    let envelope: Vec<f64> = x
        .iter()
        .map(|&xi| (-0.5 * ((xi - geometry.x0) / geometry.sigma_x).powi(2)).exp())
        .collect();
    let mut rows = Vec::with_capacity(e.len());
    for &center in e {
        let channel = Channel::from_fwhm(center, channel_fwhm);
        let weight: f64 = set
            .emitters
            .iter()
            .map(|em| {
                let w = channel.weight(em.energy_mev);
                w * w * em.amplitude * em.amplitude * em.lifetime_ps
            })
            .sum();
        let g = if weight > 0.0 {
            g1(set, delay, &channel)?
        } else {
            Complex64::new(0.0, 0.0)
        };
        rows.push((weight, g.norm(), g.arg()));
    }
    let max_weight = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    if !(max_weight > 0.0) {
        return Err(Error::invalid("no emission reaches the energy grid"));
    }
    let intensity = rows
        .iter()
        .map(|&(weight, contrast, phase)| {
            let a = geometry.amplitude * weight / max_weight;
            x.iter()
                .zip(&envelope)
                .map(|(&xi, &env)| {
                    a * env * 0.5 * (contrast * (geometry.k * xi + geometry.phi + phase).cos() + 1.0)
                })
                .collect()
        })
        .collect();
    Ok(FringeImage {
        x,
        e: e.to_vec(),
        intensity,
        delay,
    })
}
