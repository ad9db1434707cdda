use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_uniform, emitter_field, Channel, EmitterSet, InstrumentResponse};
use crate::error::{Error, Result};

/// 8-point Gauss–Legendre nodes and weights on [−1, 1].
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];
/// Half-width of the IRF window in standard deviations.
const IRF_HALF_WIDTH: f64 = 8.0;
const MAX_PANELS: usize = 20_000;

/// Provenance of a trace.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    #[serde(default, rename = "channel_energy_meV")]
    pub channel_energy_mev: Option<f64>,
    #[serde(default, rename = "bandwidth_meV")]
    pub bandwidth_mev: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Intensity versus time on a uniform grid (ps).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeTrace {
    pub t: Vec<f64>,
    pub intensity: Vec<f64>,
    #[serde(default)]
    pub meta: TraceMeta,
}

impl TimeTrace {
    pub fn new(t: Vec<f64>, intensity: Vec<f64>) -> Result<Self> {
        if t.len() != intensity.len() {
            return Err(Error::invalid(format!(
                "time and intensity lengths differ ({} vs {})",
                t.len(),
                intensity.len()
            )));
        }
        check_uniform(&t)?;
        Ok(Self {
            t,
            intensity,
            meta: TraceMeta::default(),
        })
    }

    pub fn dt(&self) -> f64 {
        (self.t[self.t.len() - 1] - self.t[0]) / (self.t.len() - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Index of the maximum sample.
    pub fn peak_index(&self) -> usize {
        self.intensity
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
            .0
    }

    /// Σ intensity × dt.
    pub fn integral(&self) -> f64 {
        self.intensity.iter().sum::<f64>() * self.dt()
    }

    /// Samples with `t >= t_start`.
    pub fn window_from(&self, t_start: f64) -> TimeTrace {
        let i0 = self.t.partition_point(|&t| t < t_start);
        TimeTrace {
            t: self.t[i0..].to_vec(),
            intensity: self.intensity[i0..].to_vec(),
            meta: self.meta.clone(),
        }
    }

    /// Rescale so the maximum sample equals `peak`.
    pub fn scaled_to_peak(mut self, peak: f64) -> TimeTrace {
        let max = self.intensity.iter().cloned().fold(0.0, f64::max);
        if max > 0.0 {
            let f = peak / max;
            self.intensity.iter_mut().for_each(|v| *v *= f);
        }
        self
    }
}

/// Intensity over a time × energy grid: one time column per energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    pub t: Vec<f64>,
    pub e: Vec<f64>,
    /// `intensity[i_e][i_t]`.
    pub intensity: Vec<Vec<f64>>,
}

impl Spectrogram {
    pub fn column(&self, i_e: usize) -> TimeTrace {
        TimeTrace {
            t: self.t.clone(),
            intensity: self.intensity[i_e].clone(),
            meta: TraceMeta {
                channel_energy_mev: Some(self.e[i_e]),
                ..TraceMeta::default()
            },
        }
    }

    /// Σ over energy columns × energy step.
    pub fn energy_integrated(&self) -> Vec<f64> {
        let de = if self.e.len() > 1 {
            (self.e[self.e.len() - 1] - self.e[0]) / (self.e.len() - 1) as f64
        } else {
            1.0
        };
        (0..self.t.len())
            .map(|i| self.intensity.iter().map(|c| c[i]).sum::<f64>() * de)
            .collect()
    }
}

/// Complex field detected through `channel` at time `t` (ps).
///
/// Emission starts at `t = 0`; earlier times return zero.
pub fn field_amplitude(set: &EmitterSet, t: f64, channel: &Channel) -> Complex64 {
    if t < 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    set.emitters
        .iter()
        .map(|e| emitter_field(e, t) * channel.weight(e.energy_mev))
        .sum()
}

/// Channel-independent pieces of the detected intensity.
///
/// The intensity is quadratic in the channel weights, so for every time
/// point the IRF-blurred matrix `R_jk(t)` is stored and any channel follows
/// as `wᵀ R(t) w`. This makes spectrograms cheap: the quadrature runs once.
#[derive(Debug, Clone)]
pub struct TraceBasis {
    t: Vec<f64>,
    k: usize,
    r: Vec<f64>,
    prompt: Vec<f64>,
    amplitudes: Vec<f64>,
    energies: Vec<f64>,
    shg: f64,
}

impl TraceBasis {
    pub fn new(set: &EmitterSet, t: &[f64], irf: Option<&InstrumentResponse>) -> Result<Self> {
        set.validate()?;
        check_uniform(t)?;
        if let Some(irf) = irf {
            irf.validate()?;
        }
        let k = set.emitters.len();
        let mut r = vec![0.0; t.len() * k * k];
        let mut prompt = vec![0.0; t.len()];
        match irf {
            None => {
                for (i, &ti) in t.iter().enumerate() {
                    if ti >= 0.0 {
                        accumulate(set, ti, 1.0, &mut r[i * k * k..(i + 1) * k * k]);
                    }
                }
            }
            Some(irf) => {
                let sigma = irf.time_sigma();
                let max_split = set.max_angular_split();
                let mut panel = 0.5 * sigma;
                if max_split > 0.0 {
                    panel = panel.min(std::f64::consts::TAU / max_split / 8.0);
                }
                r.par_chunks_mut(k * k)
                    .zip(t.par_iter())
                    .for_each(|(slot, &ti)| blurred_point(set, ti, sigma, panel, slot));
                for (p, &ti) in prompt.iter_mut().zip(t) {
                    *p = (-0.5 * (ti / sigma).powi(2)).exp();
                }
            }
        }
        Ok(Self {
            t: t.to_vec(),
            k,
            r,
            prompt,
            amplitudes: set.emitters.iter().map(|e| e.amplitude).collect(),
            energies: set.emitters.iter().map(|e| e.energy_mev).collect(),
            shg: set.shg_prompt_amplitude,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    /// Intensity seen through `channel`.
    pub fn column(&self, channel: &Channel) -> Vec<f64> {
        let w: Vec<f64> = self.energies.iter().map(|&e| channel.weight(e)).collect();
        let prompt_weight = {
            let total: f64 = self.amplitudes.iter().map(|a| a * a).sum();
            if total > 0.0 {
                self.amplitudes
                    .iter()
                    .zip(&w)
                    .map(|(a, w)| a * a * w * w)
                    .sum::<f64>()
                    / total
            } else {
                1.0
            }
        };
        let k = self.k;
        let shg2 = self.shg * self.shg * prompt_weight;
        (0..self.t.len())
            .map(|i| {
                let m = &self.r[i * k * k..(i + 1) * k * k];
                let mut acc = 0.0;
                for j in 0..k {
                    let row = &m[j * k..(j + 1) * k];
                    let inner: f64 = row.iter().zip(&w).map(|(r, w)| r * w).sum();
                    acc += w[j] * inner;
                }
                (acc + shg2 * self.prompt[i]).max(0.0)
            })
            .collect()
    }
}

/// Adds `scale · Re[(δ_jk(1 − d) + d) c_j c_k*]` at time `s` into `slot`.
fn accumulate(set: &EmitterSet, s: f64, scale: f64, slot: &mut [f64]) {
    let k = set.emitters.len();
    let d = set.cross_visibility * (-2.0 * set.pure_dephasing_rate * s).exp();
    let fields: Vec<Complex64> = set.emitters.iter().map(|e| emitter_field(e, s)).collect();
    for j in 0..k {
        slot[j * k + j] += scale * fields[j].norm_sqr();
        for l in (j + 1)..k {
            let v = scale * d * (fields[j] * fields[l].conj()).re;
            slot[j * k + l] += v;
            slot[l * k + j] += v;
        }
    }
}

/// ∫₀^∞ R(s) g(t − s) ds by composite Gauss–Legendre over the IRF window.
fn blurred_point(set: &EmitterSet, t: f64, sigma: f64, panel: f64, slot: &mut [f64]) {
    let hi = t + IRF_HALF_WIDTH * sigma;
    if hi <= 0.0 {
        return;
    }
    let lo = (t - IRF_HALF_WIDTH * sigma).max(0.0);
    let n_panels = (((hi - lo) / panel).ceil() as usize).clamp(1, MAX_PANELS);
    let h = (hi - lo) / n_panels as f64;
    let norm = 1.0 / (sigma * (std::f64::consts::TAU).sqrt());
    for p in 0..n_panels {
        let mid = lo + (p as f64 + 0.5) * h;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
            let s = mid + 0.5 * h * x;
            let u = (t - s) / sigma;
            let g = norm * (-0.5 * u * u).exp();
            accumulate(set, s, 0.5 * h * w * g, slot);
        }
    }
}

/// Detected intensity `I(t)` through `channel`, blurred by the IRF when
/// one is given.
///
/// Without an IRF the SHG prompt has no width and does not appear.
pub fn intensity_trace(
    set: &EmitterSet,
    t: &[f64],
    channel: &Channel,
    irf: Option<&InstrumentResponse>,
) -> Result<TimeTrace> {
    channel.validate()?;
    let basis = TraceBasis::new(set, t, irf)?;
    Ok(TimeTrace {
        t: t.to_vec(),
        intensity: basis.column(channel),
        meta: TraceMeta {
            channel_energy_mev: channel.center(),
            bandwidth_mev: channel.sigma().map(crate::units::sigma_to_fwhm),
            seed: None,
        },
    })
}

/// Time × energy map: column `e` is the trace through a Gaussian channel at
/// `e` whose intensity FWHM is the instrument's energy resolution.
pub fn spectrogram(
    set: &EmitterSet,
    t: &[f64],
    e: &[f64],
    irf: &InstrumentResponse,
) -> Result<Spectrogram> {
    check_uniform(e)?;
    let basis = TraceBasis::new(set, t, Some(irf))?;
    let sigma_e = irf.energy_sigma();
    let intensity = e
        .par_iter()
        .map(|&center| basis.column(&Channel::gaussian(center, sigma_e)))
        .collect();
    Ok(Spectrogram {
        t: t.to_vec(),
        e: e.to_vec(),
        intensity,
    })
}

/// Discrete convolution with a unit-sum Gaussian kernel of the given FWHM
/// (in the same units as `dt`). Preserves `Σ samples` for signals whose
/// blurred support stays inside the array.
pub fn gaussian_blur(samples: &[f64], dt: f64, fwhm: f64) -> Vec<f64> {
    let sigma = crate::units::fwhm_to_sigma(fwhm) / dt;
    if !(sigma > 0.0) || samples.is_empty() {
        return samples.to_vec();
    }
    let half = (IRF_HALF_WIDTH * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-half..=half)
        .map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let n = samples.len() as isize;
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (ki, k) in kernel.iter().enumerate() {
                let j = i + ki as isize - half;
                if (0..n).contains(&j) {
                    acc += k * samples[j as usize];
                }
            }
            acc
        })
        .collect()
}
