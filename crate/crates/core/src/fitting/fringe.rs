use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::lsq::{least_squares, Data, LsqOptions, ParamSpec};
use super::{FitFlag, FitResult};
use crate::dynamics::check_uniform;
use crate::error::{Error, Result};

/// Zero-padding factor for the initial fringe-frequency search.
const PAD: usize = 8;
/// Peak-to-median power ratio above which a fringe frequency counts as
/// detected.
const DETECTION_RATIO: f64 = 20.0;
/// Contrast estimates below this are indistinguishable from rounding.
const MIN_CONTRAST: f64 = 1e-8;

/// Gaussian-modulated cosine `A·exp(−(x−x0)²/2σ²)·½(C·cos(kx+φ) + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeModel {
    #[serde(rename = "A")]
    pub a: f64,
    pub x0: f64,
    pub sigma: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub k: f64,
    pub phi: f64,
}

impl FringeModel {
    pub const PARAMS: [&'static str; 6] = ["A", "x0", "sigma", "C", "k", "phi"];

    pub fn from_params(p: &[f64]) -> Self {
        Self {
            a: p[0],
            x0: p[1],
            sigma: p[2],
            c: p[3],
            k: p[4],
            phi: p[5],
        }
    }

    pub fn from_fit(fit: &FitResult) -> Result<Self> {
        let v: Vec<f64> = Self::PARAMS.iter().map(|n| fit.value(n)).collect::<Result<_>>()?;
        Ok(Self::from_params(&v))
    }

    pub fn eval(&self, x: f64) -> f64 {
        let env = (-0.5 * ((x - self.x0) / self.sigma).powi(2)).exp();
        self.a * env * 0.5 * (self.c * (self.k * x + self.phi).cos() + 1.0)
    }
}

fn envelope(p: &[f64], x: f64) -> f64 {
    p[0] * (-0.5 * ((x - p[1]) / p[2]).powi(2)).exp()
}

fn wrap_phase(phi: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let w = phi.rem_euclid(tau);
    if w > std::f64::consts::PI {
        w - tau
    } else {
        w
    }
}

/// Fits a [`FringeModel`] to one interferogram row.
///
/// The envelope is fitted first; the fringe wavenumber comes from the peak of
/// the zero-padded spectrum of the envelope residual and the phase from the
/// projection onto that frequency. When no fringe frequency stands out of the
/// residual spectrum, the result reports `C = 0` with a unit uncertainty and
/// carries [`FitFlag::LowSignificance`].
pub fn fit_fringe_slice(x: &[f64], row: &[f64]) -> Result<FitResult> {
    if x.len() != row.len() {
        return Err(Error::invalid("pixel and intensity lengths differ"));
    }
    if x.len() < 16 {
        return Err(Error::InsufficientData { needed: 16, got: x.len() });
    }
    let dx = check_uniform(x)?;
    let opts = LsqOptions::default();

    // Envelope moments as the starting point.
    let mass: f64 = row.iter().map(|v| v.max(0.0)).sum();
    if !(mass > 0.0) {
        return Err(Error::invalid("fringe row carries no signal"));
    }
    let mean = x.iter().zip(row).map(|(x, y)| x * y.max(0.0)).sum::<f64>() / mass;
    let var = x.iter().zip(row).map(|(x, y)| (x - mean).powi(2) * y.max(0.0)).sum::<f64>() / mass;
    let sd = var.sqrt().max(2.0 * dx);
    let peak = row.iter().cloned().fold(f64::MIN, f64::max);
    let env_fit = least_squares(
        envelope,
        Data::new(x, row),
        &[
            ParamSpec::positive("A", peak.max(f64::MIN_POSITIVE)),
            ParamSpec::free("x0", mean),
            ParamSpec::positive("sigma", sd),
        ],
        &opts,
    )?;
    let (a_env, x0, sigma) = (env_fit.values[0], env_fit.values[1], env_fit.values[2]);

    let residual: Vec<f64> = x.iter().zip(row).map(|(&x, &y)| y - envelope(&env_fit.values, x)).collect();
    let m = PAD * x.len();
    let mut buf: Vec<Complex64> = residual.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(m, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let power: Vec<f64> = buf[..m / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
    let dk = std::f64::consts::TAU / (m as f64 * dx);
    let j_min = ((2.0 / sigma) / dk).ceil().max(1.0) as usize;
    let band = &power[j_min.min(power.len() - 1)..];
    let (j_rel, &p_max) = band
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::invalid("row too short for a fringe search"))?;
    let j = j_rel + j_min;
    let mut sorted = band.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let shift = if j > 0 && j + 1 < power.len() {
        let (l, c, r) = (power[j - 1], power[j], power[j + 1]);
        let den = l - 2.0 * c + r;
        if den < 0.0 {
            (0.5 * (l - r) / den).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    } else {
        0.0
    };
    let k0 = (j as f64 + shift) * dk;
    let env_sum: f64 = x.iter().map(|&x| envelope(&[1.0, x0, sigma], x)).sum();
    let proj: Complex64 = x
        .iter()
        .zip(&residual)
        .map(|(&x, &d)| d * Complex64::from_polar(1.0, -k0 * x))
        .sum();
    let c0 = 2.0 * proj.norm() / (a_env * env_sum);
    let phi0 = proj.arg();

    if !(p_max >= DETECTION_RATIO * median) || !(c0 > MIN_CONTRAST) {
        return Ok(low_significance(env_fit, k0, phi0));
    }
    if k0 * sigma < std::f64::consts::TAU * 1.5 {
        return Err(Error::invalid(format!(
            "fewer than three fringe periods under the envelope (k·σ = {:.2})",
            k0 * sigma
        )));
    }
    let specs = [
        ParamSpec::positive("A", 2.0 * a_env),
        ParamSpec::free("x0", x0),
        ParamSpec::positive("sigma", sigma),
        ParamSpec::bounded("C", c0.clamp(0.02, 0.98), 0.0, 1.0),
        ParamSpec::positive("k", k0),
        ParamSpec::free("phi", phi0),
    ];
    let model = |p: &[f64], x: f64| FringeModel::from_params(p).eval(x);
    let mut fit = least_squares(model, Data::new(x, row), &specs, &opts)?.named("fringe");
    fit.values[5] = wrap_phase(fit.values[5]);
    let (c, c_sigma) = (fit.values[3], fit.sigmas[3]);
    if c < 2.0 * c_sigma {
        fit.flag(FitFlag::LowSignificance);
    }
    Ok(fit)
}

/// Envelope-only result with the contrast reported as zero ± 1.
fn low_significance(env: FitResult, k: f64, phi: f64) -> FitResult {
    let mut cov = vec![vec![0.0; 6]; 6];
    let scale = [2.0, 1.0, 1.0];
    for i in 0..3 {
        for j in 0..3 {
            cov[i][j] = env.covariance[i][j] * scale[i] * scale[j];
        }
    }
    let sigmas = vec![
        2.0 * env.sigmas[0],
        env.sigmas[1],
        env.sigmas[2],
        1.0,
        k,
        std::f64::consts::PI,
    ];
    for (i, s) in sigmas.iter().enumerate().skip(3) {
        cov[i][i] = s * s;
    }
    let mut fit = FitResult {
        model: "fringe".to_string(),
        names: FringeModel::PARAMS.iter().map(|s| s.to_string()).collect(),
        values: vec![2.0 * env.values[0], env.values[1], env.values[2], 0.0, k, wrap_phase(phi)],
        sigmas,
        covariance: cov,
        chi2_reduced: env.chi2_reduced,
        iterations: env.iterations,
        converged: env.converged,
        flags: env.flags,
    };
    fit.flag(FitFlag::LowSignificance);
    fit
}
