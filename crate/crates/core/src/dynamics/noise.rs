use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Measurement noise added to simulated signals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// Shot noise. The signal maximum corresponds to `peak_counts` counts;
    /// the result is scaled back to the input units.
    Poisson { peak_counts: f64 },
    /// Additive white Gaussian noise.
    Gaussian { sigma: f64 },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Poisson { peak_counts } if !(peak_counts > 0.0) || !peak_counts.is_finite() => {
                Err(Error::invalid(format!("Poisson peak counts must be positive, got {peak_counts}")))
            }
            NoiseModel::Gaussian { sigma } if !(sigma > 0.0) || !sigma.is_finite() => {
                Err(Error::invalid(format!("Gaussian sigma must be positive, got {sigma}")))
            }
            _ => Ok(()),
        }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn apply(signal: &[f64], model: NoiseModel, scale_max: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    match model {
        NoiseModel::Poisson { peak_counts } => {
            if signal.iter().any(|&v| v < 0.0) {
                return Err(Error::invalid("Poisson noise needs a non-negative signal"));
            }
            if !(scale_max > 0.0) {
                return Ok(signal.to_vec());
            }
            let factor = peak_counts / scale_max;
            signal
                .iter()
                .map(|&v| {
                    let lambda = v * factor;
                    if lambda > 0.0 {
                        let p = Poisson::new(lambda).map_err(|e| Error::invalid(e.to_string()))?;
                        Ok(p.sample(rng) / factor)
                    } else {
                        Ok(0.0)
                    }
                })
                .collect()
        }
        NoiseModel::Gaussian { sigma } => {
            let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
            Ok(signal.iter().map(|&v| v + normal.sample(rng)).collect())
        }
    }
}

/// Noisy copy of `signal`, deterministic in `seed`.
pub fn add_noise(signal: &[f64], model: NoiseModel, seed: u64) -> Result<Vec<f64>> {
    model.validate()?;
    let max = signal.iter().cloned().fold(0.0, f64::max);
    apply(signal, model, max, &mut rng_for(seed, 0))
}

/// Noise for a 2-D signal. Each row draws from its own stream derived from
/// `seed`, so the result does not depend on how rows are scheduled. The
/// Poisson scale refers to the maximum over all rows.
pub fn add_noise_rows(rows: &[Vec<f64>], model: NoiseModel, seed: u64) -> Result<Vec<Vec<f64>>> {
    model.validate()?;
    let max = rows
        .iter()
        .flat_map(|r| r.iter())
        .cloned()
        .fold(0.0, f64::max);
    rows.par_iter()
        .enumerate()
        .map(|(i, row)| apply(row, model, max, &mut rng_for(seed, i as u64 + 1)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_output() {
        let s: Vec<f64> = (0..100).map(|i| (i as f64 * 0.1).sin().abs() * 10.0).collect();
        let m = NoiseModel::Poisson { peak_counts: 1e3 };
        assert_eq!(add_noise(&s, m, 7).unwrap(), add_noise(&s, m, 7).unwrap());
        assert_ne!(add_noise(&s, m, 7).unwrap(), add_noise(&s, m, 8).unwrap());
        let g = NoiseModel::Gaussian { sigma: 0.1 };
        assert_eq!(add_noise(&s, g, 3).unwrap(), add_noise(&s, g, 3).unwrap());
    }

    #[test]
    fn poisson_relative_rms_at_peak() {
        // Monte-Carlo: a constant 1e6-count signal fluctuates by 1/√N.
        let s = vec![1.0; 20_000];
        let noisy = add_noise(&s, NoiseModel::Poisson { peak_counts: 1e6 }, 11).unwrap();
        let rms = (noisy.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>() / s.len() as f64).sqrt();
        assert!((rms - 1e-3).abs() < 5e-5, "{rms}");
        let mean = noisy.iter().sum::<f64>() / s.len() as f64;
        assert!((mean - 1.0).abs() < 5e-5);
        assert!(noisy.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn invalid_parameters_rejected() {
        let s = vec![1.0; 4];
        assert!(add_noise(&s, NoiseModel::Gaussian { sigma: 0.0 }, 1).is_err());
        assert!(add_noise(&s, NoiseModel::Poisson { peak_counts: -1.0 }, 1).is_err());
        assert!(add_noise(&[-1.0], NoiseModel::Poisson { peak_counts: 10.0 }, 1).is_err());
    }

    #[test]
    fn rows_independent_of_scheduling() {
        let rows: Vec<Vec<f64>> = (0..16).map(|r| vec![r as f64 + 1.0; 50]).collect();
        let m = NoiseModel::Poisson { peak_counts: 500.0 };
        let a = add_noise_rows(&rows, m, 5).unwrap();
        let b = add_noise_rows(&rows, m, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }
}
