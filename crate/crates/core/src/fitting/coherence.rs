use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_contrast_decay, fit_fringe_slice, validate_t2_bound, ContrastFitOptions, ContrastPoint, FitResult, FloorMode, T2BoundReport};
use crate::dynamics::FringeImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoherenceOptions {
    /// Contrast decays to zero at long delay, so the floor is pinned there
    /// unless asked otherwise.
    pub contrast: ContrastFitOptions,
    /// Channels whose mean fringe-row peak stays below this fraction of the
    /// brightest channel are skipped.
    pub min_channel_fraction: f64,
    /// Lifetime (ps) and its uncertainty for the `T2 ≤ 2T1` check.
    pub t1_ps: Option<f64>,
    pub t1_sigma_ps: f64,
}

impl Default for CoherenceOptions {
    fn default() -> Self {
        Self {
            contrast: ContrastFitOptions {
                floor: FloorMode::Fixed(0.0),
                ..Default::default()
            },
            min_channel_fraction: 0.2,
            t1_ps: None,
            t1_sigma_ps: 0.0,
        }
    }
}

/// Contrast versus delay in one energy channel and its decay fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelCoherence {
    #[serde(rename = "energy_meV")]
    pub energy_mev: f64,
    pub points: Vec<ContrastPoint>,
    /// Delays whose fringe fit failed outright.
    pub failed_delays_ps: Vec<f64>,
    pub fit: Option<FitResult>,
    pub error: Option<String>,
    pub bound: Option<T2BoundReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceResult {
    pub channels: Vec<ChannelCoherence>,
    /// Index of the brightest analysed channel.
    pub primary: Option<usize>,
}

impl CoherenceResult {
    pub fn primary(&self) -> Option<&ChannelCoherence> {
        self.primary.map(|i| &self.channels[i])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Fits every row of every image, collects contrast against delay per
/// energy channel and fits its decay.
pub fn coherence_from_fringes(images: &[FringeImage], options: &CoherenceOptions) -> Result<CoherenceResult> {
    let Some(first) = images.first() else {
        return Err(Error::InsufficientData { needed: 4, got: 0 });
    };
    for img in images {
        if img.e != first.e || img.x != first.x {
            return Err(Error::invalid(format!(
                "fringe image at delay {} ps has a different pixel or energy grid",
                img.delay
            )));
        }
    }
    let n_e = first.e.len();
    let brightness: Vec<f64> = (0..n_e)
        .map(|j| {
            images
                .iter()
                .map(|img| img.row(j).iter().cloned().fold(0.0, f64::max))
                .sum::<f64>()
                / images.len() as f64
        })
        .collect();
    let brightest = brightness.iter().cloned().fold(0.0, f64::max);
    if !(brightest > 0.0) {
        return Err(Error::invalid("fringe images carry no signal"));
    }
    let selected: Vec<usize> = (0..n_e)
        .filter(|&j| brightness[j] >= options.min_channel_fraction * brightest)
        .collect();

    let channels: Vec<ChannelCoherence> = selected
        .par_iter()
        .map(|&j| channel_coherence(images, j, options))
        .collect();
    let primary = selected
        .iter()
        .enumerate()
        .filter(|(i, _)| channels[*i].fit.is_some())
        .max_by(|a, b| brightness[*a.1].total_cmp(&brightness[*b.1]))
        .map(|(i, _)| i);
    Ok(CoherenceResult { channels, primary })
}

fn channel_coherence(images: &[FringeImage], j: usize, options: &CoherenceOptions) -> ChannelCoherence {
    let mut points = Vec::with_capacity(images.len());
    let mut failed = Vec::new();
    for img in images {
        let fitted = fit_fringe_slice(&img.x, img.row(j)).and_then(|f| Ok((f.value("C")?, f.sigma("C")?)));
        match fitted {
            Ok((c, sigma)) => points.push(ContrastPoint {
                delay_ps: img.delay,
                contrast: c,
                sigma,
            }),
            Err(_) => failed.push(img.delay),
        }
    }
    points.sort_by(|a, b| a.delay_ps.total_cmp(&b.delay_ps));
    let (fit, error) = match fit_contrast_decay(&points, &options.contrast) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let bound = match (&fit, options.t1_ps) {
        (Some(f), Some(t1)) => validate_t2_bound(f, t1, options.t1_sigma_ps).ok(),
        _ => None,
    };
    ChannelCoherence {
        energy_mev: images[0].e[j],
        points,
        failed_delays_ps: failed,
        fit,
        error,
        bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{add_noise_rows, fringe_image, Emitter, EmitterSet, FringeGeometry, NoiseModel};

    fn stack(tau: f64, gamma_phi: f64, delays: &[f64], noise: bool) -> Vec<FringeImage> {
        let set = EmitterSet::new(vec![Emitter {
            state: "3S".parse().unwrap(),
            energy_mev: 0.0,
            lifetime_ps: tau,
            amplitude: 1.0,
            phase: 0.0,
        }])
        .unwrap()
        .with_pure_dephasing(gamma_phi);
        let e = [-0.2, 0.0, 0.2];
        delays
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let mut img = fringe_image(&set, d, &FringeGeometry::default(), &e, 0.2).unwrap();
                if noise {
                    img.intensity = add_noise_rows(&img.intensity, NoiseModel::Poisson { peak_counts: 1e4 }, 40 + i as u64).unwrap();
                }
                img
            })
            .collect()
    }

    #[test]
    fn single_emitter_t2_is_twice_t1() {
        let delays: Vec<f64> = (0..=30).map(|i| i as f64 * 0.5).collect();
        let opts = CoherenceOptions {
            t1_ps: Some(3.1),
            t1_sigma_ps: 0.1,
            ..Default::default()
        };
        let r = coherence_from_fringes(&stack(3.1, 0.0, &delays, true), &opts).unwrap();
        let p = r.primary().unwrap();
        let t2 = p.fit.as_ref().unwrap().value("T2").unwrap();
        assert!((5.8..=6.6).contains(&t2), "{t2}");
        assert!(!p.bound.unwrap().violation);
    }

    #[test]
    fn noise_free_stack_is_exact() {
        let delays: Vec<f64> = (0..=20).map(|i| i as f64).collect();
        let r = coherence_from_fringes(&stack(5.0, 0.02, &delays, false), &CoherenceOptions::default()).unwrap();
        let t2 = r.primary().unwrap().fit.as_ref().unwrap().value("T2").unwrap();
        let expected = 1.0 / (1.0 / 10.0 + 0.02);
        assert!((t2 - expected).abs() < 1e-3 * expected, "{t2} vs {expected}");
    }

    #[test]
    fn mismatched_grids_rejected() {
        let mut s = stack(3.0, 0.0, &[0.0, 1.0], false);
        s[1].e[0] += 0.01;
        assert!(matches!(coherence_from_fringes(&s, &Default::default()), Err(Error::InvalidInput(_))));
        assert!(coherence_from_fringes(&[], &Default::default()).is_err());
    }
}
