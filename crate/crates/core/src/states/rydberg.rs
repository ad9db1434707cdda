use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use super::{Series, StateCatalog, StateId};
use crate::error::{Error, Result};

/// Quantum-defect description of the yellow series: level energies
/// `E_n = E_g − Ry*/(n − δ_L)²` and lifetimes `τ = A_L·(n − δ_L)³` below a
/// plateau that starts at `plateau_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RydbergModel {
    pub gap_energy_ev: f64,
    pub rydberg_energy_mev: f64,
    pub defects: BTreeMap<Series, f64>,
    /// `A_L` in ps.
    pub lifetime_scale: BTreeMap<Series, f64>,
    pub plateau_n: u32,
    pub plateau_lifetime: BTreeMap<Series, f64>,
}

/// How the lifetime scale calibration weights each measured lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationWeighting {
    /// Weight 1/σ² from the quoted lifetime error.
    #[default]
    InverseVariance,
    Unweighted,
}

pub const DEFECT_S: f64 = 0.56;
pub const DEFECT_D: f64 = 0.08;

impl RydbergModel {
    /// Model calibrated on `catalog`: defects δ_S = 0.56 and δ_D = 0.08,
    /// lifetime scales fitted on n = 4..=6, plateau from n ≥ 7 and series
    /// limit fitted on the S levels n = 3..=9.
    pub fn calibrated(catalog: &StateCatalog) -> Result<Self> {
        Self::calibrated_with(catalog, 4..=6, CalibrationWeighting::default(), 7)
    }

    pub fn calibrated_with(
        catalog: &StateCatalog,
        calibration: RangeInclusive<u32>,
        weighting: CalibrationWeighting,
        plateau_n: u32,
    ) -> Result<Self> {
        if plateau_n < 2 {
            return Err(Error::invalid("plateau_n must be >= 2"));
        }
        let defects: BTreeMap<Series, f64> = [(Series::S, DEFECT_S), (Series::D, DEFECT_D)].into();
        let mut lifetime_scale = BTreeMap::new();
        let mut plateau_lifetime = BTreeMap::new();
        for (&series, &defect) in &defects {
            let a = calibrate_lifetime_scale(
                catalog,
                series,
                defect,
                calibration.clone(),
                weighting,
            )?;
            lifetime_scale.insert(series, a);
            let plateau: Vec<f64> = catalog
                .series_records(series, plateau_n..=u32::MAX)
                .iter()
                .map(|r| r.lifetime)
                .collect();
            if !plateau.is_empty() {
                plateau_lifetime.insert(series, plateau.iter().sum::<f64>() / plateau.len() as f64);
            }
        }
        let energies = fit_rydberg_energies(catalog, Series::S, 3..=9, DEFECT_S)?;
        Ok(Self {
            gap_energy_ev: energies.gap_energy_ev,
            rydberg_energy_mev: energies.rydberg_energy_mev,
            defects,
            lifetime_scale,
            plateau_n,
            plateau_lifetime,
        })
    }

    pub fn defect(&self, series: Series) -> Result<f64> {
        self.defects
            .get(&series)
            .copied()
            .ok_or_else(|| Error::NotFound(format!("no quantum defect for the {series:?} series")))
    }

    pub fn effective_n(&self, id: &StateId) -> Result<f64> {
        Ok(id.n as f64 - self.defect(id.series)?)
    }

    /// Level energy in eV from the quantum-defect formula.
    pub fn level_energy_ev(&self, id: &StateId) -> Result<f64> {
        let n_star = self.effective_n(id)?;
        Ok(self.gap_energy_ev - 1e-3 * self.rydberg_energy_mev / (n_star * n_star))
    }
}

/// Predicted T₁ in ps: `A_L·(n − δ_L)³` below the plateau, else the plateau
/// lifetime of the series.
pub fn predicted_lifetime(id: &StateId, model: &RydbergModel) -> Result<f64> {
    let defect = model.defect(id.series)?;
    if !(0.0..1.0).contains(&defect) {
        return Err(Error::invalid(format!("quantum defect {defect} outside [0, 1)")));
    }
    if id.n >= model.plateau_n {
        if let Some(&p) = model.plateau_lifetime.get(&id.series) {
            return Ok(p);
        }
    }
    let scale = model.lifetime_scale.get(&id.series).copied().ok_or_else(|| {
        Error::NotFound(format!("no lifetime scale for the {:?} series", id.series))
    })?;
    let n_star = id.n as f64 - defect;
    Ok(scale * n_star.powi(3))
}

/// Least-squares `A_L` for `τ = A_L·(n − δ)³` over the measured yellow-series
/// lifetimes with `n` in `n_range`.
pub fn calibrate_lifetime_scale(
    catalog: &StateCatalog,
    series: Series,
    defect: f64,
    n_range: RangeInclusive<u32>,
    weighting: CalibrationWeighting,
) -> Result<f64> {
    let recs = catalog.series_records(series, n_range);
    if recs.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let (mut num, mut den) = (0.0, 0.0);
    for r in recs {
        let c = (r.id.n as f64 - defect).powi(3);
        let w = match weighting {
            CalibrationWeighting::Unweighted => 1.0,
            CalibrationWeighting::InverseVariance if r.lifetime_err > 0.0 => {
                1.0 / (r.lifetime_err * r.lifetime_err)
            }
            CalibrationWeighting::InverseVariance => {
                return Err(Error::invalid(format!(
                    "{} has no lifetime error for inverse-variance weighting",
                    r.id
                )))
            }
        };
        num += w * r.lifetime * c;
        den += w * c * c;
    }
    Ok(num / den)
}

/// Series limit and Rydberg energy fitted to catalog levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RydbergEnergyFit {
    pub gap_energy_ev: f64,
    pub rydberg_energy_mev: f64,
    /// Observed minus fitted energy per state, in meV.
    pub residuals_mev: Vec<(StateId, f64)>,
}

/// Linear least-squares fit of `E_n = E_g − Ry*/(n − δ)²` with the defect
/// held fixed.
pub fn fit_rydberg_energies(
    catalog: &StateCatalog,
    series: Series,
    n_range: RangeInclusive<u32>,
    defect: f64,
) -> Result<RydbergEnergyFit> {
    let recs = catalog.series_records(series, n_range);
    if recs.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: recs.len(),
        });
    }
    // Work in meV and centre the regressor for conditioning.
    let pts: Vec<(StateId, f64, f64)> = recs
        .iter()
        .map(|r| {
            let n_star = r.id.n as f64 - defect;
            (r.id, 1.0 / (n_star * n_star), r.energy_mev())
        })
        .collect();
    let m = pts.len() as f64;
    let x_mean = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let y_mean = pts.iter().map(|p| p.2).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.1 - x_mean).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit("all levels share one principal number".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.1 - x_mean) * (p.2 - y_mean)).sum();
    let slope = sxy / sxx;
    let gap_mev = y_mean - slope * x_mean;
    let rydberg = -slope;
    let residuals_mev = pts
        .iter()
        .map(|&(id, x, y)| (id, y - (gap_mev - rydberg * x)))
        .collect();
    Ok(RydbergEnergyFit {
        gap_energy_ev: gap_mev * 1e-3,
        rydberg_energy_mev: rydberg,
        residuals_mev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{SeriesColor, StateRecord, ValueSource};

    fn id(s: &str) -> StateId {
        s.parse().unwrap()
    }

    #[test]
    fn calibrated_s_scale_predicts_measured_lifetimes() {
        let c = StateCatalog::embedded();
        let m = RydbergModel::calibrated(&c).unwrap();
        let t5 = predicted_lifetime(&id("5S"), &m).unwrap();
        let t6 = predicted_lifetime(&id("6S"), &m).unwrap();
        // Inverse-variance weighted scale, computed by hand: 0.124301 ps.
        assert!((m.lifetime_scale[&Series::S] - 0.124_300_7).abs() < 1e-6);
        assert!((10.2..=12.6).contains(&t5), "{t5}");
        assert!((17.5..=20.5).contains(&t6), "{t6}");
    }

    #[test]
    fn unweighted_calibration_also_in_range() {
        let c = StateCatalog::embedded();
        let a = calibrate_lifetime_scale(&c, Series::S, DEFECT_S, 4..=6, CalibrationWeighting::Unweighted)
            .unwrap();
        assert!((a - 0.121_019_6).abs() < 1e-6);
        let t5 = a * 4.44f64.powi(3);
        assert!((10.2..=12.6).contains(&t5));
    }

    #[test]
    fn plateau_is_flat() {
        let c = StateCatalog::embedded();
        let m = RydbergModel::calibrated(&c).unwrap();
        let p = m.plateau_lifetime[&Series::S];
        assert!((p - (20.0 + 21.5 + 22.0) / 3.0).abs() < 1e-12);
        for n in [7, 8, 9, 15] {
            assert_eq!(predicted_lifetime(&StateId::yellow(n, Series::S), &m).unwrap(), p);
        }
        assert!((m.plateau_lifetime[&Series::D] - 64.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn predictions_positive_and_missing_series_rejected() {
        let c = StateCatalog::embedded();
        let m = RydbergModel::calibrated(&c).unwrap();
        for n in 1..7 {
            assert!(predicted_lifetime(&StateId::yellow(n, Series::S), &m).unwrap() > 0.0);
        }
        assert!(matches!(
            predicted_lifetime(&id("2P"), &m),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn measured_ratios_follow_cubic_scaling() {
        let c = StateCatalog::embedded();
        let t = |l: &str| c.by_label(l).unwrap().lifetime;
        let r54 = (4.44f64 / 3.44).powi(3);
        let r65 = (5.44f64 / 4.44).powi(3);
        assert!(((t("5S") / t("4S")) / r54 - 1.0).abs() < 0.15);
        assert!(((t("6S") / t("5S")) / r65 - 1.0).abs() < 0.15);
    }

    #[test]
    fn s_series_energy_fit_residuals_small() {
        let c = StateCatalog::embedded();
        let fit = fit_rydberg_energies(&c, Series::S, 3..=9, DEFECT_S).unwrap();
        assert_eq!(fit.residuals_mev.len(), 7);
        for (sid, r) in &fit.residuals_mev {
            assert!(r.abs() < 0.5, "{sid}: {r}");
        }
        // Reference solution from an independent normal-equation solve.
        assert!((fit.gap_energy_ev * 1e3 - 2171.5999).abs() < 1e-3);
        assert!((fit.rydberg_energy_mev - 68.0042).abs() < 1e-3);
    }

    #[test]
    fn synthetic_levels_recovered_exactly() {
        let (eg, ry) = (2.17208, 86.0);
        let records = (3..=9)
            .map(|n| {
                let ns = n as f64 - DEFECT_S;
                StateRecord {
                    id: StateId::yellow(n, Series::S),
                    energy_ev: eg - 1e-3 * ry / (ns * ns),
                    hbar_over_gamma: 1.0,
                    hbar_over_gamma_err: 0.0,
                    lifetime: 1.0,
                    lifetime_err: 0.1,
                    source: ValueSource::Measured,
                }
            })
            .collect();
        let c = StateCatalog::new(records, vec![]).unwrap();
        let fit = fit_rydberg_energies(&c, Series::S, 1..=20, DEFECT_S).unwrap();
        assert!((fit.gap_energy_ev - eg).abs() / eg < 1e-9);
        assert!((fit.rydberg_energy_mev - ry).abs() / ry < 1e-9);
    }

    #[test]
    fn two_points_is_insufficient() {
        let c = StateCatalog::embedded();
        assert!(matches!(
            fit_rydberg_energies(&c, Series::S, 3..=4, DEFECT_S),
            Err(Error::InsufficientData { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn green_series_excluded_from_fits() {
        let c = StateCatalog::embedded();
        let recs = c.series_records(Series::S, 1..=9);
        assert!(recs.iter().all(|r| r.id.color == SeriesColor::Yellow));
    }
}
