use std::ops::RangeInclusive;

use serde::Serialize;

use super::{Series, StateCatalog, StateId};

/// What the comparison between T₁ and ħ/Γ is expected to show.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    /// |T₁ − ħ/Γ| within the sum of the two quoted errors.
    Agree,
    /// T₁ strictly longer than ħ/Γ.
    LongerThanLinewidth,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyRow {
    pub state: StateId,
    pub lifetime_ps: f64,
    pub hbar_over_gamma_ps: f64,
    pub difference_ps: f64,
    pub combined_err_ps: f64,
    pub expectation: Expectation,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyCheck {
    pub rows: Vec<ConsistencyRow>,
}

impl ConsistencyCheck {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConsistencyRow> {
        self.rows.iter().filter(|r| !r.pass)
    }
}

/// Compare measured lifetimes with inverse linewidths: S states in
/// `s_range` must agree within the combined quoted errors, D states in
/// `d_range` must outlive their inverse linewidth.
pub fn linewidth_consistency(
    catalog: &StateCatalog,
    s_range: RangeInclusive<u32>,
    d_range: RangeInclusive<u32>,
) -> ConsistencyCheck {
    let mut rows = Vec::new();
    for (series, range, expectation) in [
        (Series::S, s_range, Expectation::Agree),
        (Series::D, d_range, Expectation::LongerThanLinewidth),
    ] {
        for r in catalog.series_records(series, range) {
            let difference = r.lifetime - r.hbar_over_gamma;
            let combined = r.lifetime_err + r.hbar_over_gamma_err;
            let pass = match expectation {
                Expectation::Agree => difference.abs() <= combined,
                Expectation::LongerThanLinewidth => difference > 0.0,
            };
            rows.push(ConsistencyRow {
                state: r.id,
                lifetime_ps: r.lifetime,
                hbar_over_gamma_ps: r.hbar_over_gamma,
                difference_ps: difference,
                combined_err_ps: combined,
                expectation,
                pass,
            });
        }
    }
    ConsistencyCheck { rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    #[allow(clippy::reversed_empty_ranges)]
    fn d_states_outlive_inverse_linewidth() {
        let c = StateCatalog::embedded();
        let check = linewidth_consistency(&c, 1..=0, 3..=6);
        assert_eq!(check.rows.len(), 7);
        assert!(check.pass());
    }

    #[test]
    #[allow(clippy::reversed_empty_ranges)]
    fn s_state_rows_report_differences() {
        let c = StateCatalog::embedded();
        let check = linewidth_consistency(&c, 2..=9, 1..=0);
        assert_eq!(check.rows.len(), 8);
        let row4 = check.rows.iter().find(|r| r.state.n == 4).unwrap();
        assert!((row4.difference_ps - 0.1).abs() < 1e-12);
        assert!((row4.combined_err_ps - 0.25).abs() < 1e-12);
        assert!(row4.pass);
        // Tabulated 3S and 9S differ by more than their quoted errors.
        let failing: Vec<u32> = check.failures().map(|r| r.state.n).collect();
        assert_eq!(failing, vec![3, 9]);
    }
}
