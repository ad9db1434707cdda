use serde::{Deserialize, Serialize};

use super::BeatPeak;
use crate::error::{Error, Result};
use crate::states::{Series, SeriesColor, StateCatalog, StateId};

/// Default assignment tolerance (meV).
pub const DEFAULT_TOLERANCE_MEV: f64 = 0.12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssignOptions {
    #[serde(rename = "tolerance_meV")]
    pub tolerance_mev: f64,
    /// Keep only pairs containing this state (the state whose trace is
    /// analyzed); it is listed first in each pair.
    pub focus: Option<StateId>,
    /// Inclusive range of principal quantum numbers both partners must lie in.
    pub n_range: Option<(u32, u32)>,
}

impl Default for AssignOptions {
    fn default() -> Self {
        Self {
            tolerance_mev: DEFAULT_TOLERANCE_MEV,
            focus: None,
            n_range: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub pair: (StateId, StateId),
    #[serde(rename = "split_meV")]
    pub split_mev: f64,
    #[serde(rename = "mismatch_meV")]
    pub mismatch_mev: f64,
    /// The split is a quoted value rather than an energy difference.
    pub overridden: bool,
}

impl Candidate {
    pub fn label(&self) -> String {
        format!("{}-{}", self.pair.0, self.pair.1)
    }

    /// Unordered comparison with a pair of states.
    pub fn is_pair(&self, a: &StateId, b: &StateId) -> bool {
        (self.pair.0 == *a && self.pair.1 == *b) || (self.pair.0 == *b && self.pair.1 == *a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatAssignment {
    pub peak: BeatPeak,
    pub candidates: Vec<Candidate>,
}

impl BeatAssignment {
    pub fn top(&self) -> Option<&Candidate> {
        self.candidates.first()
    }
}

fn in_pool(a: &StateId, b: &StateId) -> bool {
    use Series::*;
    if a.color != SeriesColor::Yellow || b.color != SeriesColor::Yellow || a == b {
        return false;
    }
    let sdf = |s: Series| matches!(s, S | D | F);
    let sd = |s: Series| matches!(s, S | D);
    (a.n == b.n && sdf(a.series) && sdf(b.series)) || (a.n.abs_diff(b.n) == 1 && sd(a.series) && sd(b.series))
}

/// Candidate state pairs with their splits, before matching to a peak.
pub fn candidate_pool(catalog: &StateCatalog, options: &AssignOptions) -> Result<Vec<(StateId, StateId, f64, bool)>> {
    if catalog.records().is_empty() {
        return Err(Error::invalid("catalog is empty"));
    }
    if let Some(f) = &options.focus {
        if !catalog.is_known(f) {
            return Err(Error::NotFound(format!("state {f} is not in the catalog")));
        }
    }
    let mut states = catalog.known_states();
    states.sort();
    states.dedup();
    let in_range = |s: &StateId| options.n_range.is_none_or(|(lo, hi)| (lo..=hi).contains(&s.n));
    let mut pool = Vec::new();
    for (i, a) in states.iter().enumerate() {
        for b in &states[i + 1..] {
            if !in_pool(a, b) || !in_range(a) || !in_range(b) {
                continue;
            }
            let (a, b) = match &options.focus {
                Some(f) if f == a => (*a, *b),
                Some(f) if f == b => (*b, *a),
                Some(_) => continue,
                None => (*a, *b),
            };
            let Ok(split) = catalog.energy_split(&a, &b) else {
                continue;
            };
            pool.push((a, b, split.value_mev.abs(), split.overridden));
        }
    }
    Ok(pool)
}

/// Matches each peak energy against state-pair splits within the tolerance,
/// nearest first (ties broken by the pair's state order).
pub fn assign_peaks(peaks: &[BeatPeak], catalog: &StateCatalog, options: &AssignOptions) -> Result<Vec<BeatAssignment>> {
    if !(options.tolerance_mev >= 0.0) {
        return Err(Error::invalid("tolerance must be non-negative"));
    }
    let pool = candidate_pool(catalog, options)?;
    Ok(peaks
        .iter()
        .map(|peak| {
            let mut candidates: Vec<Candidate> = pool
                .iter()
                .filter_map(|&(a, b, split, overridden)| {
                    let mismatch = (split - peak.energy).abs();
                    (mismatch <= options.tolerance_mev).then_some(Candidate {
                        pair: (a, b),
                        split_mev: split,
                        mismatch_mev: mismatch,
                        overridden,
                    })
                })
                .collect();
            candidates.sort_by(|x, y| x.mismatch_mev.total_cmp(&y.mismatch_mev).then(x.pair.cmp(&y.pair)));
            BeatAssignment {
                peak: *peak,
                candidates,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beats::PeakRank;
    use crate::units::thz_to_mev;

    fn peak(nu: f64) -> BeatPeak {
        BeatPeak {
            nu,
            nu_err: 0.01,
            energy: thz_to_mev(nu).unwrap(),
            energy_err: thz_to_mev(0.01).unwrap(),
            amplitude: 1.0,
            rank: PeakRank::Major,
        }
    }

    fn id(s: &str) -> StateId {
        s.parse().unwrap()
    }

    #[test]
    fn major_4s_beat_is_4s_4d2() {
        let cat = StateCatalog::embedded();
        let a = assign_peaks(&[peak(0.30)], &cat, &AssignOptions::default()).unwrap();
        let top = a[0].top().unwrap();
        assert!(top.is_pair(&id("4S"), &id("4D2")));
        assert_eq!(top.split_mev, 1.21);
        assert!(top.overridden);
    }

    #[test]
    fn focus_selects_7s_7d() {
        let cat = StateCatalog::embedded();
        let opts = AssignOptions {
            focus: Some(id("7S")),
            ..Default::default()
        };
        let a = assign_peaks(&[peak(0.065)], &cat, &opts).unwrap();
        let top = a[0].top().unwrap();
        assert_eq!(top.pair, (id("7S"), id("7D")));
        assert!((top.split_mev - 0.30).abs() < 1e-12);
        // Without a focus the closer 4D2-4D1 quoted split wins.
        let a = assign_peaks(&[peak(0.065)], &cat, &AssignOptions::default()).unwrap();
        assert!(a[0].candidates.iter().any(|c| c.is_pair(&id("7S"), &id("7D"))));
    }

    #[test]
    fn far_peak_has_no_candidates() {
        let cat = StateCatalog::embedded();
        let a = assign_peaks(&[peak(10.0)], &cat, &AssignOptions::default()).unwrap();
        assert!(a[0].candidates.is_empty());
    }

    #[test]
    fn candidates_within_tolerance_and_sorted() {
        let cat = StateCatalog::embedded();
        for nu in [0.05, 0.095, 0.14, 0.22, 0.42] {
            let a = &assign_peaks(&[peak(nu)], &cat, &AssignOptions::default()).unwrap()[0];
            assert!(a.candidates.iter().all(|c| c.mismatch_mev <= DEFAULT_TOLERANCE_MEV));
            assert!(a.candidates.windows(2).all(|w| w[0].mismatch_mev <= w[1].mismatch_mev));
        }
    }

    #[test]
    fn unknown_focus_is_not_found() {
        let cat = StateCatalog::embedded();
        let opts = AssignOptions {
            focus: Some(id("12S")),
            ..Default::default()
        };
        assert!(matches!(assign_peaks(&[peak(0.1)], &cat, &opts), Err(Error::NotFound(_))));
    }

    #[test]
    fn stable_under_record_reordering() {
        let cat = StateCatalog::embedded();
        let mut records = cat.records().to_vec();
        records.reverse();
        let mut overrides = cat.overrides().to_vec();
        overrides.reverse();
        let shuffled = StateCatalog::new(records, overrides).unwrap();
        let peaks: Vec<BeatPeak> = [0.05, 0.07, 0.12, 0.3].iter().map(|&f| peak(f)).collect();
        assert_eq!(
            assign_peaks(&peaks, &cat, &AssignOptions::default()).unwrap(),
            assign_peaks(&peaks, &shuffled, &AssignOptions::default()).unwrap()
        );
    }
}
