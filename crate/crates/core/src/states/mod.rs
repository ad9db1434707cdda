//! Exciton state catalog: identifiers, per-state energies, linewidth times
//! and lifetimes, plus quoted beat splits that supersede energy differences.
//!
//! The default catalog is embedded in the crate and loads with
//! [`StateCatalog::embedded`]. A different catalog can be read from JSON with
//! [`StateCatalog::from_json`].

mod consistency;
mod rydberg;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use consistency::{linewidth_consistency, ConsistencyCheck, ConsistencyRow};
pub use rydberg::{
    calibrate_lifetime_scale, fit_rydberg_energies, predicted_lifetime, CalibrationWeighting,
    RydbergEnergyFit, RydbergModel,
};

const EMBEDDED_CATALOG: &str = include_str!("../../data/default_catalog.json");

/// Angular-momentum series label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Series {
    S,
    P,
    D,
    F,
}

impl Series {
    pub fn letter(self) -> char {
        match self {
            Series::S => 'S',
            Series::P => 'P',
            Series::D => 'D',
            Series::F => 'F',
        }
    }

    fn from_letter(c: char) -> Option<Self> {
        match c {
            'S' => Some(Series::S),
            'P' => Some(Series::P),
            'D' => Some(Series::D),
            'F' => Some(Series::F),
            _ => None,
        }
    }
}

/// Which exciton series (valence band pairing) a state belongs to.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum SeriesColor {
    #[default]
    Yellow,
    Green,
}

/// Quantum numbers identifying one catalog state.
///
/// The textual label is `<n><series>[sublevel][g]`, e.g. `3S`, `4D2`, `1Sg`
/// (the trailing `g` marks the green series).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId {
    pub color: SeriesColor,
    pub series: Series,
    pub n: u32,
    pub sublevel: u8,
}

impl StateId {
    pub fn new(n: u32, series: Series, sublevel: u8, color: SeriesColor) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("principal quantum number must be >= 1"));
        }
        if sublevel > 2 {
            return Err(Error::invalid(format!("sublevel {sublevel} is not in 0..=2")));
        }
        if sublevel != 0 && series != Series::D {
            return Err(Error::invalid(format!(
                "only D states carry a sublevel, got {}{}{}",
                n,
                series.letter(),
                sublevel
            )));
        }
        Ok(Self {
            color,
            series,
            n,
            sublevel,
        })
    }

    /// Yellow-series state without sublevel.
    pub fn yellow(n: u32, series: Series) -> Self {
        Self::new(n, series, 0, SeriesColor::Yellow).expect("valid yellow state")
    }

    pub fn label(&self) -> String {
        self.to_string()
    }

    /// Same principal number and series, ignoring the D sublevel.
    pub fn same_multiplet(&self, other: &StateId) -> bool {
        self.color == other.color && self.series == other.series && self.n == other.n
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.n, self.series.letter())?;
        if self.sublevel > 0 {
            write!(f, "{}", self.sublevel)?;
        }
        if self.color == SeriesColor::Green {
            write!(f, "g")?;
        }
        Ok(())
    }
}

impl FromStr for StateId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("malformed state label `{s}`"));
        let s_trim = s.trim();
        let digits_end = s_trim
            .find(|c: char| !c.is_ascii_digit())
            .ok_or_else(bad)?;
        if digits_end == 0 {
            return Err(bad());
        }
        let n: u32 = s_trim[..digits_end].parse().map_err(|_| bad())?;
        let mut rest = s_trim[digits_end..].chars();
        let series = rest.next().and_then(Series::from_letter).ok_or_else(bad)?;
        let mut sublevel = 0u8;
        let mut color = SeriesColor::Yellow;
        for c in rest {
            match c {
                '1' | '2' if sublevel == 0 && color == SeriesColor::Yellow => {
                    sublevel = c as u8 - b'0'
                }
                'g' if color == SeriesColor::Yellow => color = SeriesColor::Green,
                _ => return Err(bad()),
            }
        }
        StateId::new(n, series, sublevel, color)
    }
}

impl Serialize for StateId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for StateId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Where a tabulated linewidth value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueSource {
    Measured,
    Literature,
}

/// One catalog entry. Energy in eV, times in ps.
#[derive(Debug, Clone, PartialEq)]
pub struct StateRecord {
    pub id: StateId,
    pub energy_ev: f64,
    pub hbar_over_gamma: f64,
    pub hbar_over_gamma_err: f64,
    pub lifetime: f64,
    pub lifetime_err: f64,
    pub source: ValueSource,
}

impl StateRecord {
    pub fn energy_mev(&self) -> f64 {
        self.energy_ev * 1e3
    }

    fn validate(&self) -> Result<()> {
        let label = self.id;
        for (name, v) in [
            ("energy_eV", self.energy_ev),
            ("hbar_over_gamma_ps", self.hbar_over_gamma),
            ("lifetime_ps", self.lifetime),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{label}: {name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("hbar_over_gamma_err_ps", self.hbar_over_gamma_err),
            ("lifetime_err_ps", self.lifetime_err),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "{label}: {name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Quoted beat split that takes precedence over the energy difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitOverride {
    pub a: StateId,
    pub b: StateId,
    pub split_mev: f64,
}

/// Result of [`StateCatalog::energy_split`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergySplit {
    /// Split to use: the override when one exists, else the energy difference.
    pub value_mev: f64,
    /// |E_a − E_b| from catalog energies, when both states have one.
    pub from_energies_mev: Option<f64>,
    pub overridden: bool,
}

/// Ordered list of states plus quoted split overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct StateCatalog {
    records: Vec<StateRecord>,
    overrides: Vec<SplitOverride>,
}

fn unordered(a: StateId, b: StateId) -> (StateId, StateId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl StateCatalog {
    pub fn new(records: Vec<StateRecord>, overrides: Vec<SplitOverride>) -> Result<Self> {
        for r in &records {
            r.validate()?;
        }
        let mut seen = BTreeMap::new();
        for r in &records {
            if seen.insert(r.id, ()).is_some() {
                return Err(Error::invalid(format!("duplicate state {}", r.id)));
            }
        }
        // Energy must increase with n inside one (color, series).
        let mut by_series: BTreeMap<(SeriesColor, Series), BTreeMap<u32, (f64, f64)>> =
            BTreeMap::new();
        for r in &records {
            let e = r.energy_ev;
            by_series
                .entry((r.id.color, r.id.series))
                .or_default()
                .entry(r.id.n)
                .and_modify(|(lo, hi)| {
                    *lo = lo.min(e);
                    *hi = hi.max(e);
                })
                .or_insert((e, e));
        }
        for ((color, series), levels) in &by_series {
            let mut prev: Option<(u32, f64)> = None;
            for (&n, &(lo, hi)) in levels {
                if let Some((pn, phi)) = prev {
                    if lo <= phi {
                        return Err(Error::invalid(format!(
                            "{color:?} {} series energy does not increase from n={pn} to n={n}",
                            series.letter()
                        )));
                    }
                }
                prev = Some((n, hi));
            }
        }
        let mut pairs = BTreeMap::new();
        for o in &overrides {
            if o.a == o.b {
                return Err(Error::invalid(format!("split override pairs {} with itself", o.a)));
            }
            if !(o.split_mev >= 0.0) || !o.split_mev.is_finite() {
                return Err(Error::invalid(format!(
                    "split override {}-{} must be non-negative",
                    o.a, o.b
                )));
            }
            if pairs.insert(unordered(o.a, o.b), ()).is_some() {
                return Err(Error::invalid(format!(
                    "duplicate split override for {}-{}",
                    o.a, o.b
                )));
            }
        }
        Ok(Self { records, overrides })
    }

    /// The built-in catalog of measured states.
    pub fn embedded() -> Self {
        Self::from_json(EMBEDDED_CATALOG).expect("embedded catalog is valid")
    }

    /// Parse a catalog file: either an object with `records` and optional
    /// `split_overrides`, or a bare array of records.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let file: CatalogFile = if value.is_array() {
            CatalogFile {
                records: serde_json::from_value(value)?,
                split_overrides: Vec::new(),
            }
        } else {
            serde_json::from_value(value)?
        };
        file.try_into()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&CatalogFile::from(self))?)
    }

    pub fn records(&self) -> &[StateRecord] {
        &self.records
    }

    pub fn overrides(&self) -> &[SplitOverride] {
        &self.overrides
    }

    pub fn get(&self, id: &StateId) -> Option<&StateRecord> {
        self.records.iter().find(|r| r.id == *id)
    }

    pub fn require(&self, id: &StateId) -> Result<&StateRecord> {
        self.get(id)
            .ok_or_else(|| Error::NotFound(format!("state {id} is not in the catalog")))
    }

    /// Look up a record by its label, e.g. `"4D2"`.
    pub fn by_label(&self, label: &str) -> Result<&StateRecord> {
        let id: StateId = label.parse()?;
        self.require(&id)
    }

    pub fn split_override(&self, a: &StateId, b: &StateId) -> Option<f64> {
        let key = unordered(*a, *b);
        self.overrides
            .iter()
            .find(|o| unordered(o.a, o.b) == key)
            .map(|o| o.split_mev)
    }

    /// Every state known to the catalog, including states that only appear
    /// as override partners (such as F states), in canonical order.
    pub fn known_states(&self) -> Vec<StateId> {
        let mut ids: Vec<StateId> = self.records.iter().map(|r| r.id).collect();
        for o in &self.overrides {
            ids.push(o.a);
            ids.push(o.b);
        }
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn is_known(&self, id: &StateId) -> bool {
        self.get(id).is_some() || self.overrides.iter().any(|o| o.a == *id || o.b == *id)
    }

    /// Energy separation between two states in meV.
    ///
    /// A quoted override wins over the catalog energy difference; both are
    /// reported. States that exist only as override partners can be used
    /// when an override covers the pair.
    pub fn energy_split(&self, a: &StateId, b: &StateId) -> Result<EnergySplit> {
        if a == b {
            self.require_known(a)?;
            return Ok(EnergySplit {
                value_mev: 0.0,
                from_energies_mev: Some(0.0),
                overridden: false,
            });
        }
        let from_energies = match (self.get(a), self.get(b)) {
            (Some(ra), Some(rb)) => Some((ra.energy_mev() - rb.energy_mev()).abs()),
            _ => None,
        };
        match (self.split_override(a, b), from_energies) {
            (Some(v), fe) => Ok(EnergySplit {
                value_mev: v,
                from_energies_mev: fe,
                overridden: true,
            }),
            (None, Some(fe)) => Ok(EnergySplit {
                value_mev: fe,
                from_energies_mev: Some(fe),
                overridden: false,
            }),
            (None, None) => {
                self.require_known(a)?;
                self.require_known(b)?;
                Err(Error::NotFound(format!(
                    "no energy or quoted split for the pair {a}-{b}"
                )))
            }
        }
    }

    fn require_known(&self, id: &StateId) -> Result<()> {
        if self.is_known(id) {
            Ok(())
        } else {
            Err(Error::NotFound(format!("state {id} is not in the catalog")))
        }
    }

    /// Records of one yellow series with `n` in the inclusive range.
    pub fn series_records(
        &self,
        series: Series,
        n_range: std::ops::RangeInclusive<u32>,
    ) -> Vec<&StateRecord> {
        self.records
            .iter()
            .filter(|r| {
                r.id.series == series
                    && r.id.color == SeriesColor::Yellow
                    && n_range.contains(&r.id.n)
            })
            .collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CatalogFile {
    records: Vec<RecordEntry>,
    #[serde(default)]
    split_overrides: Vec<OverrideEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordEntry {
    label: String,
    n: u32,
    series: Series,
    sublevel: u8,
    #[serde(default)]
    color: SeriesColor,
    #[serde(rename = "energy_eV")]
    energy_ev: f64,
    hbar_over_gamma_ps: f64,
    #[serde(default)]
    hbar_over_gamma_err_ps: f64,
    lifetime_ps: f64,
    lifetime_err_ps: f64,
    source: ValueSource,
}

#[derive(Debug, Serialize, Deserialize)]
struct OverrideEntry {
    a: StateId,
    b: StateId,
    #[serde(rename = "split_meV")]
    split_mev: f64,
}

impl TryFrom<CatalogFile> for StateCatalog {
    type Error = Error;

    fn try_from(file: CatalogFile) -> Result<Self> {
        let mut records = Vec::with_capacity(file.records.len());
        for e in file.records {
            let id = StateId::new(e.n, e.series, e.sublevel, e.color)?;
            let from_label: StateId = e.label.parse()?;
            if from_label != id {
                return Err(Error::invalid(format!(
                    "label `{}` disagrees with its quantum numbers ({id})",
                    e.label
                )));
            }
            records.push(StateRecord {
                id,
                energy_ev: e.energy_ev,
                hbar_over_gamma: e.hbar_over_gamma_ps,
                hbar_over_gamma_err: e.hbar_over_gamma_err_ps,
                lifetime: e.lifetime_ps,
                lifetime_err: e.lifetime_err_ps,
                source: e.source,
            });
        }
        let overrides = file
            .split_overrides
            .into_iter()
            .map(|o| SplitOverride {
                a: o.a,
                b: o.b,
                split_mev: o.split_mev,
            })
            .collect();
        StateCatalog::new(records, overrides)
    }
}

impl From<&StateCatalog> for CatalogFile {
    fn from(c: &StateCatalog) -> Self {
        CatalogFile {
            records: c
                .records
                .iter()
                .map(|r| RecordEntry {
                    label: r.id.to_string(),
                    n: r.id.n,
                    series: r.id.series,
                    sublevel: r.id.sublevel,
                    color: r.id.color,
                    energy_ev: r.energy_ev,
                    hbar_over_gamma_ps: r.hbar_over_gamma,
                    hbar_over_gamma_err_ps: r.hbar_over_gamma_err,
                    lifetime_ps: r.lifetime,
                    lifetime_err_ps: r.lifetime_err,
                    source: r.source,
                })
                .collect(),
            split_overrides: c
                .overrides
                .iter()
                .map(|o| OverrideEntry {
                    a: o.a,
                    b: o.b,
                    split_mev: o.split_mev,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> StateId {
        s.parse().unwrap()
    }

    #[test]
    fn labels_round_trip() {
        for label in ["1Sg", "2S", "9S", "2P", "3D1", "4D2", "6D", "4F"] {
            assert_eq!(id(label).to_string(), label);
        }
        assert_eq!(id("4D2").sublevel, 2);
        assert_eq!(id("1Sg").color, SeriesColor::Green);
    }

    #[test]
    fn malformed_labels_rejected() {
        for bad in ["", "S", "0S", "4X", "4S1", "4D3", "4D12", "4Dgg", "4D2g2"] {
            assert!(bad.parse::<StateId>().is_err(), "{bad}");
        }
    }

    #[test]
    fn embedded_catalog_shape() {
        let c = StateCatalog::embedded();
        assert_eq!(c.records().len(), 20);
        let s3 = c.by_label("3S").unwrap();
        assert_eq!(s3.energy_ev, 2.16039);
        assert_eq!(s3.lifetime, 3.1);
        assert_eq!(s3.source, ValueSource::Measured);
        assert_eq!(c.by_label("5D2").unwrap().source, ValueSource::Literature);
        assert!(c.is_known(&id("4F")));
        assert!(c.get(&id("4F")).is_none());
    }

    #[test]
    fn embedded_serializes_to_file_schema() {
        let c = StateCatalog::embedded();
        let text = c.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let first = &v["records"][0];
        for key in [
            "label",
            "n",
            "series",
            "sublevel",
            "energy_eV",
            "hbar_over_gamma_ps",
            "lifetime_ps",
            "lifetime_err_ps",
            "source",
        ] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
        assert!(v["split_overrides"][0].get("split_meV").is_some());
        assert_eq!(StateCatalog::from_json(&text).unwrap(), c);
    }

    #[test]
    fn bare_array_catalog_accepted() {
        let text = r#"[{"label":"3S","n":3,"series":"S","sublevel":0,"energy_eV":2.16039,
            "hbar_over_gamma_ps":2.85,"lifetime_ps":3.1,"lifetime_err_ps":0.1,"source":"measured"}]"#;
        let c = StateCatalog::from_json(text).unwrap();
        assert_eq!(c.records().len(), 1);
        assert!(c.overrides().is_empty());
    }

    #[test]
    fn energy_split_examples() {
        let c = StateCatalog::embedded();
        let s = c.energy_split(&id("4D2"), &id("4S")).unwrap();
        assert!((s.from_energies_mev.unwrap() - 1.13).abs() < 1e-9);
        assert!(s.overridden);
        assert_eq!(s.value_mev, 1.21);

        let s = c.energy_split(&id("4S"), &id("4S")).unwrap();
        assert_eq!(s.value_mev, 0.0);
        assert!(!s.overridden);

        let s = c.energy_split(&id("6S"), &id("5S")).unwrap();
        assert!((s.from_energies_mev.unwrap() - 1.36).abs() < 1e-9);
        assert_eq!(s.value_mev, 1.28);
        assert!(s.overridden);

        let s = c.energy_split(&id("3S"), &id("2S")).unwrap();
        assert!(!s.overridden);
        assert!((s.value_mev - 22.76).abs() < 1e-9);
    }

    #[test]
    fn override_only_partner_resolves() {
        let c = StateCatalog::embedded();
        let s = c.energy_split(&id("4D2"), &id("4F")).unwrap();
        assert_eq!(s.value_mev, 0.50);
        assert_eq!(s.from_energies_mev, None);
        assert!(matches!(
            c.energy_split(&id("4S"), &id("4F")),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn unknown_state_is_not_found() {
        let c = StateCatalog::embedded();
        assert!(matches!(
            c.energy_split(&id("12S"), &id("4S")),
            Err(Error::NotFound(_))
        ));
        assert!(matches!(c.by_label("11D"), Err(Error::NotFound(_))));
    }

    #[test]
    fn split_is_symmetric_over_catalog() {
        let c = StateCatalog::embedded();
        let ids = c.known_states();
        for a in &ids {
            for b in &ids {
                match (c.energy_split(a, b), c.energy_split(b, a)) {
                    (Ok(x), Ok(y)) => assert_eq!(x, y),
                    (Err(_), Err(_)) => {}
                    _ => panic!("asymmetric result for {a}-{b}"),
                }
            }
        }
    }

    #[test]
    fn invariants_enforced() {
        let c = StateCatalog::embedded();
        let mut recs = c.records().to_vec();
        recs.push(recs[2].clone());
        assert!(StateCatalog::new(recs, vec![]).is_err());

        let mut recs = c.records().to_vec();
        let i = recs.iter().position(|r| r.id == id("5S")).unwrap();
        recs[i].energy_ev = 2.1600;
        assert!(StateCatalog::new(recs, vec![]).is_err());

        let mut recs = c.records().to_vec();
        recs[3].lifetime = 0.0;
        assert!(StateCatalog::new(recs, vec![]).is_err());
    }
}
