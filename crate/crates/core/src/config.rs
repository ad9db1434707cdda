//! Run configuration shared by the command-line tool.
//!
//! Every field has a default, so `{}` is a valid file; a run's resolved
//! configuration (defaults filled in, seed explicit) is written next to its
//! outputs and reproduces the run when fed back.
//!
//! | field | default |
//! |---|---|
//! | `catalog` | `"embedded"` (or `$RYDBEAT_CATALOG` when set) |
//! | `time_grid` | 0 → 120 ps, step 0.1 ps |
//! | `energy_grid` | emitter span ± 1.5 meV, step 0.05 meV |
//! | `instrument` | streak camera: 2.57 ps, 0.6 meV FWHM |
//! | `delays` | 0 → 15 ps, step 0.5 ps |
//! | `fringe_channel_fwhm_meV` | 0.2 (CCD) |
//! | `noise` | none |
//! | `seed` | 0 |

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::beats::BeatOptions;
use crate::dynamics::{
    Channel, EmitterSet, EmitterSpec, FringeGeometry, InstrumentResponse, NoiseModel, UniformGrid,
    CCD_ENERGY_RESOLUTION_MEV,
};
use crate::error::{Error, Result};
use crate::fitting::{CoherenceOptions, IrfHint, LifetimeFitOptions};
use crate::states::{StateCatalog, StateId};

/// Environment variable naming a catalog file that replaces the embedded one.
pub const CATALOG_ENV: &str = "RYDBEAT_CATALOG";
pub const EMBEDDED: &str = "embedded";

/// Inclusive `start → stop` axis with a fixed step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn grid(&self, field: &str) -> Result<UniformGrid> {
        UniformGrid::new(self.start, self.stop, self.step).map_err(|e| Error::config(field, e.to_string()))
    }

    pub fn points(&self, field: &str) -> Result<Vec<f64>> {
        Ok(self.grid(field)?.points())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LifetimeAnalysis {
    pub irf: IrfHint,
    #[serde(flatten)]
    pub options: LifetimeFitOptions,
}

impl Default for LifetimeAnalysis {
    fn default() -> Self {
        Self {
            irf: IrfHint::Free,
            options: LifetimeFitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct CoherenceAnalysis {
    /// State whose catalog lifetime feeds the `T2 ≤ 2T1` check when
    /// `t1_ps` is not given.
    pub state: Option<StateId>,
    #[serde(flatten)]
    pub options: CoherenceOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub lifetime: LifetimeAnalysis,
    pub beats: BeatOptions,
    pub coherence: CoherenceAnalysis,
}

/// File names written inside the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputNames {
    pub trace: String,
    pub spectrogram: String,
    /// Fringe files are `<prefix>_<index>.csv` plus `<prefix>s.json`.
    pub fringe_prefix: String,
    pub resolved_config: String,
}

impl Default for OutputNames {
    fn default() -> Self {
        Self {
            trace: "trace.csv".into(),
            spectrogram: "spectrogram.csv".into(),
            fringe_prefix: "fringe".into(),
            resolved_config: "config.resolved.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `"embedded"` or a path to a catalog JSON file.
    pub catalog: String,
    pub seed: Option<u64>,
    pub emitters: Vec<EmitterSpec>,
    /// Energy origin (meV) for catalog states; the first emitter's energy
    /// when absent.
    #[serde(rename = "reference_meV")]
    pub reference_mev: Option<f64>,
    /// Place partners at quoted beat splits from the first emitter.
    pub prefer_overrides: bool,
    pub cross_visibility: f64,
    pub pure_dephasing_rate: f64,
    pub shg_prompt_amplitude: f64,
    pub instrument: InstrumentResponse,
    pub time_grid: GridSpec,
    pub energy_grid: Option<GridSpec>,
    pub channel: Channel,
    pub noise: Option<NoiseModel>,
    pub fringe: FringeGeometry,
    pub delays: GridSpec,
    #[serde(rename = "fringe_channel_fwhm_meV")]
    pub fringe_channel_fwhm_mev: f64,
    pub analysis: AnalysisConfig,
    pub outputs: OutputNames,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            catalog: EMBEDDED.into(),
            seed: None,
            emitters: Vec::new(),
            reference_mev: None,
            prefer_overrides: true,
            cross_visibility: 1.0,
            pure_dephasing_rate: 0.0,
            shg_prompt_amplitude: 0.0,
            instrument: InstrumentResponse::default(),
            time_grid: GridSpec {
                start: 0.0,
                stop: 120.0,
                step: 0.1,
            },
            energy_grid: None,
            channel: Channel::Unbounded,
            noise: None,
            fringe: FringeGeometry::default(),
            delays: GridSpec {
                start: 0.0,
                stop: 15.0,
                step: 0.5,
            },
            fringe_channel_fwhm_mev: CCD_ENERGY_RESOLUTION_MEV,
            analysis: AnalysisConfig::default(),
            outputs: OutputNames::default(),
        }
    }
}

impl RunConfig {
    /// Parses JSON. Syntax errors become [`Error::Parse`]; type errors and
    /// unknown fields become [`Error::Config`] naming the field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if inner.is_syntax() || inner.is_eof() {
                Error::Parse {
                    line: inner.line(),
                    column: inner.column(),
                    message: inner.to_string(),
                }
            } else {
                let field = if path == "." { "<root>".to_string() } else { path };
                Error::config(field, inner.to_string())
            }
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Canonical JSON form (field order fixed by the type).
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(self.to_json()?.as_bytes()))
    }

    /// Catalog file in effect: an explicit path wins, then
    /// `$RYDBEAT_CATALOG`, then the embedded table.
    pub fn catalog_path(&self) -> Option<PathBuf> {
        if self.catalog != EMBEDDED {
            return Some(PathBuf::from(&self.catalog));
        }
        std::env::var_os(CATALOG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
    }

    pub fn load_catalog(&self) -> Result<StateCatalog> {
        let field = if self.catalog != EMBEDDED { "catalog" } else { CATALOG_ENV };
        match self.catalog_path() {
            None => Ok(StateCatalog::embedded()),
            Some(path) => {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::config(field, format!("cannot read {}: {e}", path.display())))?;
                StateCatalog::from_json(&text).map_err(|e| Error::config(field, format!("{}: {e}", path.display())))
            }
        }
    }

    /// Checks everything that does not need the emitter list.
    pub fn validate(&self) -> Result<()> {
        if let Some(path) = self.catalog_path() {
            if !path.is_file() {
                let field = if self.catalog != EMBEDDED { "catalog" } else { CATALOG_ENV };
                return Err(Error::config(field, format!("file {} does not exist", path.display())));
            }
        }
        self.instrument.validate().map_err(|e| Error::config("instrument", e.to_string()))?;
        self.time_grid.grid("time_grid")?;
        if let Some(g) = &self.energy_grid {
            g.grid("energy_grid")?;
        }
        self.delays.grid("delays")?;
        self.channel.validate().map_err(|e| Error::config("channel", e.to_string()))?;
        if let Some(n) = &self.noise {
            n.validate().map_err(|e| Error::config("noise", e.to_string()))?;
        }
        self.fringe.validate().map_err(|e| Error::config("fringe", e.to_string()))?;
        if !(self.fringe_channel_fwhm_mev > 0.0) {
            return Err(Error::config("fringe_channel_fwhm_meV", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.cross_visibility) {
            return Err(Error::config("cross_visibility", "must lie in [0, 1]"));
        }
        if !(self.pure_dephasing_rate >= 0.0) || !(self.shg_prompt_amplitude >= 0.0) {
            return Err(Error::config("pure_dephasing_rate", "rates and amplitudes must be non-negative"));
        }
        Ok(())
    }

    pub fn emitter_set(&self, catalog: &StateCatalog) -> Result<EmitterSet> {
        let Some(first) = self.emitters.first() else {
            return Err(Error::config("emitters", "at least one emitter is required"));
        };
        let reference = match self.reference_mev {
            Some(r) => r,
            None => catalog.get(&first.state).map_or(0.0, |r| r.energy_mev()),
        };
        let set = EmitterSet::from_catalog(catalog, &self.emitters, reference, self.prefer_overrides)
            .map_err(|e| Error::config("emitters", e.to_string()))?
            .with_cross_visibility(self.cross_visibility)
            .with_pure_dephasing(self.pure_dephasing_rate)
            .with_shg_prompt(self.shg_prompt_amplitude);
        set.validate().map_err(|e| Error::config("emitters", e.to_string()))?;
        Ok(set)
    }

    /// Copy with every optional default made explicit: seed, catalog
    /// choice, energy grid and coherence lifetime.
    pub fn resolved(&self, seed_override: Option<u64>) -> Result<RunConfig> {
        self.validate()?;
        let mut out = self.clone();
        out.seed = Some(seed_override.or(self.seed).unwrap_or(0));
        if let Some(p) = self.catalog_path() {
            out.catalog = p.display().to_string();
        }
        let catalog = self.load_catalog()?;
        if !self.emitters.is_empty() {
            let set = self.emitter_set(&catalog)?;
            if out.energy_grid.is_none() {
                let lo = set.emitters.iter().map(|e| e.energy_mev).fold(f64::INFINITY, f64::min);
                let hi = set.emitters.iter().map(|e| e.energy_mev).fold(f64::NEG_INFINITY, f64::max);
                let step = 0.05;
                let start = ((lo - 1.5) / step).floor() * step;
                let stop = ((hi + 1.5) / step).ceil() * step;
                out.energy_grid = Some(GridSpec { start, stop, step });
            }
        }
        let coh = &mut out.analysis.coherence;
        if coh.options.t1_ps.is_none() {
            if let Some(state) = coh.state {
                let rec = catalog
                    .require(&state)
                    .map_err(|e| Error::config("analysis.coherence.state", e.to_string()))?;
                coh.options.t1_ps = Some(rec.lifetime);
                coh.options.t1_sigma_ps = rec.lifetime_err;
            }
        }
        Ok(out)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_all_defaults() {
        let c = RunConfig::from_json("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.time_grid.grid("t").unwrap().len, 1201);
    }

    #[test]
    fn round_trip_and_hash_are_stable() {
        let c = RunConfig::from_json(r#"{"emitters":[{"state":"3S"}],"seed":9,"noise":{"kind":"poisson","peak_counts":1e5}}"#).unwrap();
        let back = RunConfig::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash().unwrap(), c.hash().unwrap());
        assert_eq!(c.hash().unwrap().len(), 64);
    }

    #[test]
    fn type_error_names_the_field() {
        match RunConfig::from_json(r#"{"time_grid":{"start":0,"stop":"x","step":0.1}}"#) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "time_grid.stop"),
            other => panic!("{other:?}"),
        }
        match RunConfig::from_json(r#"{"noize":{}}"#) {
            Err(Error::Config { message, .. }) => assert!(message.contains("noize")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(RunConfig::from_json("{\n\"seed\": 1,,}"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn missing_catalog_file_names_the_field() {
        let c = RunConfig {
            catalog: "/nonexistent/catalog.json".into(),
            ..Default::default()
        };
        match c.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "catalog"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn resolved_fills_defaults() {
        let c = RunConfig::from_json(r#"{"emitters":[{"state":"4S"},{"state":"4D2","amplitude":0.5}],"analysis":{"coherence":{"state":"4S"}}}"#).unwrap();
        let r = c.resolved(Some(7)).unwrap();
        assert_eq!(r.seed, Some(7));
        let g = r.energy_grid.unwrap();
        assert!(g.start <= -1.5 && g.stop >= 1.2 + 1.5 - 1e-9, "{g:?}");
        assert_eq!(r.analysis.coherence.options.t1_ps, Some(5.1));
        // Resolving again changes nothing.
        assert_eq!(r.resolved(None).unwrap(), r);
    }

    #[test]
    fn no_emitters_is_a_config_error() {
        let c = RunConfig::default();
        assert!(matches!(c.emitter_set(&StateCatalog::embedded()), Err(Error::Config { .. })));
    }
}
