//! Self-contained simulate-then-recover runs against the published values:
//! lifetimes, major beat frequencies and coherence times.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beats::{beat_report, BeatOptions};
use crate::config::sha256_hex;
use crate::dynamics::{
    add_noise, add_noise_rows, fringe_image, intensity_trace, BeatLine, Channel, Emitter, EmitterSet, FringeGeometry,
    InstrumentResponse, NoiseModel, TimeTrace, UniformGrid, CCD_ENERGY_RESOLUTION_MEV,
};
use crate::error::{Error, Result};
use crate::fitting::{coherence_from_fringes, fit_lifetime, CoherenceOptions, IrfHint, LifetimeFitOptions, Weighting};
use crate::states::{Series, SeriesColor, StateCatalog, StateId};

pub const DEFAULT_SEED: u64 = 2024;
/// Time-response FWHM used for simulated lifetime traces (ps).
pub const LIFETIME_IRF_FWHM_PS: f64 = 2.57;
pub const PEAK_COUNTS: f64 = 1e5;
/// Relative lifetime tolerance floor.
pub const LIFETIME_REL_TOL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Lifetimes,
    Beats,
    Coherence,
    All,
}

impl Scope {
    fn includes(self, other: Scope) -> bool {
        self == Scope::All || self == other
    }
}

impl std::str::FromStr for Scope {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lifetimes" => Ok(Scope::Lifetimes),
            "beats" => Ok(Scope::Beats),
            "coherence" => Ok(Scope::Coherence),
            "all" => Ok(Scope::All),
            _ => Err(Error::invalid(format!("unknown scope {s:?} (lifetimes, beats, coherence, all)"))),
        }
    }
}

/// Where a row's reference value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSource {
    /// Measured lifetime column of the state table.
    LifetimeTable,
    /// Major beat frequency of the beat table.
    BeatTable,
    /// `T2 = 2·T1` for a dephasing-free single state.
    T2Bound,
    /// Coherence time saturating near 12 ps at high excitation power.
    T2Saturation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproRow {
    pub scope: Scope,
    pub state: String,
    pub quantity: String,
    pub source: ReferenceSource,
    pub reference: f64,
    pub reference_err: f64,
    pub recovered: Option<f64>,
    pub recovered_err: Option<f64>,
    /// Accepted interval for `recovered`.
    pub accept: (f64, f64),
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_pair: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub found_pair: Option<String>,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ReproRow {
    fn judge(mut self) -> Self {
        let in_range = self.recovered.is_some_and(|v| v >= self.accept.0 && v <= self.accept.1);
        let pair_ok = self.expected_pair.is_none() || self.expected_pair == self.found_pair;
        self.pass = in_range && pair_ok;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproductionReport {
    pub version: String,
    pub scope: Scope,
    pub seed: u64,
    /// SHA-256 of the run settings.
    pub config_hash: String,
    pub rows: Vec<ReproRow>,
    pub passed: usize,
    pub failed: usize,
}

impl ReproductionReport {
    pub fn pass(&self) -> bool {
        self.failed == 0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:<6} {:<7} {:>16} {:>18} {:>17}  {:<4} pair",
            "scope", "state", "qty", "reference", "recovered", "accept", "ok"
        );
        for r in &self.rows {
            let scope = match r.scope {
                Scope::Lifetimes => "lifetimes",
                Scope::Beats => "beats",
                Scope::Coherence => "coherence",
                Scope::All => "all",
            };
            let rec = match (r.recovered, r.recovered_err) {
                (Some(v), Some(e)) => format!("{v:.4} ± {e:.4}"),
                (Some(v), None) => format!("{v:.4}"),
                _ => "-".into(),
            };
            let pair = match (&r.expected_pair, &r.found_pair) {
                (Some(e), Some(f)) => format!("{f} (want {e})"),
                (Some(e), None) => format!("- (want {e})"),
                _ => String::new(),
            };
            let _ = writeln!(
                out,
                "{:<10} {:<6} {:<7} {:>16} {:>18} {:>17}  {:<4} {}",
                scope,
                r.state,
                r.quantity,
                format!("{:.3} ± {:.3}", r.reference, r.reference_err),
                rec,
                format!("[{:.3}, {:.3}]", r.accept.0, r.accept.1),
                if r.pass { "PASS" } else { "FAIL" },
                pair
            );
        }
        let _ = writeln!(out, "{} passed, {} failed (seed {}, config {})", self.passed, self.failed, self.seed, &self.config_hash[..12]);
        out
    }
}

/// Runs the requested comparisons. Deterministic in `seed`.
pub fn reproduce(scope: Scope, seed: u64) -> Result<ReproductionReport> {
    let catalog = StateCatalog::embedded();
    let mut rows = Vec::new();
    if scope.includes(Scope::Lifetimes) {
        rows.extend(lifetime_rows(&catalog, seed)?);
    }
    if scope.includes(Scope::Beats) {
        rows.extend(beat_rows(&catalog, seed)?);
    }
    if scope.includes(Scope::Coherence) {
        rows.extend(coherence_rows(seed)?);
    }
    let settings = serde_json::json!({
        "scope": scope,
        "seed": seed,
        "lifetime_irf_fwhm_ps": LIFETIME_IRF_FWHM_PS,
        "peak_counts": PEAK_COUNTS,
        "beat_rows": BEAT_ROWS.iter().map(|r| r.trace).collect::<Vec<_>>(),
    });
    let passed = rows.iter().filter(|r| r.pass).count();
    Ok(ReproductionReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        scope,
        seed,
        config_hash: sha256_hex(settings.to_string().as_bytes()),
        failed: rows.len() - passed,
        passed,
        rows,
    })
}

fn id(label: &str) -> StateId {
    label.parse().expect("built-in state label")
}

fn lifetime_grid() -> Vec<f64> {
    UniformGrid::new(-20.0, 120.0, 0.1).expect("static grid").points()
}

fn simulate(set: &EmitterSet, t: &[f64], irf: &InstrumentResponse, seed: u64) -> Result<TimeTrace> {
    let clean = intensity_trace(set, t, &Channel::Unbounded, Some(irf))?;
    let noisy = add_noise(&clean.intensity, NoiseModel::Poisson { peak_counts: PEAK_COUNTS }, seed)?;
    let mut tr = TimeTrace::new(t.to_vec(), noisy)?;
    tr.meta.seed = Some(seed);
    Ok(tr)
}

/// Yellow S and D states, one single-emitter trace each, fitted with the
/// time response fixed at its known width.
pub fn lifetime_rows(catalog: &StateCatalog, seed: u64) -> Result<Vec<ReproRow>> {
    let irf = InstrumentResponse::new(LIFETIME_IRF_FWHM_PS, InstrumentResponse::default().energy_fwhm_mev)?;
    let t = lifetime_grid();
    let mut records: Vec<_> = catalog
        .records()
        .iter()
        .filter(|r| r.id.color == SeriesColor::Yellow && matches!(r.id.series, Series::S | Series::D))
        .collect();
    records.sort_by_key(|r| r.id);
    records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let set = EmitterSet::new(vec![Emitter {
                state: r.id,
                energy_mev: 0.0,
                lifetime_ps: r.lifetime,
                amplitude: 1.0,
                phase: 0.0,
            }])?;
            let trace = simulate(&set, &t, &irf, seed.wrapping_add(i as u64))?;
            let options = LifetimeFitOptions {
                weighting: Weighting::Poisson,
                ..Default::default()
            };
            let tol = r.lifetime_err.max(LIFETIME_REL_TOL * r.lifetime);
            let row = ReproRow {
                scope: Scope::Lifetimes,
                state: r.id.to_string(),
                quantity: "tau_ps".into(),
                source: ReferenceSource::LifetimeTable,
                reference: r.lifetime,
                reference_err: r.lifetime_err,
                recovered: None,
                recovered_err: None,
                accept: (r.lifetime - tol, r.lifetime + tol),
                expected_pair: None,
                found_pair: None,
                pass: false,
                note: None,
            };
            Ok(match fit_lifetime(&trace, IrfHint::Fixed(LIFETIME_IRF_FWHM_PS), &options) {
                Ok(fit) => ReproRow {
                    recovered: Some(fit.value("tau")?),
                    recovered_err: Some(fit.sigma("tau")?),
                    note: (!fit.converged).then(|| format!("flags {:?}", fit.flags)),
                    ..row
                },
                Err(e) => ReproRow {
                    note: Some(e.to_string()),
                    ..row
                },
            }
            .judge())
        })
        .collect()
}

/// One row of the beat table: the analysed trace, its major line and the
/// minor lines, each with its likeliest partner state.
#[derive(Debug, Clone, Copy)]
pub struct BeatRow {
    pub trace: &'static str,
    pub major: (&'static str, f64, f64),
    pub minors: &'static [(&'static str, f64)],
}

pub const BEAT_ROWS: [BeatRow; 7] = [
    BeatRow {
        trace: "4S",
        major: ("4D2", 0.30, 0.01),
        minors: &[("4D1", 0.21)],
    },
    BeatRow {
        trace: "4D2",
        major: ("4S", 0.30, 0.02),
        minors: &[("4D1", 0.22), ("4F", 0.12), ("4D1", 0.07), ("4F", 0.05)],
    },
    BeatRow {
        trace: "5S",
        major: ("5D2", 0.14, 0.015),
        minors: &[("6D", 0.42), ("6S", 0.31), ("5D1", 0.09)],
    },
    BeatRow {
        trace: "5D2",
        major: ("5S", 0.13, 0.02),
        minors: &[("5S", 0.10), ("5D1", 0.04)],
    },
    BeatRow {
        trace: "6S",
        major: ("6D", 0.095, 0.01),
        minors: &[("7D", 0.26), ("7S", 0.175)],
    },
    BeatRow {
        trace: "7S",
        major: ("7D", 0.065, 0.01),
        minors: &[("6S", 0.184), ("8D", 0.173), ("8S", 0.11)],
    },
    BeatRow {
        trace: "8S",
        major: ("8D", 0.06, 0.01),
        minors: &[("7S", 0.115), ("9S", 0.08), ("7D", 0.04)],
    },
];

/// Observed modulation depth of the major line.
pub const MAJOR_DEPTH: f64 = 0.05;
/// Largest amplitude of a minor partner relative to the anchor.
pub const MINOR_MAX_AMPLITUDE: f64 = 0.1;

impl BeatRow {
    /// Anchor plus partners whose observed beat depths fall off from the
    /// major line through the minors in listed order.
    pub fn emitter_set(&self, catalog: &StateCatalog, irf: &InstrumentResponse) -> Result<EmitterSet> {
        let mut lines = vec![BeatLine {
            partner: id(self.major.0),
            nu_thz: self.major.1,
            depth: MAJOR_DEPTH,
        }];
        for (k, &(partner, nu)) in self.minors.iter().enumerate() {
            let ranked = MAJOR_DEPTH * (0.8 - 0.1 * k as f64);
            lines.push(BeatLine {
                partner: id(partner),
                nu_thz: nu,
                depth: ranked.min(2.0 * MINOR_MAX_AMPLITUDE * irf.beat_transfer(nu)),
            });
        }
        let lifetime = catalog.require(&id(self.trace))?.lifetime;
        EmitterSet::beating(id(self.trace), lifetime, &lines, Some(irf))
    }
}

pub fn beat_rows(catalog: &StateCatalog, seed: u64) -> Result<Vec<ReproRow>> {
    let irf = InstrumentResponse::default();
    let t = UniformGrid::new(-20.0, 150.0, 0.1)?.points();
    BEAT_ROWS
        .par_iter()
        .enumerate()
        .map(|(i, row)| {
            let set = row.emitter_set(catalog, &irf)?;
            let trace = simulate(&set, &t, &irf, seed.wrapping_add(100 + i as u64))?;
            let anchor = id(row.trace);
            let report = beat_report(&trace, catalog, &BeatOptions::default().with_focus(anchor))?;
            let (_, nu, err) = row.major;
            let major = report.major();
            Ok(ReproRow {
                scope: Scope::Beats,
                state: row.trace.to_string(),
                quantity: "nu_THz".into(),
                source: ReferenceSource::BeatTable,
                reference: nu,
                reference_err: err,
                recovered: major.map(|m| m.nu),
                recovered_err: major.map(|m| m.nu_err),
                accept: (nu - err, nu + err),
                expected_pair: Some(format!("{}-{}", row.trace, row.major.0)),
                found_pair: major.and_then(|m| m.candidates.first()).map(|c| c.label()),
                pass: false,
                note: major.is_none().then(|| "no peak found".to_string()),
            }
            .judge())
        })
        .collect()
}

/// Single-state coherence case.
#[derive(Debug, Clone, Copy)]
pub struct CoherenceCase {
    pub state: &'static str,
    pub lifetime_ps: f64,
    pub gamma_phi: f64,
    pub delays: (f64, f64, f64),
    pub reference: f64,
    pub reference_err: f64,
    pub accept: (f64, f64),
    pub source: ReferenceSource,
}

pub const COHERENCE_CASES: [CoherenceCase; 2] = [
    CoherenceCase {
        state: "3S",
        lifetime_ps: 3.1,
        gamma_phi: 0.0,
        delays: (0.0, 15.0, 0.5),
        reference: 6.2,
        reference_err: 0.2,
        accept: (5.8, 6.6),
        source: ReferenceSource::T2Bound,
    },
    CoherenceCase {
        state: "7S",
        lifetime_ps: 20.0,
        gamma_phi: 0.0583,
        delays: (0.0, 30.0, 1.0),
        reference: 12.0,
        reference_err: 1.0,
        accept: (11.0, 13.0),
        source: ReferenceSource::T2Saturation,
    },
];

/// Fringe stack of one case at the given seed (Poisson noise, 1e4 peak
/// counts per image).
pub fn coherence_stack(case: &CoherenceCase, seed: u64) -> Result<Vec<crate::dynamics::FringeImage>> {
    let set = EmitterSet::new(vec![Emitter {
        state: id(case.state),
        energy_mev: 0.0,
        lifetime_ps: case.lifetime_ps,
        amplitude: 1.0,
        phase: 0.0,
    }])?
    .with_pure_dephasing(case.gamma_phi);
    let (start, stop, step) = case.delays;
    let delays = UniformGrid::new(start, stop, step)?.points();
    let e = [-0.2, 0.0, 0.2];
    let geometry = FringeGeometry::default();
    delays
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let mut img = fringe_image(&set, d, &geometry, &e, CCD_ENERGY_RESOLUTION_MEV)?;
            img.intensity = add_noise_rows(
                &img.intensity,
                NoiseModel::Poisson {
                    peak_counts: geometry.amplitude,
                },
                seed.wrapping_add(i as u64),
            )?;
            Ok(img)
        })
        .collect()
}

pub fn coherence_rows(seed: u64) -> Result<Vec<ReproRow>> {
    COHERENCE_CASES
        .iter()
        .enumerate()
        .map(|(k, case)| {
            let stack = coherence_stack(case, seed.wrapping_add(1000 * (k as u64 + 1)))?;
            let opts = CoherenceOptions {
                t1_ps: Some(case.lifetime_ps),
                ..Default::default()
            };
            let result = coherence_from_fringes(&stack, &opts)?;
            let fit = result.primary().and_then(|c| c.fit.as_ref());
            Ok(ReproRow {
                scope: Scope::Coherence,
                state: case.state.to_string(),
                quantity: "T2_ps".into(),
                source: case.source,
                reference: case.reference,
                reference_err: case.reference_err,
                recovered: fit.and_then(|f| f.value("T2").ok()),
                recovered_err: fit.and_then(|f| f.sigma("T2").ok()),
                accept: case.accept,
                expected_pair: None,
                found_pair: None,
                pass: false,
                note: fit.is_none().then(|| "contrast decay fit failed".to_string()),
            }
            .judge())
        })
        .collect()
}
