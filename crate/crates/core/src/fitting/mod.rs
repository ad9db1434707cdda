//! Nonlinear least squares and the lifetime, fringe and contrast-decay
//! models built on it.

mod coherence;
mod contrast;
mod emg;
mod fringe;
mod lsq;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use coherence::{coherence_from_fringes, ChannelCoherence, CoherenceOptions, CoherenceResult};
pub use contrast::{
    fit_contrast_decay, t2_bound, validate_t2_bound, ContrastDecayModel, ContrastFitOptions, ContrastPoint,
    DecayShape, FloorMode, T2BoundReport, RESOLUTION_LIMIT_PS,
};
pub use emg::{emg_eval, erfcx, fit_lifetime, EmgModel, IrfHint, LifetimeFitOptions, Weighting};
pub use fringe::{fit_fringe_slice, FringeModel};
pub use lsq::{least_squares, Data, LsqOptions, ParamSpec};

/// Qualifiers attached to a fit result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFlag {
    /// The iteration cap was reached.
    NotConverged,
    /// A parameter is not determined by the data.
    Unconstrained,
    /// The fitted effect is not distinguishable from noise.
    LowSignificance,
    /// The coherence time is below the interferometer resolution.
    ResolutionLimited,
}

/// Outcome of a least-squares fit. Parameters keep the order in which the
/// model declared them; `covariance` rows and columns follow that order.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: String,
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub chi2_reduced: f64,
    pub iterations: usize,
    pub converged: bool,
    pub flags: Vec<FitFlag>,
}

impl FitResult {
    fn index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::NotFound(format!("parameter `{name}` in {} fit", self.model)))
    }

    pub fn value(&self, name: &str) -> Result<f64> {
        Ok(self.values[self.index(name)?])
    }

    pub fn sigma(&self, name: &str) -> Result<f64> {
        Ok(self.sigmas[self.index(name)?])
    }

    pub fn has_flag(&self, flag: FitFlag) -> bool {
        self.flags.contains(&flag)
    }

    pub(crate) fn flag(&mut self, flag: FitFlag) {
        if !self.flags.contains(&flag) {
            self.flags.push(flag);
            self.flags.sort();
        }
    }

    pub(crate) fn named(mut self, model: &str) -> Self {
        self.model = model.to_string();
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Serialize, Deserialize)]
struct FitResultJson {
    model: String,
    params: BTreeMap<String, f64>,
    sigmas: BTreeMap<String, f64>,
    chi2_reduced: f64,
    converged: bool,
    flags: Vec<FitFlag>,
    iterations: usize,
    param_order: Vec<String>,
    covariance: Vec<Vec<f64>>,
}

impl Serialize for FitResult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FitResultJson {
            model: self.model.clone(),
            params: self.names.iter().cloned().zip(self.values.iter().cloned()).collect(),
            sigmas: self.names.iter().cloned().zip(self.sigmas.iter().cloned()).collect(),
            chi2_reduced: self.chi2_reduced,
            converged: self.converged,
            flags: self.flags.clone(),
            iterations: self.iterations,
            param_order: self.names.clone(),
            covariance: self.covariance.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FitResult {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = FitResultJson::deserialize(d)?;
        let mut values = Vec::with_capacity(j.param_order.len());
        let mut sigmas = Vec::with_capacity(j.param_order.len());
        for name in &j.param_order {
            values.push(*j.params.get(name).ok_or_else(|| D::Error::custom(format!("missing param `{name}`")))?);
            sigmas.push(*j.sigmas.get(name).ok_or_else(|| D::Error::custom(format!("missing sigma `{name}`")))?);
        }
        Ok(FitResult {
            model: j.model,
            names: j.param_order,
            values,
            sigmas,
            covariance: j.covariance,
            chi2_reduced: j.chi2_reduced,
            iterations: j.iterations,
            converged: j.converged,
            flags: j.flags,
        })
    }
}
