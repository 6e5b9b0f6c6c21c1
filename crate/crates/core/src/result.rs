use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Estimators available in this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Baseline,
    Crossfit,
    Blm1,
    Blm2,
    Twfe,
    Interactive,
    Cce,
    Fa,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Baseline,
        Method::Crossfit,
        Method::Blm1,
        Method::Blm2,
        Method::Twfe,
        Method::Interactive,
        Method::Cce,
        Method::Fa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Crossfit => "crossfit",
            Method::Blm1 => "blm1",
            Method::Blm2 => "blm2",
            Method::Twfe => "twfe",
            Method::Interactive => "interactive",
            Method::Cce => "cce",
            Method::Fa => "fa",
        }
    }

    /// Whether the method clusters units and periods in a first step.
    pub fn uses_clusters(self) -> bool {
        matches!(self, Method::Baseline | Method::Crossfit | Method::Blm1 | Method::Blm2)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| {
                format!(
                    "unknown estimator '{s}' (expected one of: {})",
                    Method::ALL.map(Method::name).join(", ")
                )
            })
    }
}

/// Number of clusters used by an estimate: one count for the full-sample
/// estimators, one per fold for the cross-fitted estimator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClusterCount {
    Single(usize),
    PerFold([usize; 4]),
}

impl ClusterCount {
    pub fn mean(&self) -> f64 {
        match self {
            ClusterCount::Single(g) => *g as f64,
            ClusterCount::PerFold(gs) => gs.iter().sum::<usize>() as f64 / 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub method: Method,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub dof: usize,
    pub unit_clusters: Option<ClusterCount>,
    pub time_clusters: Option<ClusterCount>,
    /// N x T matrix of `e_hat - u_hat' beta`.
    pub residuals: DMatrix<f64>,
    pub n_obs: usize,
}

impl EstimateResult {
    pub fn record(&self) -> EstimateRecord {
        EstimateRecord {
            method: self.method,
            beta: self.beta.clone(),
            se: self.se.clone(),
            dof: self.dof,
            g: self.unit_clusters.clone(),
            c: self.time_clusters.clone(),
            n_obs: self.n_obs,
        }
    }
}

/// Serializable summary of an [`EstimateResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub method: Method,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub dof: usize,
    #[serde(rename = "G")]
    pub g: Option<ClusterCount>,
    #[serde(rename = "C")]
    pub c: Option<ClusterCount>,
    pub n_obs: usize,
}
