//! Per-variable attributions: contribution plots, reconstruction-based
//! contributions, gradients, integrated gradients and the reconstruction-
//! baselined variants.
//!
//! Every function takes standardized samples. Contributions are signed;
//! metrics consume magnitudes.

mod gradient;
mod path;
mod render;

pub use gradient::{abigx, abigx_onevar, abigx_pgd, integrated_gradients, saliency, DEFAULT_STEPS};
pub use path::{path_diagnostics, PathPoint};
pub use render::{attribution_csv, svg_bar_chart};

use serde::{Deserialize, Serialize};

use crate::afr::SINGULAR_TOL;
use crate::error::{Error, Result};
use crate::models::{Detector, PcaModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "cp")]
    Cp,
    #[serde(rename = "rbc")]
    Rbc,
    #[serde(rename = "saliency")]
    Saliency,
    #[serde(rename = "ig")]
    Ig,
    #[serde(rename = "abigx")]
    Abigx,
    #[serde(rename = "abigx-onevar")]
    AbigxOneVar,
    /// Externally supplied scores (e.g. an oracle for metric checks).
    #[serde(rename = "external")]
    External,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Cp,
        Method::Rbc,
        Method::Saliency,
        Method::Ig,
        Method::Abigx,
        Method::AbigxOneVar,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cp => "cp",
            Method::Rbc => "rbc",
            Method::Saliency => "saliency",
            Method::Ig => "ig",
            Method::Abigx => "abigx",
            Method::AbigxOneVar => "abigx-onevar",
            Method::External => "external",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Method::ALL
            .into_iter()
            .chain([Method::External])
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method '{s}' (expected cp, rbc, saliency, ig, abigx, abigx-onevar)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub method: Method,
    pub contributions: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<Vec<f64>>,
    pub target_functional: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// `|Σ cᵢ − (f(x) − f(baseline))|` for path methods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completeness_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reconstruction_converged: Option<bool>,
}

impl Attribution {
    pub fn new(method: Method, contributions: Vec<f64>, target_functional: impl Into<String>) -> Self {
        Self {
            method,
            contributions,
            baseline: None,
            target_functional: target_functional.into(),
            steps: None,
            completeness_residual: None,
            reconstruction_converged: None,
        }
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.contributions.iter().map(|c| c.abs()).collect()
    }

    pub fn total(&self) -> f64 {
        self.contributions.iter().sum()
    }

    /// Variable indices sorted by descending magnitude, ties by index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.contributions.len()).collect();
        order.sort_by(|&a, &b| {
            self.contributions[b]
                .abs()
                .total_cmp(&self.contributions[a].abs())
                .then(a.cmp(&b))
        });
        order
    }
}

/// Squared residual per variable: `cᵢ = (zᵢ − f(z)ᵢ)²`.
pub fn cp(detector: &dyn Detector, z: &[f64]) -> Attribution {
    let p = detector.principal(z);
    let c = z.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).collect();
    Attribution::new(Method::Cp, c, format!("spe({})", detector.kind()))
}

/// `RBCᵢ = (C̃z)ᵢ² / C̃ᵢᵢ`.
pub fn rbc(pca: &PcaModel, z: &[f64]) -> Result<Attribution> {
    let c = pca.residual_projector();
    let cz = pca.residual(z);
    let contributions = (0..z.len())
        .map(|i| {
            let cii = c.get(i, i);
            if cii < SINGULAR_TOL {
                Err(Error::SingularDirection {
                    variable: i,
                    value: cii,
                })
            } else {
                Ok(cz[i] * cz[i] / cii)
            }
        })
        .collect::<Result<_>>()?;
    Ok(Attribution::new(Method::Rbc, contributions, "spe(pca)"))
}
