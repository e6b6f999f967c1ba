//! Adversarial fault reconstruction: find the nearest normal-looking sample.
//!
//! All routines work on standardized samples and take the objective as a
//! [`ScalarFunction`] (typically detection SPE or classification SPE).

mod exhaustive;
mod onevar;
mod pgd;
mod project;

pub use exhaustive::{l0_exhaustive, ExhaustiveResult, MAX_EXHAUSTIVE_ETA, MAX_EXHAUSTIVE_VARS};
pub use onevar::{
    onevar_closed_form, onevar_closed_form_all, onevar_line_search, onevar_line_search_all, LINE_SEARCH_BOUND,
    LINE_SEARCH_TOL, SINGULAR_TOL,
};
pub use pgd::{afr_pgd, pca_closed_form};
pub use project::project;

use serde::{Deserialize, Serialize};

use crate::models::{ScalarFunction, Standardizer};
use crate::numerics::sub;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L0,
    L1,
    L2,
}

impl std::str::FromStr for Norm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "l0" => Ok(Norm::L0),
            "l1" => Ok(Norm::L1),
            "l2" => Ok(Norm::L2),
            _ => Err(format!("unknown norm '{s}' (expected l0, l1 or l2)")),
        }
    }
}

/// Distance budget `η`. For `L0` a fixed budget is a coordinate count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Budget {
    Fixed(f64),
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfrConfig {
    pub norm: Norm,
    pub eta: Budget,
    pub max_iters: usize,
    /// Length of each normalized gradient step before backtracking.
    pub step_size: f64,
    /// Success threshold on the objective; `None` means "use the index limit".
    pub target: Option<f64>,
    #[serde(default)]
    pub record_path: bool,
}

impl Default for AfrConfig {
    fn default() -> Self {
        Self {
            norm: Norm::L2,
            eta: Budget::Auto,
            max_iters: 500,
            step_size: 0.05,
            target: None,
            record_path: false,
        }
    }
}

impl AfrConfig {
    pub fn with_target(mut self, target: f64) -> Self {
        self.target = Some(target);
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = Budget::Fixed(eta);
        self
    }

    pub fn with_norm(mut self, norm: Norm) -> Self {
        self.norm = norm;
        self
    }
}

/// Outcome of a reconstruction, in standardized coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub method: String,
    pub x_original: Vec<f64>,
    pub x_reconstructed: Vec<f64>,
    /// `x_original − x_reconstructed`
    pub perturbation: Vec<f64>,
    pub spe_before: f64,
    pub spe_after: f64,
    pub iterations_used: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<Norm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub support: Vec<usize>,
    /// Accepted iterates `x_0, x_1, …` when requested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub path: Vec<Vec<f64>>,
}

impl Reconstruction {
    pub(crate) fn build(
        method: &str,
        objective: &dyn ScalarFunction,
        x_original: &[f64],
        x_reconstructed: Vec<f64>,
        spe_before: f64,
    ) -> Self {
        let perturbation = sub(x_original, &x_reconstructed);
        let spe_after = objective.value(&x_reconstructed);
        Self {
            method: method.to_string(),
            x_original: x_original.to_vec(),
            x_reconstructed,
            perturbation,
            spe_before,
            spe_after,
            iterations_used: 0,
            converged: false,
            norm: None,
            eta: None,
            direction: None,
            magnitude: None,
            support: Vec::new(),
            path: Vec::new(),
        }
    }

    /// Reconstructed sample in raw units.
    pub fn reconstructed_raw(&self, s: &Standardizer) -> Vec<f64> {
        s.inverse(&self.x_reconstructed)
    }

    /// Perturbation in raw units.
    pub fn perturbation_raw(&self, s: &Standardizer) -> Vec<f64> {
        self.perturbation.iter().zip(&s.scale).map(|(p, sc)| p * sc).collect()
    }
}
