//! Fault detection and classification models.
//!
//! Every model standardizes raw inputs with the z-score learned at training
//! time; all differentiable quantities (SPE, representations, logits) are
//! functions of the *standardized* sample. Attribution and reconstruction
//! code therefore works in standardized coordinates and converts at the edge
//! with [`Standardizer`].

mod ae;
mod dataset;
mod functional;
mod mlp;
pub mod nn;
mod pca;
pub mod persist;

pub use ae::{train_ae, AeConfig, AeModel};
pub use dataset::{Dataset, RootMap};
pub use functional::{
    bind, input_gradient, ClassConfidence, ClassLogit, ClassificationSpe, DetectionSpe, Functional, ModelRef,
    NormalityDeficit, ScalarFunction,
};
pub use mlp::{train_classifier, MlpClassifier, MlpConfig};
pub use pca::{fit_pca, PcaModel};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Lower clamp on per-variable standard deviations.
pub const SCALE_FLOOR: f64 = 1e-8;

/// Per-variable z-score transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            scale: vec![1.0; n],
        }
    }

    /// Fits mean and sample std; returns the indices of clamped columns.
    pub fn fit(samples: &Matrix) -> Result<(Self, Vec<usize>)> {
        if samples.rows() < 2 {
            return Err(Error::Parameter("standardization needs at least 2 samples".into()));
        }
        let mean = samples.col_means();
        let mut var = vec![0.0; samples.cols()];
        for r in samples.iter_rows() {
            for ((v, &x), &m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let denom = (samples.rows() - 1) as f64;
        let mut clamped = Vec::new();
        let scale = var
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let s = (v / denom).sqrt();
                if s < SCALE_FLOOR {
                    clamped.push(j);
                    SCALE_FLOOR
                } else {
                    s
                }
            })
            .collect();
        Ok((Self { mean, scale }, clamped))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((z, m), s)| z * s + m)
            .collect()
    }

    pub fn transform_matrix(&self, x: &Matrix) -> Matrix {
        let data = x.iter_rows().flat_map(|r| self.transform(r)).collect();
        Matrix::new(x.rows(), x.cols(), data).expect("shape preserved")
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "sample has {} variables, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// A fault detector `f_FD`: maps a standardized sample to its principal
/// component sample.
pub trait Detector: Sync {
    fn dim(&self) -> usize;
    fn standardizer(&self) -> &Standardizer;
    fn principal(&self, z: &[f64]) -> Vec<f64>;
    fn spe(&self, z: &[f64]) -> f64 {
        let p = self.principal(z);
        z.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum()
    }
    fn spe_gradient(&self, z: &[f64]) -> Vec<f64>;
    fn kind(&self) -> &'static str;
}

/// A fault classifier with a designated representation layer.
pub trait Classifier: Sync {
    fn dim(&self) -> usize;
    fn n_classes(&self) -> usize;
    fn standardizer(&self) -> &Standardizer;
    fn logits(&self, z: &[f64]) -> Vec<f64>;
    /// `(∂ logits / ∂z)ᵀ · cotangent`
    fn logits_vjp(&self, z: &[f64], cotangent: &[f64]) -> Vec<f64>;
    fn representation(&self, z: &[f64]) -> Vec<f64>;
    /// `(∂ h / ∂z)ᵀ · cotangent`
    fn representation_vjp(&self, z: &[f64], cotangent: &[f64]) -> Vec<f64>;
    fn kind(&self) -> &'static str;

    fn probabilities(&self, z: &[f64]) -> Vec<f64> {
        softmax(&self.logits(z))
    }

    fn predict(&self, z: &[f64]) -> usize {
        argmax(&self.logits(z))
    }
}

/// Any of the trainable, persistable models.
#[derive(Debug, Clone)]
pub enum Model {
    Pca(PcaModel),
    Ae(AeModel),
    Mlp(MlpClassifier),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Pca(_) => "pca",
            Model::Ae(_) => "ae",
            Model::Mlp(_) => "mlp",
        }
    }

    pub fn standardizer(&self) -> &Standardizer {
        match self {
            Model::Pca(m) => &m.standardizer,
            Model::Ae(m) => &m.standardizer,
            Model::Mlp(m) => &m.standardizer,
        }
    }

    pub fn as_ref(&self) -> ModelRef<'_> {
        match self {
            Model::Pca(m) => ModelRef::Detector(m),
            Model::Ae(m) => ModelRef::Detector(m),
            Model::Mlp(m) => ModelRef::Classifier(m),
        }
    }

    pub fn as_detector(&self) -> Option<&dyn Detector> {
        match self {
            Model::Pca(m) => Some(m),
            Model::Ae(m) => Some(m),
            Model::Mlp(_) => None,
        }
    }

    pub fn as_classifier(&self) -> Option<&dyn Classifier> {
        match self {
            Model::Mlp(m) => Some(m),
            _ => None,
        }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) },
        )
        .0
}

/// Training curve and summary stored alongside trained networks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub loss_curve: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1000.0, 999.0, -5.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[0] > p[1] && p[1] > p[2]);
    }

    #[test]
    fn standardizer_roundtrip_and_clamp() {
        let x = Matrix::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0]]).unwrap();
        let (s, clamped) = Standardizer::fit(&x).unwrap();
        assert_eq!(clamped, vec![1]);
        assert_eq!(s.scale[1], SCALE_FLOOR);
        let z = s.transform(&[3.0, 5.0]);
        assert_eq!(z, vec![0.0, 0.0]);
        let back = s.inverse(&s.transform(&[4.0, 6.0]));
        assert!((back[0] - 4.0).abs() < 1e-12 && (back[1] - 6.0).abs() < 1e-7);
    }
}
