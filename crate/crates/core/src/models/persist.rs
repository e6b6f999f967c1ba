//! JSON persistence for trained models.
//!
//! Floats are written with the shortest representation that parses back to
//! the identical `f64`, so save/load round trips are bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::nn::{Activation, Dense, Network};
use super::{AeModel, MlpClassifier, Model, PcaModel, Standardizer, TrainingLog};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDoc {
    pub fan_in: usize,
    pub fan_out: usize,
    pub activation: Activation,
    /// Row-major `fan_out × fan_in`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub kind: String,
    pub dims: Vec<usize>,
    pub standardization: Standardizer,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub layers: Vec<LayerDoc>,
    /// PCA only: row-major `n × l` loading.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loading: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder_layers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingLog>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn layers_doc(net: &Network) -> Vec<LayerDoc> {
    net.layers
        .iter()
        .map(|l| LayerDoc {
            fan_in: l.fan_in(),
            fan_out: l.fan_out(),
            activation: l.activation,
            weights: l.weights.data().to_vec(),
            bias: l.bias.clone(),
        })
        .collect()
}

fn network_from(doc: &[LayerDoc]) -> Result<Network> {
    let mut layers = Vec::with_capacity(doc.len());
    for (k, l) in doc.iter().enumerate() {
        if l.bias.len() != l.fan_out {
            return Err(Error::Format(format!(
                "layer {k}: bias length {} != {}",
                l.bias.len(),
                l.fan_out
            )));
        }
        if let Some(prev) = layers.last().map(|d: &Dense| d.fan_out()) {
            if prev != l.fan_in {
                return Err(Error::Format(format!(
                    "layer {k}: input {} does not follow {prev}",
                    l.fan_in
                )));
            }
        }
        layers.push(Dense {
            weights: Matrix::new(l.fan_out, l.fan_in, l.weights.clone())?,
            bias: l.bias.clone(),
            activation: l.activation,
        });
    }
    if layers.is_empty() {
        return Err(Error::Format("network has no layers".into()));
    }
    Ok(Network { layers })
}

impl ModelDocument {
    pub fn from_model(model: &Model) -> Self {
        match model {
            Model::Pca(p) => ModelDocument {
                kind: "pca".into(),
                dims: vec![p.loading.rows(), p.n_components()],
                standardization: p.standardizer.clone(),
                layers: Vec::new(),
                loading: Some(p.loading.data().to_vec()),
                eigenvalues: Some(p.eigenvalues.clone()),
                encoder_layers: None,
                training: None,
                warnings: p.warnings.clone(),
            },
            Model::Ae(a) => ModelDocument {
                kind: "ae".into(),
                dims: a.layer_dims(),
                standardization: a.standardizer.clone(),
                layers: layers_doc(&a.network),
                loading: None,
                eigenvalues: None,
                encoder_layers: Some(a.encoder_layers),
                training: Some(a.training.clone()),
                warnings: Vec::new(),
            },
            Model::Mlp(m) => ModelDocument {
                kind: "mlp".into(),
                dims: m.layer_dims(),
                standardization: m.standardizer.clone(),
                layers: layers_doc(&m.network),
                loading: None,
                eigenvalues: None,
                encoder_layers: None,
                training: Some(m.training.clone()),
                warnings: Vec::new(),
            },
        }
    }

    pub fn into_model(self) -> Result<Model> {
        let n = self.standardization.dim();
        if self.standardization.scale.len() != n {
            return Err(Error::Format("mean and scale lengths differ".into()));
        }
        match self.kind.as_str() {
            "pca" => {
                let l = *self
                    .dims
                    .get(1)
                    .ok_or_else(|| Error::Format("pca dims must be [n, l]".into()))?;
                let loading = Matrix::new(
                    n,
                    l,
                    self.loading
                        .ok_or_else(|| Error::Format("pca document lacks loading".into()))?,
                )?;
                let eig = self
                    .eigenvalues
                    .ok_or_else(|| Error::Format("pca document lacks eigenvalues".into()))?;
                Ok(Model::Pca(PcaModel::from_parts(
                    self.standardization,
                    loading,
                    eig,
                    self.warnings,
                )?))
            }
            "ae" => {
                let network = network_from(&self.layers)?;
                let encoder_layers = self
                    .encoder_layers
                    .ok_or_else(|| Error::Format("ae document lacks encoder_layers".into()))?;
                if network.in_dim() != Some(n) || network.out_dim() != Some(n) || encoder_layers >= network.layers.len()
                {
                    return Err(Error::Format("ae layers inconsistent with standardization".into()));
                }
                Ok(Model::Ae(AeModel {
                    standardizer: self.standardization,
                    network,
                    encoder_layers,
                    training: self.training.unwrap_or_default(),
                }))
            }
            "mlp" => {
                let mut clf = MlpClassifier::new(self.standardization, network_from(&self.layers)?)?;
                clf.training = self.training.unwrap_or_default();
                Ok(Model::Mlp(clf))
            }
            other => Err(Error::Format(format!("unknown model kind '{other}'"))),
        }
    }
}

pub fn to_json(model: &Model) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelDocument::from_model(model))?)
}

pub fn from_json(text: &str) -> Result<Model> {
    serde_json::from_str::<ModelDocument>(text)?.into_model()
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{fit_pca, train_ae, train_classifier, AeConfig, Classifier, Dataset, Detector, MlpConfig};
    use crate::numerics::Rng;

    fn data(seed: u64) -> Dataset {
        let mut rng = Rng::new(seed);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                let t = rng.normal();
                vec![t, 2.0 * t + 0.1 * rng.normal(), rng.normal() / 3.0, 1e-3 * rng.normal()]
            })
            .collect();
        Dataset::new(Matrix::from_rows(&rows).unwrap())
    }

    #[test]
    fn pca_roundtrip_is_bit_exact() {
        let m = Model::Pca(fit_pca(&data(1), 2).unwrap());
        let back = from_json(&to_json(&m).unwrap()).unwrap();
        let (Model::Pca(a), Model::Pca(b)) = (&m, &back) else {
            panic!()
        };
        assert_eq!(a.loading, b.loading);
        assert_eq!(a.standardizer, b.standardizer);
        let z = [0.3, 1.0, -2.0, 0.5];
        assert_eq!(a.spe(&z), b.spe(&z));
    }

    #[test]
    fn ae_and_mlp_roundtrip() {
        let ds = data(2);
        let ae = Model::Ae(
            train_ae(
                &ds,
                &AeConfig {
                    layer_dims: vec![4, 3, 2, 3, 4],
                    epochs: 5,
                    learning_rate: 0.01,
                    seed: 1,
                },
            )
            .unwrap(),
        );
        let back = from_json(&to_json(&ae).unwrap()).unwrap();
        let (Model::Ae(a), Model::Ae(b)) = (&ae, &back) else {
            panic!()
        };
        assert_eq!(a.network, b.network);
        assert_eq!(a.training, b.training);

        let labels = (0..40).map(|i| usize::from(ds.sample(i)[0] > 0.0)).collect();
        let labeled = ds.with_labels(labels).unwrap();
        let clf = Model::Mlp(
            train_classifier(
                &labeled,
                &MlpConfig {
                    hidden: vec![5],
                    epochs: 5,
                    learning_rate: 0.1,
                    seed: 2,
                },
            )
            .unwrap(),
        );
        let back = from_json(&to_json(&clf).unwrap()).unwrap();
        let (Model::Mlp(a), Model::Mlp(b)) = (&clf, &back) else {
            panic!()
        };
        assert_eq!(a.network, b.network);
        assert_eq!(a.logits(&[0.1, 0.2, 0.3, 0.4]), b.logits(&[0.1, 0.2, 0.3, 0.4]));
    }

    #[test]
    fn malformed_documents_are_rejected() {
        assert!(from_json("{}").is_err());
        assert!(from_json(r#"{"kind":"svm","dims":[],"standardization":{"mean":[],"scale":[]}}"#).is_err());
    }
}
