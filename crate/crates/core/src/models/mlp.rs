use serde::{Deserialize, Serialize};

use super::nn::{Network, ParamGrads};
use super::{argmax, softmax, Classifier, Dataset, Standardizer, TrainingLog};
use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    /// Hidden layer widths; the last one is the representation layer.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

/// Tanh hidden layers followed by a linear layer producing `k+1` logits.
#[derive(Debug, Clone)]
pub struct MlpClassifier {
    pub standardizer: Standardizer,
    pub network: Network,
    pub training: TrainingLog,
}

impl MlpClassifier {
    pub fn new(standardizer: Standardizer, network: Network) -> Result<Self> {
        match network.in_dim() {
            Some(n) if n == standardizer.dim() => {}
            _ => return Err(Error::Dimension("network input does not match standardization".into())),
        }
        Ok(Self {
            standardizer,
            network,
            training: TrainingLog::default(),
        })
    }

    fn hidden_count(&self) -> usize {
        self.network.layers.len() - 1
    }

    pub fn representation_dim(&self) -> usize {
        self.network.layers.last().expect("non-empty").fan_in()
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.standardizer.dim()];
        dims.extend(self.network.layers.iter().map(|l| l.fan_out()));
        dims
    }

    /// Accuracy on raw samples.
    pub fn accuracy(&self, data: &Dataset) -> Option<f64> {
        let labels = data.labels.as_ref()?;
        let hits = data
            .samples
            .iter_rows()
            .zip(labels)
            .filter(|(x, &y)| self.predict(&self.standardizer.transform(x)) == y)
            .count();
        Some(hits as f64 / labels.len().max(1) as f64)
    }
}

impl Classifier for MlpClassifier {
    fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    fn n_classes(&self) -> usize {
        self.network.out_dim().expect("non-empty")
    }

    fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    fn logits(&self, z: &[f64]) -> Vec<f64> {
        self.network.forward(z)
    }

    fn logits_vjp(&self, z: &[f64], cotangent: &[f64]) -> Vec<f64> {
        self.network.vjp(z, cotangent)
    }

    fn representation(&self, z: &[f64]) -> Vec<f64> {
        self.network.layers[..self.hidden_count()]
            .iter()
            .fold(z.to_vec(), |a, l| l.forward(&a))
    }

    fn representation_vjp(&self, z: &[f64], cotangent: &[f64]) -> Vec<f64> {
        let hidden = Network {
            layers: self.network.layers[..self.hidden_count()].to_vec(),
        };
        if hidden.layers.is_empty() {
            return cotangent.to_vec();
        }
        hidden.vjp(z, cotangent)
    }

    fn kind(&self) -> &'static str {
        "mlp"
    }
}

/// Full-batch gradient descent on mean cross-entropy.
pub fn train_classifier(data: &Dataset, cfg: &MlpConfig) -> Result<MlpClassifier> {
    let labels = data
        .labels
        .as_ref()
        .ok_or_else(|| Error::Parameter("classifier training needs labeled data".into()))?;
    let classes = data.classes();
    if classes.len() < 2 {
        return Err(Error::Parameter("classifier training needs at least 2 classes".into()));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::Parameter("learning rate must be > 0".into()));
    }
    if cfg.hidden.iter().any(|&h| h == 0) {
        return Err(Error::Parameter("hidden widths must be positive".into()));
    }
    let k1 = classes.last().expect("non-empty") + 1;
    let (standardizer, clamped) = Standardizer::fit(&data.samples)?;
    let z = standardizer.transform_matrix(&data.samples);
    let m = z.rows() as f64;

    let mut dims = vec![data.n_vars()];
    dims.extend(&cfg.hidden);
    dims.push(k1);
    let mut rng = Rng::new(cfg.seed);
    let mut network = Network::init(&dims, true, &mut rng);
    let mut log = TrainingLog {
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        seed: cfg.seed,
        warnings: clamped
            .iter()
            .map(|j| format!("variable {j} has zero variance; scale clamped"))
            .collect(),
        ..Default::default()
    };
    if cfg.epochs == 0 {
        log.warnings.push("epochs = 0: model left at initialization".into());
    }
    if classes.len() < k1 {
        log.warnings
            .push(format!("only {} of {k1} class ids present", classes.len()));
    }

    for epoch in 0..=cfg.epochs {
        let mut grads = ParamGrads::zeros_like(&network);
        let mut loss = 0.0;
        for (row, &y) in z.iter_rows().zip(labels) {
            let acts = network.trace(row);
            let p = softmax(acts.last().expect("non-empty"));
            loss -= p[y].max(f64::MIN_POSITIVE).ln();
            let cot: Vec<f64> = p
                .iter()
                .enumerate()
                .map(|(c, &pc)| (pc - f64::from(u8::from(c == y))) / m)
                .collect();
            network.backward(&acts, &cot, Some(&mut grads));
        }
        loss /= m;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        log.loss_curve.push(loss);
        if epoch == cfg.epochs {
            break;
        }
        network.apply_gradient(&grads, cfg.learning_rate);
        if !network.params_finite() {
            return Err(Error::Divergence { epoch, loss: f64::NAN });
        }
    }

    let hits = z
        .iter_rows()
        .zip(labels)
        .filter(|(r, &y)| argmax(&network.forward(r)) == y)
        .count();
    log.accuracy = Some(hits as f64 / m);
    Ok(MlpClassifier {
        standardizer,
        network,
        training: log,
    })
}
