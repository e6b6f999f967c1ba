use serde::{Deserialize, Serialize};

use super::nn::{Network, ParamGrads};
use super::{Dataset, Detector, Standardizer, TrainingLog};
use crate::error::{Error, Result};
use crate::numerics::{sub, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeConfig {
    /// Symmetric bottleneck, e.g. `[n, 8, 3, 8, n]`.
    pub layer_dims: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

/// Autoencoder detector `f(z) = dec(enc(z))`.
///
/// Stored as one network; the first `encoder_layers` layers form the encoder.
#[derive(Debug, Clone)]
pub struct AeModel {
    pub standardizer: Standardizer,
    pub network: Network,
    pub encoder_layers: usize,
    pub training: TrainingLog,
}

impl AeModel {
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.network.in_dim().unwrap_or(0)];
        dims.extend(self.network.layers.iter().map(|l| l.fan_out()));
        dims
    }

    pub fn encode(&self, z: &[f64]) -> Vec<f64> {
        self.network.layers[..self.encoder_layers]
            .iter()
            .fold(z.to_vec(), |a, l| l.forward(&a))
    }

    pub fn mean_spe(&self, z_rows: &crate::numerics::Matrix) -> f64 {
        z_rows.iter_rows().map(|z| self.spe(z)).sum::<f64>() / z_rows.rows().max(1) as f64
    }
}

impl Detector for AeModel {
    fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    fn principal(&self, z: &[f64]) -> Vec<f64> {
        self.network.forward(z)
    }

    /// `∇‖z − g(z)‖² = 2r − J_gᵀ 2r` with `r = z − g(z)`.
    fn spe_gradient(&self, z: &[f64]) -> Vec<f64> {
        let acts = self.network.trace(z);
        let out = acts.last().expect("non-empty");
        let two_r: Vec<f64> = sub(z, out).into_iter().map(|v| 2.0 * v).collect();
        let back = self.network.backward(&acts, &two_r, None);
        two_r.iter().zip(&back).map(|(a, b)| a - b).collect()
    }

    fn kind(&self) -> &'static str {
        "ae"
    }
}

pub(crate) fn validate_bottleneck(dims: &[usize], n: usize) -> Result<usize> {
    if dims.len() < 3 || dims.len() % 2 == 0 {
        return Err(Error::Parameter(
            "autoencoder needs an odd number (>= 3) of layer sizes".into(),
        ));
    }
    if dims[0] != n || *dims.last().expect("non-empty") != n {
        return Err(Error::Parameter(format!(
            "autoencoder input and output must have {n} units"
        )));
    }
    let k = dims.len();
    if (0..k).any(|i| dims[i] != dims[k - 1 - i]) {
        return Err(Error::Parameter(format!("layer sizes {dims:?} are not symmetric")));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::Parameter("layer sizes must be positive".into()));
    }
    Ok(k / 2)
}

/// Full-batch gradient descent on mean SPE over standardized normal data.
pub fn train_ae(data: &Dataset, cfg: &AeConfig) -> Result<AeModel> {
    if let Some(labels) = &data.labels {
        if labels.iter().any(|&l| l != 0) {
            return Err(Error::Parameter("autoencoder training data must be all-normal".into()));
        }
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::Parameter("learning rate must be > 0".into()));
    }
    let n = data.n_vars();
    let encoder_layers = validate_bottleneck(&cfg.layer_dims, n)?;
    let (standardizer, clamped) = Standardizer::fit(&data.samples)?;
    let z = standardizer.transform_matrix(&data.samples);
    let m = z.rows() as f64;

    let mut rng = Rng::new(cfg.seed);
    let mut network = Network::init(&cfg.layer_dims, true, &mut rng);
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

    for epoch in 0..=cfg.epochs {
        let mut grads = ParamGrads::zeros_like(&network);
        let mut loss = 0.0;
        for row in z.iter_rows() {
            let acts = network.trace(row);
            let out = acts.last().expect("non-empty");
            let r = sub(row, out);
            loss += r.iter().map(|v| v * v).sum::<f64>();
            // d‖z − o‖²/do = −2r, averaged over the batch
            let cot: Vec<f64> = r.iter().map(|v| -2.0 * v / m).collect();
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

    Ok(AeModel {
        standardizer,
        network,
        encoder_layers,
        training: log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, norm2, Matrix};

    /// Points on a curved one-dimensional manifold in R³.
    pub(crate) fn curve_data(m: usize, seed: u64) -> Dataset {
        let mut rng = Rng::new(seed);
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let t = rng.uniform_range(-1.0, 1.0);
                vec![t, 0.5 * t * t, (0.8 * t).sin()]
            })
            .collect();
        Dataset::new(Matrix::from_rows(&rows).unwrap())
    }

    fn cfg(epochs: usize) -> AeConfig {
        AeConfig {
            layer_dims: vec![3, 8, 1, 8, 3],
            epochs,
            learning_rate: 0.02,
            seed: 7,
        }
    }

    #[test]
    fn training_reduces_spe_on_manifold_data() {
        let model = train_ae(&curve_data(200, 1), &cfg(8000)).unwrap();
        let curve = &model.training.loss_curve;
        assert_eq!(curve.len(), 8001);
        assert!(curve[8000] < 0.01 * curve[0], "{} vs {}", curve[8000], curve[0]);
    }

    #[test]
    fn zero_epochs_keeps_initial_model() {
        let data = curve_data(50, 2);
        let model = train_ae(&data, &cfg(0)).unwrap();
        let mut rng = Rng::new(7);
        let fresh = Network::init(&[3, 8, 1, 8, 3], true, &mut rng);
        assert_eq!(model.network, fresh);
        assert_eq!(model.training.loss_curve.len(), 1);
        assert!(!model.training.warnings.is_empty());
    }

    #[test]
    fn same_seed_bit_identical() {
        let data = curve_data(40, 3);
        let a = train_ae(&data, &cfg(20)).unwrap();
        let b = train_ae(&data, &cfg(20)).unwrap();
        assert_eq!(a.network, b.network);
        assert_eq!(a.training, b.training);
    }

    #[test]
    fn spe_gradient_matches_finite_differences() {
        let model = train_ae(&curve_data(60, 4), &cfg(50)).unwrap();
        let z = [0.4, -1.2, 0.9];
        let g = model.spe_gradient(&z);
        let fd = finite_diff_grad(|v| model.spe(v), &z, 1e-5).unwrap();
        let err = norm2(&sub(&g, &fd)) / norm2(&fd).max(1e-8);
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn rejects_bad_configs() {
        let data = curve_data(10, 5);
        let mut c = cfg(1);
        c.layer_dims = vec![3, 2, 3, 3];
        assert!(train_ae(&data, &c).is_err());
        c.layer_dims = vec![3, 4, 2, 5, 3];
        assert!(train_ae(&data, &c).is_err());
        c.layer_dims = vec![4, 2, 4];
        assert!(train_ae(&data, &c).is_err());
        let labeled = data.clone().with_labels(vec![1; 10]).unwrap();
        assert!(train_ae(&labeled, &cfg(1)).is_err());
    }

    #[test]
    fn divergence_reports_epoch() {
        let mut c = cfg(200);
        c.learning_rate = 1e6;
        match train_ae(&curve_data(30, 6), &c) {
            Err(Error::Divergence { epoch, .. }) => assert!(epoch <= 200),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
