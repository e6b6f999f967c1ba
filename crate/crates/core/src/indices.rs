//! Fault indices: detection SPE with a control limit, and classification SPE
//! measured against the barycenter of normal representations.

use crate::error::{Error, Result};
use crate::models::{Classifier, Detector, Functional};
use crate::numerics::{empirical_quantile, Matrix};

/// Default calibration quantile for both control limits.
pub const DEFAULT_QUANTILE: f64 = 0.99;

fn check_quantile(q: f64) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Parameter(format!("calibration quantile {q} not in (0, 1)")));
    }
    Ok(())
}

/// SPE of a detector plus its control limit `δ²`.
#[derive(Clone, Copy)]
pub struct DetectionIndex<'a> {
    pub detector: &'a dyn Detector,
    pub control_limit: Option<f64>,
    pub calibration_quantile: f64,
}

impl<'a> DetectionIndex<'a> {
    pub fn new(detector: &'a dyn Detector) -> Self {
        Self {
            detector,
            control_limit: None,
            calibration_quantile: DEFAULT_QUANTILE,
        }
    }

    /// Sets `δ²` to the empirical quantile of SPE over raw normal samples.
    pub fn calibrate(&mut self, normal: &Matrix, quantile: f64) -> Result<f64> {
        check_quantile(quantile)?;
        let spe: Vec<f64> = normal
            .iter_rows()
            .map(|x| self.spe_detection(x))
            .collect::<Result<_>>()?;
        let limit = empirical_quantile(&spe, quantile)?;
        self.control_limit = Some(limit);
        self.calibration_quantile = quantile;
        Ok(limit)
    }

    pub fn calibrated(detector: &'a dyn Detector, normal: &Matrix, quantile: f64) -> Result<Self> {
        let mut idx = Self::new(detector);
        idx.calibrate(normal, quantile)?;
        Ok(idx)
    }

    pub fn limit(&self) -> Result<f64> {
        self.control_limit.ok_or(Error::Uncalibrated)
    }

    /// SPE of a raw sample.
    pub fn spe_detection(&self, x: &[f64]) -> Result<f64> {
        let s = self.detector.standardizer();
        s.check(x)?;
        Ok(self.detector.spe(&s.transform(x)))
    }

    /// `1` iff `SPE(x) > δ²`.
    pub fn detect(&self, x: &[f64]) -> Result<u8> {
        let limit = self.limit()?;
        Ok(u8::from(self.spe_detection(x)? > limit))
    }

    pub fn functional(&self) -> Functional {
        Functional::DetectionSpe
    }
}

/// `SPE_FC(x) = ‖h(x) − E[h(x_normal)]‖²` with a normality limit.
#[derive(Clone)]
pub struct ClassificationIndex<'a> {
    pub classifier: &'a dyn Classifier,
    pub barycenter: Vec<f64>,
    pub normality_limit: f64,
    pub calibration_quantile: f64,
}

impl<'a> ClassificationIndex<'a> {
    /// Barycenter and normality limit from raw normal training samples.
    pub fn fit(classifier: &'a dyn Classifier, normal: &Matrix, quantile: f64) -> Result<Self> {
        check_quantile(quantile)?;
        if normal.rows() == 0 {
            return Err(Error::Parameter("no normal samples to compute the barycenter".into()));
        }
        let s = classifier.standardizer();
        let reps: Vec<Vec<f64>> = normal
            .iter_rows()
            .map(|x| {
                s.check(x)?;
                Ok(classifier.representation(&s.transform(x)))
            })
            .collect::<Result<_>>()?;
        let d = reps[0].len();
        let mut barycenter = vec![0.0; d];
        for r in &reps {
            for (b, v) in barycenter.iter_mut().zip(r) {
                *b += v;
            }
        }
        let m = reps.len() as f64;
        barycenter.iter_mut().for_each(|b| *b /= m);
        let spe: Vec<f64> = reps.iter().map(|r| sq_dist(r, &barycenter)).collect();
        let normality_limit = empirical_quantile(&spe, quantile)?;
        Ok(Self {
            classifier,
            barycenter,
            normality_limit,
            calibration_quantile: quantile,
        })
    }

    pub fn spe_standardized(&self, z: &[f64]) -> f64 {
        sq_dist(&self.classifier.representation(z), &self.barycenter)
    }

    pub fn spe_classification(&self, x: &[f64]) -> Result<f64> {
        let s = self.classifier.standardizer();
        s.check(x)?;
        Ok(self.spe_standardized(&s.transform(x)))
    }

    pub fn functional(&self) -> Functional {
        Functional::ClassificationSpe {
            barycenter: self.barycenter.clone(),
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{fit_pca, Dataset, Standardizer};
    use crate::numerics::Rng;

    fn latent(m: usize, seed: u64) -> Matrix {
        let mut rng = Rng::new(seed);
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let a = rng.normal();
                let b = rng.normal();
                vec![a, a + b, b, a - b, 0.1 * rng.normal()]
            })
            .collect();
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn detection_limits_and_boundary() {
        let x = latent(500, 1);
        let pca = fit_pca(&Dataset::new(x.clone()), 2).unwrap();
        let mut idx = DetectionIndex::new(&pca);
        assert!(matches!(idx.detect(x.row(0)), Err(Error::Uncalibrated)));
        let l90 = idx.calibrate(&x, 0.90).unwrap();
        let l99 = idx.calibrate(&x, 0.99).unwrap();
        assert!(l99 >= l90);
        assert_eq!(idx.detect(&pca.standardizer.mean.clone()).unwrap(), 0);
        let mut fault = pca.standardizer.mean.clone();
        fault[4] += 10.0 * pca.standardizer.scale[4];
        assert_eq!(idx.detect(&fault).unwrap(), 1);
        // boundary is non-strict
        idx.control_limit = Some(idx.spe_detection(&fault).unwrap());
        assert_eq!(idx.detect(&fault).unwrap(), 0);
    }

    #[test]
    fn pca_spe_of_standardized_unit_is_diagonal() {
        let x = latent(300, 2);
        let pca = fit_pca(&Dataset::new(x), 2).unwrap();
        let idx = DetectionIndex::new(&pca);
        let c = pca.residual_projector();
        for i in 0..5 {
            let mut z = vec![0.0; 5];
            z[i] = 1.0;
            let raw = pca.standardizer.inverse(&z);
            assert!((idx.spe_detection(&raw).unwrap() - c.get(i, i)).abs() < 1e-10);
        }
        assert!(idx.spe_detection(&[1.0; 4]).is_err());
    }

    #[test]
    fn spe_invariant_along_principal_subspace() {
        let x = latent(300, 3);
        let pca = fit_pca(&Dataset::new(x), 2).unwrap();
        let z = [0.3, -1.0, 2.0, 0.5, 1.5];
        let p: Vec<f64> = (0..5)
            .map(|i| 2.0 * pca.loading.get(i, 0) - pca.loading.get(i, 1))
            .collect();
        let moved: Vec<f64> = z.iter().zip(&p).map(|(a, b)| a + b).collect();
        assert!((pca.spe(&z) - pca.spe(&moved)).abs() < 1e-10);
        assert!(pca.spe(&pca.project(&z)) < 1e-12);
    }

    struct Lin;
    impl Classifier for Lin {
        fn dim(&self) -> usize {
            2
        }
        fn n_classes(&self) -> usize {
            2
        }
        fn standardizer(&self) -> &Standardizer {
            static S: std::sync::OnceLock<Standardizer> = std::sync::OnceLock::new();
            S.get_or_init(|| Standardizer::identity(2))
        }
        fn logits(&self, z: &[f64]) -> Vec<f64> {
            self.representation(z)
        }
        fn logits_vjp(&self, _: &[f64], c: &[f64]) -> Vec<f64> {
            c.to_vec()
        }
        fn representation(&self, z: &[f64]) -> Vec<f64> {
            z.to_vec()
        }
        fn representation_vjp(&self, _: &[f64], c: &[f64]) -> Vec<f64> {
            c.to_vec()
        }
        fn kind(&self) -> &'static str {
            "test"
        }
    }

    #[test]
    fn classification_barycenter_is_mean_representation() {
        let normal = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 0.0], vec![2.0, 1.0]]).unwrap();
        let idx = ClassificationIndex::fit(&Lin, &normal, 0.99).unwrap();
        assert_eq!(idx.barycenter, vec![2.0, 1.0]);
        assert_eq!(idx.spe_classification(&[2.0, 1.0]).unwrap(), 0.0);
        assert_eq!(idx.spe_classification(&[3.0, 3.0]).unwrap(), 5.0);
        assert!(ClassificationIndex::fit(&Lin, &normal, 1.0).is_err());
    }
}
