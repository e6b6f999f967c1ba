use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ClassLogit, Classifier, ScalarFunction};
use crate::numerics::{cosine, unit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub alpha: f64,
    /// `p(explained) + p(normal)`, or `p(normal)` when explaining class 0.
    pub confidence_ratio: f64,
    /// Cosine between the explained-logit gradient and the root axis.
    pub cosine_to_root: f64,
    pub zero_gradient: bool,
}

/// Samples the straight path `baseline → z` at `steps + 1` points.
pub fn path_diagnostics(
    clf: &dyn Classifier,
    z: &[f64],
    baseline: &[f64],
    steps: usize,
    explained_class: usize,
    root: usize,
) -> Result<Vec<PathPoint>> {
    let n = clf.dim();
    if z.len() != n || baseline.len() != n {
        return Err(Error::Dimension("sample and baseline must match the classifier".into()));
    }
    if steps == 0 || explained_class >= clf.n_classes() || root >= n {
        return Err(Error::Parameter(
            "need steps >= 1, a valid class and a valid root variable".into(),
        ));
    }
    let logit = ClassLogit {
        clf,
        class: explained_class,
    };
    let axis = unit(n, root);
    Ok((0..=steps)
        .map(|k| {
            let alpha = k as f64 / steps as f64;
            let x: Vec<f64> = baseline.iter().zip(z).map(|(b, v)| b + alpha * (v - b)).collect();
            let p = clf.probabilities(&x);
            let confidence_ratio = if explained_class == 0 {
                p[0]
            } else {
                p[explained_class] + p[0]
            };
            let g = logit.gradient(&x);
            let (cosine_to_root, zero_gradient) = match cosine(&g, &axis) {
                Some(c) => (c.clamp(-1.0, 1.0), false),
                None => (0.0, true),
            };
            PathPoint {
                alpha,
                confidence_ratio,
                cosine_to_root,
                zero_gradient,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{train_classifier, Dataset, MlpConfig};
    use crate::numerics::{Matrix, Rng};

    #[test]
    fn endpoints_and_ranges() {
        let mut rng = Rng::new(9);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for y in 0..3 {
            for _ in 0..40 {
                let mut x: Vec<f64> = (0..4).map(|_| 0.1 * rng.normal()).collect();
                if y > 0 {
                    x[y - 1] += 1.0;
                }
                rows.push(x);
                labels.push(y);
            }
        }
        let data = Dataset::new(Matrix::from_rows(&rows).unwrap())
            .with_labels(labels)
            .unwrap();
        let clf = train_classifier(
            &data,
            &MlpConfig {
                hidden: vec![6],
                epochs: 100,
                learning_rate: 0.5,
                seed: 1,
            },
        )
        .unwrap();
        let z = clf.standardizer.transform(data.sample(50));
        let b = clf.standardizer.transform(&[0.0; 4]);
        let pts = path_diagnostics(&clf, &z, &b, 20, 1, 0).unwrap();
        assert_eq!(pts.len(), 21);
        let p = clf.probabilities(&z);
        assert!((pts[20].confidence_ratio - (p[1] + p[0])).abs() < 1e-15);
        assert!(pts.iter().all(|q| (-1.0..=1.0).contains(&q.cosine_to_root)));
        assert!(path_diagnostics(&clf, &z, &b, 20, 3, 0).is_err());
    }
}
