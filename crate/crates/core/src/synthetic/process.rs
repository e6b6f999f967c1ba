use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Dataset;
use crate::numerics::{Matrix, Rng};

/// Linear latent-factor process `x = A t + e` with `t ~ N(0, I)` and
/// `e ~ N(0, noise² I)`, used as normal operating data for detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    pub n_vars: usize,
    pub n_latent: usize,
    pub noise: f64,
    pub n_train: usize,
    pub seed: u64,
}

impl Default for ProcessSpec {
    fn default() -> Self {
        Self {
            n_vars: 10,
            n_latent: 3,
            noise: 0.1,
            n_train: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaultSample {
    pub x: Vec<f64>,
    pub roots: BTreeSet<usize>,
}

#[derive(Debug, Clone)]
pub struct ProcessModel {
    pub spec: ProcessSpec,
    pub mixing: Matrix,
    /// Per-variable standard deviation of the normal process.
    pub std: Vec<f64>,
    rng: Rng,
}

impl ProcessModel {
    pub fn new(spec: ProcessSpec) -> Result<Self> {
        if spec.n_latent == 0 || spec.n_latent >= spec.n_vars {
            return Err(Error::Parameter(format!(
                "need 0 < n_latent < n_vars, got {} and {}",
                spec.n_latent, spec.n_vars
            )));
        }
        if !(spec.noise > 0.0) {
            return Err(Error::Parameter("noise must be positive".into()));
        }
        let root = Rng::new(spec.seed);
        let mut mix_rng = root.split(0);
        let mut mixing = Matrix::zeros(spec.n_vars, spec.n_latent);
        for v in mixing.data_mut() {
            *v = mix_rng.normal();
        }
        let std = mixing
            .iter_rows()
            .map(|r| (r.iter().map(|a| a * a).sum::<f64>() + spec.noise * spec.noise).sqrt())
            .collect();
        Ok(Self {
            mixing,
            std,
            rng: root.split(1),
            spec,
        })
    }

    /// One normal sample.
    pub fn sample(&mut self) -> Vec<f64> {
        let t: Vec<f64> = (0..self.spec.n_latent).map(|_| self.rng.normal()).collect();
        let mut x = self.mixing.matvec(&t);
        for v in &mut x {
            *v += self.spec.noise * self.rng.normal();
        }
        x
    }

    pub fn normal_data(&mut self, n: usize) -> Result<Matrix> {
        let mut data = Vec::with_capacity(n * self.spec.n_vars);
        for _ in 0..n {
            data.extend(self.sample());
        }
        Matrix::new(n, self.spec.n_vars, data)
    }

    /// The `n_train` training set, all labelled normal.
    pub fn training_set(&mut self) -> Result<Dataset> {
        let x = self.normal_data(self.spec.n_train)?;
        let names = (1..=self.spec.n_vars).map(|i| format!("x{i}")).collect();
        Dataset::new(x)
            .with_names(names)?
            .with_labels(vec![0; self.spec.n_train])
    }

    /// Normal sample with each variable in `roots` shifted by `magnitude`
    /// standard deviations, with a random sign per variable.
    pub fn fault(&mut self, roots: &[usize], magnitude: f64) -> Result<FaultSample> {
        if roots.iter().any(|&r| r >= self.spec.n_vars) {
            return Err(Error::Parameter("fault variable out of range".into()));
        }
        let mut x = self.sample();
        for &r in roots {
            let sign = if self.rng.uniform() < 0.5 { -1.0 } else { 1.0 };
            x[r] += sign * magnitude * self.std[r];
        }
        Ok(FaultSample {
            x,
            roots: roots.iter().copied().collect(),
        })
    }

    /// Fault on a uniformly drawn variable, or on `k` distinct variables.
    pub fn random_fault(&mut self, k: usize, magnitude: f64) -> Result<FaultSample> {
        if k == 0 || k > self.spec.n_vars {
            return Err(Error::Parameter(format!(
                "cannot fault {k} of {} variables",
                self.spec.n_vars
            )));
        }
        let mut idx: Vec<usize> = (0..self.spec.n_vars).collect();
        self.rng.shuffle(&mut idx);
        idx.truncate(k);
        idx.sort_unstable();
        self.fault(&idx, magnitude)
    }

    /// Labelled set: `n_train` normals plus `per_var` single-variable faults
    /// for every variable, with label `var + 1` and matching roots.
    pub fn labelled_set(&mut self, per_var: usize, magnitude: f64) -> Result<Dataset> {
        let n = self.spec.n_vars;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..self.spec.n_train {
            rows.push(self.sample());
            labels.push(0);
        }
        for v in 0..n {
            for _ in 0..per_var {
                rows.push(self.fault(&[v], magnitude)?.x);
                labels.push(v + 1);
            }
        }
        let names = (1..=n).map(|i| format!("x{i}")).collect();
        let roots = (0..n).map(|v| (v + 1, [v].into_iter().collect())).collect();
        Dataset::new(Matrix::from_rows(&rows)?)
            .with_names(names)?
            .with_labels(labels)?
            .with_roots(roots)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_data_has_expected_variance() {
        let mut p = ProcessModel::new(ProcessSpec {
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        let x = p.normal_data(20000).unwrap();
        let cov = x.covariance().unwrap();
        for j in 0..10 {
            let rel = (cov.get(j, j).sqrt() - p.std[j]).abs() / p.std[j];
            assert!(rel < 0.03, "variable {j}: {rel}");
        }
    }

    #[test]
    fn faults_shift_only_roots() {
        let spec = ProcessSpec {
            seed: 9,
            ..Default::default()
        };
        let mut a = ProcessModel::new(spec.clone()).unwrap();
        let mut b = ProcessModel::new(spec).unwrap();
        let base = a.sample();
        // same stream, so b's sample equals a's before the shift
        let f = b.fault(&[4], 5.0).unwrap();
        for j in 0..10 {
            let d = (f.x[j] - base[j]).abs();
            if j == 4 {
                assert!((d - 5.0 * b.std[4]).abs() < 1e-12);
            } else {
                assert_eq!(d, 0.0);
            }
        }
        let two = b.random_fault(2, 4.0).unwrap();
        assert_eq!(two.roots.len(), 2);
    }

    #[test]
    fn labelled_set_layout() {
        let mut p = ProcessModel::new(ProcessSpec {
            n_train: 30,
            seed: 1,
            ..Default::default()
        })
        .unwrap();
        let d = p.labelled_set(5, 4.0).unwrap();
        assert_eq!(d.n_samples(), 80);
        assert_eq!(d.rows_with_label(7).len(), 5);
        assert_eq!(d.roots_of(7).unwrap().iter().copied().collect::<Vec<_>>(), vec![6]);
        assert!(ProcessModel::new(ProcessSpec {
            n_latent: 10,
            ..Default::default()
        })
        .is_err());
    }
}
