use crate::error::{Error, Result};
use crate::models::{Classifier, Dataset, Standardizer};
use crate::numerics::{cholesky_solve, norm1, Matrix};

/// Ridge added to the within-class covariance before solving.
pub const FISHER_RIDGE: f64 = 1e-8;

/// Linear classifier `logits = W x` with ℓ1-normalized rows.
///
/// Works directly on raw coordinates (identity standardization); its
/// representation layer is the logit vector itself.
#[derive(Debug, Clone)]
pub struct FisherModel {
    pub weights: Matrix,
    /// Set when the covariance stayed singular after the standard ridge and a
    /// stronger one was needed.
    pub regularized: bool,
    standardizer: Standardizer,
}

impl FisherModel {
    pub fn new(weights: Matrix) -> Self {
        let standardizer = Standardizer::identity(weights.cols());
        Self {
            weights,
            regularized: false,
            standardizer,
        }
    }

    pub fn n_faults(&self) -> usize {
        self.weights.rows() - 1
    }
}

impl Classifier for FisherModel {
    fn dim(&self) -> usize {
        self.weights.cols()
    }
    fn n_classes(&self) -> usize {
        self.weights.rows()
    }
    fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }
    fn logits(&self, z: &[f64]) -> Vec<f64> {
        self.weights.matvec(z)
    }
    fn logits_vjp(&self, _z: &[f64], cotangent: &[f64]) -> Vec<f64> {
        self.weights.tr_matvec(cotangent)
    }
    fn representation(&self, z: &[f64]) -> Vec<f64> {
        self.logits(z)
    }
    fn representation_vjp(&self, z: &[f64], cotangent: &[f64]) -> Vec<f64> {
        self.logits_vjp(z, cotangent)
    }
    fn kind(&self) -> &'static str {
        "fisher"
    }
}

/// Optimal weights for the toy problem with `n` faults over `m` variables.
pub fn fisher_closed_form(n: usize, m: usize) -> Result<FisherModel> {
    if n == 0 || n >= m {
        return Err(Error::Parameter(format!("need 0 < N < M, got N={n}, M={m}")));
    }
    let nf = n as f64;
    let mut w = Matrix::zeros(n + 1, m);
    for j in 0..n {
        w.set(0, j, -1.0 / nf);
    }
    let denom = 2.0 * nf - 1.0;
    for y in 1..=n {
        for j in 0..n {
            w.set(y, j, if j == y - 1 { nf / denom } else { -1.0 / denom });
        }
    }
    Ok(FisherModel::new(w))
}

fn class_means(data: &Dataset) -> Result<(Vec<usize>, Matrix)> {
    let classes = data.classes();
    if classes.len() < 2 {
        return Err(Error::Parameter("need at least two classes".into()));
    }
    if classes.iter().enumerate().any(|(k, &c)| k != c) {
        return Err(Error::Parameter("class ids must be 0..=N without gaps".into()));
    }
    let m = data.n_vars();
    let mut means = Matrix::zeros(classes.len(), m);
    for &c in &classes {
        let rows = data.rows_with_label(c);
        for &r in &rows {
            for (j, v) in data.sample(r).iter().enumerate() {
                means.set(c, j, means.get(c, j) + v);
            }
        }
        for j in 0..m {
            means.set(c, j, means.get(c, j) / rows.len() as f64);
        }
    }
    Ok((classes, means))
}

/// `μ_y − μ̄` per class, with `μ̄` the unweighted mean of class means.
pub fn mean_difference(data: &Dataset) -> Result<Matrix> {
    let (classes, means) = class_means(data)?;
    let grand = means.col_means();
    let mut out = means.clone();
    for c in 0..classes.len() {
        for (j, g) in grand.iter().enumerate() {
            out.set(c, j, means.get(c, j) - g);
        }
    }
    Ok(out)
}

/// `w_y ∝ Σ_w⁻¹ (μ_y − μ̄)` with pooled within-class covariance `Σ_w`,
/// ℓ1-normalized; fault rows are signed so their own variable is positive.
pub fn fisher_fit(data: &Dataset) -> Result<FisherModel> {
    let (classes, means) = class_means(data)?;
    let labels = data.labels.as_ref().expect("classes imply labels");
    let m = data.n_vars();
    let mut scatter = Matrix::zeros(m, m);
    for (r, &y) in labels.iter().enumerate() {
        let x = data.sample(r);
        let d: Vec<f64> = (0..m).map(|j| x[j] - means.get(y, j)).collect();
        for i in 0..m {
            for j in 0..m {
                scatter.set(i, j, scatter.get(i, j) + d[i] * d[j]);
            }
        }
    }
    let dof = (labels.len() - classes.len()).max(1) as f64;
    let scale = scatter.data().iter().map(|v| v.abs()).fold(0.0, f64::max) / dof;
    for i in 0..m {
        for j in 0..m {
            let mut v = scatter.get(i, j) / dof;
            if i == j {
                v += FISHER_RIDGE;
            }
            scatter.set(i, j, v);
        }
    }
    let diff = mean_difference(data)?;
    let mut w = Matrix::zeros(classes.len(), m);
    let mut regularized = false;
    for c in 0..classes.len() {
        let b = diff.row(c).to_vec();
        let sol = match cholesky_solve(&scatter, &b, 0.0) {
            Some(s) => s,
            None => {
                regularized = true;
                let mut reg = scatter.clone();
                for i in 0..m {
                    reg.set(i, i, reg.get(i, i) + 1e-6 * scale.max(1.0));
                }
                cholesky_solve(&reg, &b, 0.0)
                    .ok_or_else(|| Error::Evaluation("within-class covariance is singular".into()))?
            }
        };
        let l1 = norm1(&sol);
        if l1 == 0.0 {
            return Err(Error::Evaluation(format!("class {c} mean equals the grand mean")));
        }
        let sign = if c > 0 && c - 1 < m && sol[c - 1] < 0.0 {
            -1.0
        } else {
            1.0
        };
        for j in 0..m {
            w.set(c, j, sign * sol[j] / l1);
        }
    }
    let mut model = FisherModel::new(w);
    model.regularized = regularized;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Classifier;
    use crate::synthetic::{gen_toy, ToySpec};

    #[test]
    fn closed_form_values() {
        let w = fisher_closed_form(2, 4).unwrap().weights;
        assert_eq!(w.row(0), &[-0.5, -0.5, 0.0, 0.0]);
        assert!((w.get(1, 0) - 2.0 / 3.0).abs() < 1e-15 && (w.get(1, 1) + 1.0 / 3.0).abs() < 1e-15);
        let w = fisher_closed_form(5, 10).unwrap().weights;
        assert!((w.get(3, 2) - 5.0 / 9.0).abs() < 1e-15 && (w.get(3, 0) + 1.0 / 9.0).abs() < 1e-15);
        for r in w.iter_rows() {
            assert!((norm1(r) - 1.0).abs() < 1e-12);
            assert!(r[5..].iter().all(|&v| v == 0.0));
        }
        assert!(fisher_closed_form(4, 4).is_err());
    }

    #[test]
    fn mean_difference_matches_construction() {
        let spec = ToySpec {
            m: 6,
            n: 3,
            f: 1.0,
            sigma: 0.05,
            samples_per_class: 4000,
            seed: 5,
        };
        let d = mean_difference(&gen_toy(&spec).unwrap()).unwrap();
        // (μ_y − μ̄) = N/(N+1) · (f at y, −f/N on other faults, 0 elsewhere)
        let k = 3.0 / 4.0;
        for y in 1..=3 {
            for j in 0..6 {
                let expect = if j == y - 1 {
                    k
                } else if j < 3 {
                    -k / 3.0
                } else {
                    0.0
                };
                assert!((d.get(y, j) - expect).abs() < 5e-3);
            }
        }
    }

    #[test]
    fn fit_recovers_closed_form() {
        let spec = ToySpec {
            m: 6,
            n: 3,
            f: 1.0,
            sigma: 0.1,
            samples_per_class: 5000,
            seed: 6,
        };
        let fit = fisher_fit(&gen_toy(&spec).unwrap()).unwrap();
        let exact = fisher_closed_form(3, 6).unwrap();
        let err = fit.weights.sub(&exact.weights).unwrap().max_abs();
        // covariance sampling error scales like 1/√(total samples)
        let tol = 4.0 / (20000f64).sqrt();
        assert!(err < tol, "max |Δw| = {err}");
        for r in fit.weights.iter_rows() {
            assert!((norm1(r) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn single_fault_class_is_one_hot() {
        let spec = ToySpec {
            m: 4,
            n: 1,
            f: 1.0,
            sigma: 0.1,
            samples_per_class: 50000,
            seed: 7,
        };
        let fit = fisher_fit(&gen_toy(&spec).unwrap()).unwrap();
        let tol = 4.0 / (100000f64).sqrt();
        // the diagonal absorbs the ℓ1 mass of all three off-diagonal errors
        assert!((fit.weights.get(1, 0) - 1.0).abs() < 3.0 * tol);
        assert!(fit.weights.row(1)[1..].iter().all(|v| v.abs() < tol));
    }

    #[test]
    fn classifier_interface() {
        let f = fisher_closed_form(2, 3).unwrap();
        let x = [1.0, 0.0, 0.0];
        assert_eq!(f.predict(&x), 1);
        assert_eq!(f.representation(&x), f.logits(&x));
        assert_eq!(f.logits_vjp(&x, &[0.0, 1.0, 0.0]), f.weights.row(1).to_vec());
    }
}
