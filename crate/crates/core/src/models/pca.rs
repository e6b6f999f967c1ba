use super::{Dataset, Detector, Standardizer};
use crate::error::{Error, Result};
use crate::numerics::{dot, sym_eig, Matrix};

/// PCA detector `f(z) = P Pᵀ z` on standardized samples.
#[derive(Debug, Clone)]
pub struct PcaModel {
    pub standardizer: Standardizer,
    /// `n × l`, column-orthonormal.
    pub loading: Matrix,
    /// All `n` covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub warnings: Vec<String>,
    residual: Matrix,
}

impl PcaModel {
    pub fn from_parts(
        standardizer: Standardizer,
        loading: Matrix,
        eigenvalues: Vec<f64>,
        warnings: Vec<String>,
    ) -> Result<Self> {
        let n = loading.rows();
        if standardizer.dim() != n || eigenvalues.len() != n {
            return Err(Error::Dimension("PCA parts disagree on the variable count".into()));
        }
        let ppt = loading.matmul(&loading.transpose())?;
        let residual = Matrix::identity(n).sub(&ppt)?;
        Ok(Self {
            standardizer,
            loading,
            eigenvalues,
            warnings,
            residual,
        })
    }

    pub fn n_components(&self) -> usize {
        self.loading.cols()
    }

    /// `C̃ = I − P Pᵀ`
    pub fn residual_projector(&self) -> &Matrix {
        &self.residual
    }

    /// `C̃ z`
    pub fn residual(&self, z: &[f64]) -> Vec<f64> {
        self.residual.matvec(z)
    }

    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        self.loading.matvec(&self.loading.tr_matvec(z))
    }

    pub fn explained_variance_ratio(&self) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        let kept: f64 = self.eigenvalues[..self.n_components()].iter().sum();
        if total > 0.0 {
            kept / total
        } else {
            0.0
        }
    }
}

impl Detector for PcaModel {
    fn dim(&self) -> usize {
        self.loading.rows()
    }

    fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    fn principal(&self, z: &[f64]) -> Vec<f64> {
        self.project(z)
    }

    /// `zᵀ C̃ z`, evaluated as `‖C̃z‖²` (C̃ is idempotent).
    fn spe(&self, z: &[f64]) -> f64 {
        let r = self.residual(z);
        dot(&r, &r)
    }

    fn spe_gradient(&self, z: &[f64]) -> Vec<f64> {
        self.residual(z).into_iter().map(|v| 2.0 * v).collect()
    }

    fn kind(&self) -> &'static str {
        "pca"
    }
}

/// Fits PCA with `l` components to the normal rows of `data`.
///
/// Zero-variance variables are kept with their scale clamped and a warning is
/// recorded on the model.
pub fn fit_pca(data: &Dataset, l: usize) -> Result<PcaModel> {
    let n = data.n_vars();
    if l == 0 || l >= n {
        return Err(Error::Parameter(format!("need 0 < l < n, got l={l}, n={n}")));
    }
    let normal = data.normal_samples();
    if normal.rows() < 2 {
        return Err(Error::Parameter("PCA needs at least 2 normal samples".into()));
    }
    let (standardizer, clamped) = Standardizer::fit(&normal)?;
    let warnings = clamped
        .iter()
        .map(|j| format!("variable {j} has zero variance; scale clamped"))
        .collect();
    let z = standardizer.transform_matrix(&normal);
    let eig = sym_eig(&z.covariance()?)?;
    let mut loading = Matrix::zeros(n, l);
    for k in 0..l {
        for i in 0..n {
            loading.set(i, k, eig.vectors.get(i, k));
        }
    }
    PcaModel::from_parts(standardizer, loading, eig.values, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, Rng};

    fn isotropic(n: usize, m: usize, seed: u64) -> Dataset {
        let mut rng = Rng::new(seed);
        let data = (0..n * m).map(|_| rng.normal()).collect();
        Dataset::new(Matrix::new(m, n, data).unwrap())
    }

    #[test]
    fn rank_one_data_has_zero_spe() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let t = i as f64 * 0.1 - 2.0;
                vec![t, 3.0 * t + 1.0]
            })
            .collect();
        let ds = Dataset::new(Matrix::from_rows(&rows).unwrap());
        let pca = fit_pca(&ds, 1).unwrap();
        for r in &rows {
            let z = pca.standardizer.transform(r);
            assert!(pca.spe(&z) < 1e-10);
        }
    }

    #[test]
    fn isotropic_explained_ratio_near_one_over_n() {
        let n = 5;
        let pca = fit_pca(&isotropic(n, 20_000, 3), 1).unwrap();
        assert!((pca.explained_variance_ratio() - 1.0 / n as f64).abs() < 0.02);
    }

    #[test]
    fn projector_identities() {
        let pca = fit_pca(&isotropic(6, 200, 1), 2).unwrap();
        let c = pca.residual_projector();
        assert!(c.matmul(c).unwrap().sub(c).unwrap().max_abs() < 1e-8);
        assert!(c.asymmetry().unwrap() < 1e-12);
        assert!(c.matmul(&pca.loading).unwrap().max_abs() < 1e-8);
        let ptp = pca.loading.transpose().matmul(&pca.loading).unwrap();
        assert!(ptp.sub(&Matrix::identity(2)).unwrap().max_abs() < 1e-8);
        let x = [0.3, -1.0, 2.0, 0.1, 0.0, 1.5];
        let p = pca.project(&x);
        let pp = pca.project(&p);
        for (a, b) in p.iter().zip(&pp) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn gradient_is_twice_residual_and_vanishes_at_mean() {
        let pca = fit_pca(&isotropic(4, 100, 2), 2).unwrap();
        let z = [0.5, -0.2, 1.0, 0.7];
        let fd = finite_diff_grad(|v| pca.spe(v), &z, 1e-5).unwrap();
        let g = pca.spe_gradient(&z);
        let cz = pca.residual(&z);
        for i in 0..4 {
            assert_eq!(g[i], 2.0 * cz[i]);
            assert!((g[i] - fd[i]).abs() < 1e-8);
        }
        let at_mean = pca.spe_gradient(&pca.standardizer.transform(&pca.standardizer.mean.clone()));
        assert!(at_mean.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn rejects_bad_component_count() {
        let ds = isotropic(3, 10, 0);
        assert!(fit_pca(&ds, 3).is_err());
        assert!(fit_pca(&ds, 0).is_err());
    }

    #[test]
    fn zero_variance_column_is_clamped_with_warning() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * i) as f64, 4.0]).collect();
        let pca = fit_pca(&Dataset::new(Matrix::from_rows(&rows).unwrap()), 1).unwrap();
        assert_eq!(pca.warnings.len(), 1);
    }
}
