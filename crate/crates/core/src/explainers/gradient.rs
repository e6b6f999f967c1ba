use super::{Attribution, Method};
use crate::afr::{afr_pgd, AfrConfig, Reconstruction};
use crate::error::{Error, Result};
use crate::models::ScalarFunction;

pub const DEFAULT_STEPS: usize = 200;

pub fn saliency(f: &dyn ScalarFunction, z: &[f64]) -> Attribution {
    Attribution::new(Method::Saliency, f.gradient(z), f.describe())
}

/// Trapezoid-rule average of `∂ᵢf` along `b + α(z − b)`, `α ∈ [0, 1]`.
fn path_average(f: &dyn ScalarFunction, z: &[f64], b: &[f64], steps: usize) -> Vec<f64> {
    let n = z.len();
    let mut acc = vec![0.0; n];
    let mut point = vec![0.0; n];
    for k in 0..=steps {
        let alpha = k as f64 / steps as f64;
        for i in 0..n {
            point[i] = b[i] + alpha * (z[i] - b[i]);
        }
        let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
        for (a, g) in acc.iter_mut().zip(f.gradient(&point)) {
            *a += w * g;
        }
    }
    acc.iter_mut().for_each(|a| *a /= steps as f64);
    acc
}

fn check(f: &dyn ScalarFunction, z: &[f64], baseline: &[f64], steps: usize) -> Result<()> {
    if steps == 0 {
        return Err(Error::Parameter("steps must be >= 1".into()));
    }
    if z.len() != f.dim() || baseline.len() != f.dim() {
        return Err(Error::Dimension(format!(
            "sample/baseline lengths {}/{} do not match functional dimension {}",
            z.len(),
            baseline.len(),
            f.dim()
        )));
    }
    Ok(())
}

/// Integrated gradients on the straight path from `baseline` to `z`.
pub fn integrated_gradients(f: &dyn ScalarFunction, z: &[f64], baseline: &[f64], steps: usize) -> Result<Attribution> {
    check(f, z, baseline, steps)?;
    let avg = path_average(f, z, baseline, steps);
    let contributions: Vec<f64> = avg
        .iter()
        .zip(z.iter().zip(baseline))
        .map(|(g, (x, b))| (x - b) * g)
        .collect();
    let residual = (contributions.iter().sum::<f64>() - (f.value(z) - f.value(baseline))).abs();
    let mut a = Attribution::new(Method::Ig, contributions, f.describe());
    a.baseline = Some(baseline.to_vec());
    a.steps = Some(steps);
    a.completeness_residual = Some(residual);
    Ok(a)
}

/// IG whose baseline is the reconstructed sample of `rec`.
pub fn abigx(f: &dyn ScalarFunction, rec: &Reconstruction, steps: usize) -> Result<Attribution> {
    let mut a = integrated_gradients(f, &rec.x_original, &rec.x_reconstructed, steps)?;
    a.method = Method::Abigx;
    a.reconstruction_converged = Some(rec.converged);
    Ok(a)
}

/// Runs PGD reconstruction on `afr_objective`, then integrates `integrand`.
pub fn abigx_pgd(
    integrand: &dyn ScalarFunction,
    afr_objective: &dyn ScalarFunction,
    z: &[f64],
    cfg: &AfrConfig,
    target: Option<f64>,
    steps: usize,
) -> Result<(Attribution, Reconstruction)> {
    let rec = afr_pgd(afr_objective, z, cfg, target)?;
    let a = abigx(integrand, &rec, steps)?;
    Ok((a, rec))
}

/// Coordinate-wise attribution: contribution `i` integrates `∂ᵢf` from the
/// one-variable reconstruction `x′⁽ⁱ⁾` to `z`.
///
/// `recs[i]` must be the reconstruction along variable `i`. The recorded
/// residual is the largest per-coordinate `|cᵢ − (f(z) − f(x′⁽ⁱ⁾))|`.
pub fn abigx_onevar(f: &dyn ScalarFunction, z: &[f64], recs: &[Reconstruction], steps: usize) -> Result<Attribution> {
    if recs.len() != z.len() {
        return Err(Error::Dimension(format!(
            "{} reconstructions for {} variables",
            recs.len(),
            z.len()
        )));
    }
    let fz = f.value(z);
    let mut contributions = Vec::with_capacity(z.len());
    let mut residual: f64 = 0.0;
    let mut converged = true;
    for (i, rec) in recs.iter().enumerate() {
        if rec.direction.is_some_and(|d| d != i) {
            return Err(Error::Parameter(format!(
                "reconstruction {i} is along variable {:?}",
                rec.direction
            )));
        }
        check(f, z, &rec.x_reconstructed, steps)?;
        let avg = path_average(f, z, &rec.x_reconstructed, steps);
        let c = (z[i] - rec.x_reconstructed[i]) * avg[i];
        residual = residual.max((c - (fz - f.value(&rec.x_reconstructed))).abs());
        converged &= rec.converged;
        contributions.push(c);
    }
    let mut a = Attribution::new(Method::AbigxOneVar, contributions, f.describe());
    a.steps = Some(steps);
    a.completeness_residual = Some(residual);
    a.reconstruction_converged = Some(converged);
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::afr::{onevar_closed_form_all, pca_closed_form};
    use crate::explainers::{cp, rbc};
    use crate::models::{fit_pca, Dataset, DetectionSpe, Detector, PcaModel};
    use crate::numerics::{finite_diff_grad, Matrix, Rng};

    fn pca() -> PcaModel {
        let mut rng = Rng::new(31);
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| {
                let a = rng.normal();
                let b = rng.normal();
                vec![
                    a,
                    b,
                    a + 0.3 * b + 0.2 * rng.normal(),
                    a - b + 0.2 * rng.normal(),
                    0.5 * rng.normal(),
                    b,
                ]
            })
            .collect();
        fit_pca(&Dataset::new(Matrix::from_rows(&rows).unwrap()), 2).unwrap()
    }

    struct Cubic;
    impl ScalarFunction for Cubic {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, z: &[f64]) -> f64 {
            z[0].powi(3) + z[0] * z[1].sin()
        }
        fn gradient(&self, z: &[f64]) -> Vec<f64> {
            vec![3.0 * z[0] * z[0] + z[1].sin(), z[0] * z[1].cos()]
        }
        fn describe(&self) -> String {
            "cubic".into()
        }
    }

    #[test]
    fn ig_of_quadratic_spe_from_zero_is_exact() {
        let pca = pca();
        let f = DetectionSpe(&pca);
        let z = [1.0, 0.5, -2.0, 0.7, 1.5, -0.4];
        let a = integrated_gradients(&f, &z, &[0.0; 6], 2).unwrap();
        let cz = pca.residual(&z);
        for i in 0..6 {
            assert!((a.contributions[i] - z[i] * cz[i]).abs() < 1e-12);
        }
        assert!(a.completeness_residual.unwrap() < 1e-12);
    }

    #[test]
    fn ig_degenerate_path_is_zero() {
        let z = [0.3, -0.2];
        let a = integrated_gradients(&Cubic, &z, &z, 10).unwrap();
        assert!(a.contributions.iter().all(|&c| c == 0.0));
        assert!(integrated_gradients(&Cubic, &z, &z, 0).is_err());
    }

    #[test]
    fn completeness_improves_with_steps() {
        let z = [1.5, 2.0];
        let r = |s| {
            integrated_gradients(&Cubic, &z, &[-1.0, 0.0], s)
                .unwrap()
                .completeness_residual
                .unwrap()
        };
        assert!(r(200) < 1e-3);
        assert!(r(400) <= r(50));
    }

    #[test]
    fn saliency_matches_finite_differences() {
        let z = [0.4, -1.1];
        let a = saliency(&Cubic, &z);
        let fd = finite_diff_grad(|v| Cubic.value(v), &z, 1e-5).unwrap();
        for (x, y) in a.contributions.iter().zip(&fd) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn abigx_reduces_to_cp_and_rbc_on_pca() {
        let pca = pca();
        let f = DetectionSpe(&pca);
        let z = [2.0, -1.0, 0.5, 3.0, -0.5, 1.0];
        let a = abigx(&f, &pca_closed_form(&pca, &z), DEFAULT_STEPS).unwrap();
        let c = cp(&pca, &z);
        for i in 0..6 {
            assert!((a.contributions[i] - c.contributions[i]).abs() < 1e-10);
        }
        let recs = onevar_closed_form_all(&pca, &z).unwrap();
        let o = abigx_onevar(&f, &z, &recs, DEFAULT_STEPS).unwrap();
        let r = rbc(&pca, &z).unwrap();
        for i in 0..6 {
            assert!((o.contributions[i] - r.contributions[i]).abs() < 1e-9);
        }
        let normal = pca.project(&z);
        let a = abigx(&f, &pca_closed_form(&pca, &normal), DEFAULT_STEPS).unwrap();
        assert!(a.contributions.iter().all(|c| c.abs() < 1e-20));
        assert!(pca.spe(&normal) < 1e-20);
    }
}
