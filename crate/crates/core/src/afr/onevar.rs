use rayon::prelude::*;

use super::{Norm, Reconstruction};
use crate::error::{Error, Result};
use crate::models::{DetectionSpe, PcaModel, ScalarFunction};

/// Search interval half-width for the nonlinear one-variable magnitude.
pub const LINE_SEARCH_BOUND: f64 = 10.0;
pub const LINE_SEARCH_TOL: f64 = 1e-8;
/// Variables whose residual self-projection is below this are unreconstructable.
pub const SINGULAR_TOL: f64 = 1e-12;
/// Coarse grid used to bracket the best basin before golden-section refinement.
const BRACKET_POINTS: usize = 41;

fn single(
    method: &str,
    objective: &dyn ScalarFunction,
    z: &[f64],
    i: usize,
    f: f64,
    spe_before: f64,
) -> Reconstruction {
    let mut x = z.to_vec();
    x[i] -= f;
    let mut r = Reconstruction::build(method, objective, z, x, spe_before);
    // keep the perturbation exactly one-sparse
    for (j, p) in r.perturbation.iter_mut().enumerate() {
        if j != i {
            *p = 0.0;
        }
    }
    r.direction = Some(i);
    // the realized magnitude, so that `perturbation[i] == magnitude` exactly
    r.magnitude = Some(r.perturbation[i]);
    r.support = if f != 0.0 { vec![i] } else { Vec::new() };
    r.norm = Some(Norm::L0);
    r.eta = Some(1.0);
    r.converged = true;
    r
}

/// `f_i = (C̃z)_i / C̃_ii`, the exact minimizer of `SPE(z − f eᵢ)`.
pub fn onevar_closed_form(pca: &PcaModel, z: &[f64], i: usize) -> Result<Reconstruction> {
    let n = z.len();
    if i >= n {
        return Err(Error::Parameter(format!("variable {i} out of range (n = {n})")));
    }
    let c = pca.residual_projector();
    let cii = c.get(i, i);
    if cii < SINGULAR_TOL {
        return Err(Error::SingularDirection {
            variable: i,
            value: cii,
        });
    }
    let cz_i: f64 = (0..n).map(|j| c.get(i, j) * z[j]).sum();
    let obj = DetectionSpe(pca);
    let before = obj.value(z);
    Ok(single("onevar_closed_form", &obj, z, i, cz_i / cii, before))
}

pub fn onevar_closed_form_all(pca: &PcaModel, z: &[f64]) -> Result<Vec<Reconstruction>> {
    (0..z.len())
        .into_par_iter()
        .map(|i| onevar_closed_form(pca, z, i))
        .collect()
}

/// Minimizes `objective(z − f eᵢ)` over `f ∈ [−B, B]` by golden-section
/// search inside the best cell of a coarse grid; `f = 0` is kept if no
/// candidate improves on it.
pub fn onevar_line_search(objective: &dyn ScalarFunction, z: &[f64], i: usize) -> Result<Reconstruction> {
    let n = z.len();
    if i >= n {
        return Err(Error::Parameter(format!("variable {i} out of range (n = {n})")));
    }
    let mut x = z.to_vec();
    let mut phi = |f: f64| {
        x[i] = z[i] - f;
        objective.value(&x)
    };
    let before = phi(0.0);
    if !before.is_finite() {
        return Err(Error::Evaluation("objective at the original sample".into()));
    }
    let b = LINE_SEARCH_BOUND;
    let h = 2.0 * b / (BRACKET_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..BRACKET_POINTS).map(|k| -b + k as f64 * h).collect();
    let vals: Vec<f64> = grid.iter().map(|&f| phi(f)).collect();
    let k = (0..BRACKET_POINTS).fold(0, |best, k| if vals[k] < vals[best] { k } else { best });
    let (mut lo, mut hi) = (grid[k.saturating_sub(1)], grid[(k + 1).min(BRACKET_POINTS - 1)]);

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (phi(c), phi(d));
    while hi - lo > LINE_SEARCH_TOL {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = phi(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = phi(d);
        }
    }
    let f = 0.5 * (lo + hi);
    let val = phi(f);
    let f = if val < before { f } else { 0.0 };
    Ok(single("onevar_line_search", objective, z, i, f, before))
}

pub fn onevar_line_search_all(objective: &dyn ScalarFunction, z: &[f64]) -> Result<Vec<Reconstruction>> {
    (0..z.len())
        .into_par_iter()
        .map(|i| onevar_line_search(objective, z, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{fit_pca, Dataset, Detector};
    use crate::numerics::{Matrix, Rng};

    fn pca(seed: u64) -> PcaModel {
        let mut rng = Rng::new(seed);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                let a = rng.normal();
                vec![a, 2.0 * a + 0.3 * rng.normal(), rng.normal(), -a + 0.2 * rng.normal()]
            })
            .collect();
        fit_pca(&Dataset::new(Matrix::from_rows(&rows).unwrap()), 2).unwrap()
    }

    #[test]
    fn closed_form_is_one_sparse_and_optimal() {
        let pca = pca(1);
        let z = [1.0, -2.0, 0.5, 3.0];
        for r in onevar_closed_form_all(&pca, &z).unwrap() {
            let i = r.direction.unwrap();
            let f = r.magnitude.unwrap();
            assert!(r
                .perturbation
                .iter()
                .enumerate()
                .all(|(j, &p)| if j == i { p == f } else { p == 0.0 }));
            for eps in [1e-4, -1e-4] {
                let mut x = z.to_vec();
                x[i] -= f + eps;
                assert!(pca.spe(&x) >= r.spe_after);
            }
            let gain = r.spe_before - r.spe_after;
            let cz = pca.residual(&z)[i];
            let rbc = cz * cz / pca.residual_projector().get(i, i);
            assert!((gain - rbc).abs() < 1e-8);
        }
    }

    #[test]
    fn normal_sample_needs_no_magnitude() {
        let pca = pca(2);
        let z = pca.project(&[1.0, 0.5, -0.3, 2.0]);
        for r in onevar_closed_form_all(&pca, &z).unwrap() {
            assert!(r.magnitude.unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn line_search_agrees_with_closed_form_on_pca() {
        let pca = pca(3);
        let z = [0.3, 2.5, -1.0, 0.2];
        let a = onevar_closed_form_all(&pca, &z).unwrap();
        let b = onevar_line_search_all(&DetectionSpe(&pca), &z).unwrap();
        for (x, y) in a.iter().zip(&b) {
            let (exact, found) = (x.magnitude.unwrap(), y.magnitude.unwrap());
            if exact.abs() < LINE_SEARCH_BOUND {
                assert!((exact - found).abs() < 1e-6, "{exact} vs {found}");
            } else {
                // the search interval is bounded; the optimum clips to its edge
                assert!((found.abs() - LINE_SEARCH_BOUND).abs() < 1e-6 && found.signum() == exact.signum());
            }
        }
    }

    #[test]
    fn singular_direction_and_range_errors() {
        // copies span a null direction; the third variable sits entirely in the subspace
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, i as f64, (i % 3) as f64]).collect();
        let pca = fit_pca(&Dataset::new(Matrix::from_rows(&rows).unwrap()), 2).unwrap();
        assert!(pca.residual_projector().get(2, 2) < SINGULAR_TOL);
        assert!(matches!(
            onevar_closed_form(&pca, &[1.0, 0.0, 0.0], 2),
            Err(Error::SingularDirection { variable: 2, .. })
        ));
        assert!(onevar_closed_form(&pca, &[1.0, 0.0, 0.0], 3).is_err());
    }
}
