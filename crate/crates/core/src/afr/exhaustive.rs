use super::{Norm, Reconstruction};
use crate::error::{Error, Result};
use crate::models::{DetectionSpe, PcaModel, ScalarFunction};
use crate::numerics::{cholesky_solve, dot};

pub const MAX_EXHAUSTIVE_ETA: usize = 3;
pub const MAX_EXHAUSTIVE_VARS: usize = 30;
const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct ExhaustiveResult {
    pub reconstruction: Reconstruction,
    /// Subsets whose `C̃_SS` was numerically singular.
    pub skipped: Vec<Vec<usize>>,
    pub subsets_evaluated: usize,
}

/// Globally optimal PCA reconstruction supported on at most `eta` variables.
///
/// For a subset `S`, the optimal magnitudes are `f_S = (C̃_SS)⁻¹ (C̃z)_S` and
/// the SPE drops by `(C̃z)_Sᵀ f_S`; every subset of size ≤ `eta` is tried.
pub fn l0_exhaustive(pca: &PcaModel, z: &[f64], eta: usize) -> Result<ExhaustiveResult> {
    let n = z.len();
    if n != pca.loading.rows() {
        return Err(Error::Dimension(format!(
            "sample has {n} variables, model expects {}",
            pca.loading.rows()
        )));
    }
    if eta == 0 || eta > MAX_EXHAUSTIVE_ETA {
        return Err(Error::Parameter(format!(
            "exhaustive l0 needs 1 <= eta <= {MAX_EXHAUSTIVE_ETA}"
        )));
    }
    if n > MAX_EXHAUSTIVE_VARS {
        return Err(Error::Parameter(format!(
            "exhaustive l0 supports at most {MAX_EXHAUSTIVE_VARS} variables"
        )));
    }
    let c = pca.residual_projector();
    let cz = pca.residual(z);
    let mut best: (f64, Vec<usize>, Vec<f64>) = (0.0, Vec::new(), Vec::new());
    let mut skipped = Vec::new();
    let mut evaluated = 0;
    let mut visit = |s: &[usize]| {
        evaluated += 1;
        let a = c.principal_submatrix(s);
        let b: Vec<f64> = s.iter().map(|&i| cz[i]).collect();
        match cholesky_solve(&a, &b, PIVOT_TOL) {
            Some(f) => {
                let gain = dot(&b, &f);
                if gain > best.0 {
                    best = (gain, s.to_vec(), f);
                }
            }
            None => skipped.push(s.to_vec()),
        }
    };
    for size in 1..=eta.min(n) {
        for_each_subset(n, size, &mut visit);
    }
    let (_, support, f) = best;
    let mut x = z.to_vec();
    for (&i, &fi) in support.iter().zip(&f) {
        x[i] -= fi;
    }
    let obj = DetectionSpe(pca);
    let mut r = Reconstruction::build("l0_exhaustive", &obj, z, x, obj.value(z));
    for (j, p) in r.perturbation.iter_mut().enumerate() {
        if !support.contains(&j) {
            *p = 0.0;
        }
    }
    if support.len() == 1 {
        r.direction = Some(support[0]);
        r.magnitude = Some(f[0]);
    }
    r.support = support;
    r.norm = Some(Norm::L0);
    r.eta = Some(eta as f64);
    r.converged = true;
    Ok(ExhaustiveResult {
        reconstruction: r,
        skipped,
        subsets_evaluated: evaluated,
    })
}

/// Lexicographic k-subsets of `0..n`.
fn for_each_subset(n: usize, k: usize, visit: &mut impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::afr::onevar_closed_form_all;
    use crate::models::{fit_pca, Dataset, Detector};
    use crate::numerics::{Matrix, Rng};

    #[test]
    fn subset_enumeration_counts() {
        let mut count = 0;
        for_each_subset(6, 3, &mut |_| count += 1);
        assert_eq!(count, 20);
        let mut seen = Vec::new();
        for_each_subset(3, 2, &mut |s| seen.push(s.to_vec()));
        assert_eq!(seen, vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
    }

    fn pca3() -> PcaModel {
        let mut rng = Rng::new(5);
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|_| {
                let a = rng.normal();
                vec![a, a + 0.5 * rng.normal(), rng.normal()]
            })
            .collect();
        fit_pca(&Dataset::new(Matrix::from_rows(&rows).unwrap()), 1).unwrap()
    }

    #[test]
    fn full_budget_reaches_zero_spe() {
        let pca = pca3();
        let z = [1.0, -2.0, 3.0];
        let r = l0_exhaustive(&pca, &z, 3).unwrap();
        assert!(r.reconstruction.spe_after < 1e-10);
        // C̃ has rank 2, so the full 3-subset is singular and skipped
        assert!(r.skipped.contains(&vec![0, 1, 2]));
    }

    #[test]
    fn eta_one_matches_best_single_variable() {
        let pca = pca3();
        let z = [0.4, 2.0, -1.0];
        let ex = l0_exhaustive(&pca, &z, 1).unwrap().reconstruction;
        let all = onevar_closed_form_all(&pca, &z).unwrap();
        let best = all.iter().min_by(|a, b| a.spe_after.total_cmp(&b.spe_after)).unwrap();
        assert_eq!(ex.support, vec![best.direction.unwrap()]);
        assert!((ex.spe_after - pca.spe(&best.x_reconstructed)).abs() < 1e-12);
    }

    #[test]
    fn bounds_are_enforced() {
        let pca = pca3();
        assert!(l0_exhaustive(&pca, &[0.0; 3], 0).is_err());
        assert!(l0_exhaustive(&pca, &[0.0; 3], 4).is_err());
        assert!(l0_exhaustive(&pca, &[0.0; 2], 1).is_err());
    }
}
