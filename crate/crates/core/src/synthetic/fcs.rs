use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::afr::{Norm, Reconstruction};
use crate::error::{Error, Result};
use crate::models::{Dataset, ScalarFunction};
use crate::numerics::{all_finite, norm2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FcsMethod {
    Saliency,
    Ig,
    Abigx,
}

/// Closed-form smearing degree on the toy problem with the optimal linear model.
pub fn fcs_theoretical(method: FcsMethod, n: usize, f: f64, sigma: f64) -> Result<f64> {
    if n == 0 || !(f > 0.0) || !(sigma > 0.0) {
        return Err(Error::Parameter("need N >= 1, f > 0, sigma > 0".into()));
    }
    let grad = (n as f64 - 1.0) / n as f64;
    match method {
        FcsMethod::Saliency => Ok(grad),
        FcsMethod::Ig => Ok(grad * sigma * std::f64::consts::SQRT_2 / (f * std::f64::consts::PI.sqrt())),
        FcsMethod::Abigx => Err(Error::Unsupported(
            "no closed form is available for the reconstruction-baselined smearing degree".into(),
        )),
    }
}

/// `1/N² + (N² + N − 1)/(2N − 1)²`
pub fn w3(n: usize) -> f64 {
    let n = n as f64;
    1.0 / (n * n) + (n * n + n - 1.0) / ((2.0 * n - 1.0) * (2.0 * n - 1.0))
}

/// `1/N² − (N + 2)/(2N − 1)²`
pub fn w4(n: usize) -> f64 {
    let n = n as f64;
    1.0 / (n * n) - (n + 2.0) / ((2.0 * n - 1.0) * (2.0 * n - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FcsResult {
    pub value: f64,
    pub samples: usize,
    /// Samples dropped because their root contribution was exactly zero.
    pub skipped: usize,
}

/// Mean over class-`class` samples of `Σ_{i ≤ N, i ≠ root} |cᵢ| / |c_root|`,
/// with root variable `class − 1` and `n_faults = N`.
pub fn fcs_empirical<F>(attribute: F, data: &Dataset, class: usize, n_faults: usize) -> Result<FcsResult>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    if class == 0 || class > n_faults || n_faults > data.n_vars() {
        return Err(Error::Parameter(format!(
            "class {class} is not one of the {n_faults} fault types"
        )));
    }
    let root = class - 1;
    let rows = data.rows_with_label(class);
    if rows.is_empty() {
        return Err(Error::Parameter(format!("no samples of class {class}")));
    }
    let ratios: Vec<Option<f64>> = rows
        .par_iter()
        .map(|&r| {
            let c = attribute(data.sample(r))?;
            let denom = c[root].abs();
            if denom == 0.0 {
                return Ok(None);
            }
            let other: f64 = (0..n_faults).filter(|&i| i != root).map(|i| c[i].abs()).sum();
            Ok(Some(other / denom))
        })
        .collect::<Result<_>>()?;
    let kept: Vec<f64> = ratios.iter().flatten().copied().collect();
    if kept.is_empty() {
        return Err(Error::UndefinedMetric("every root contribution was zero".into()));
    }
    Ok(FcsResult {
        value: kept.iter().sum::<f64>() / kept.len() as f64,
        samples: kept.len(),
        skipped: ratios.len() - kept.len(),
    })
}

/// A single steepest-descent step with exact line search, which is exact for
/// quadratic objectives such as the classification SPE of a linear model.
pub fn one_step_afr(objective: &dyn ScalarFunction, z: &[f64], target: Option<f64>) -> Result<Reconstruction> {
    let before = objective.value(z);
    let g = objective.gradient(z);
    if !all_finite(&g) {
        return Err(Error::NonFiniteGradient { iteration: 1 });
    }
    let gn = norm2(&g);
    let mut x = z.to_vec();
    if gn > 0.0 {
        let d: Vec<f64> = g.iter().map(|v| v / gn).collect();
        let at = |t: f64| -> Vec<f64> { z.iter().zip(&d).map(|(a, b)| a - t * b).collect() };
        let h = 1.0;
        let (p0, pp, pm) = (before, objective.value(&at(h)), objective.value(&at(-h)));
        let curvature = (pp + pm - 2.0 * p0) / (h * h);
        let slope = (pp - pm) / (2.0 * h);
        if curvature > 0.0 {
            let cand = at(-slope / curvature);
            if objective.value(&cand) < before {
                x = cand;
            }
        }
    }
    let mut r = Reconstruction::build("one_step", objective, z, x, before);
    r.iterations_used = 1;
    r.norm = Some(Norm::L2);
    r.converged = target.map_or(true, |t| r.spe_after <= t);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ClassLogit, Classifier};
    use crate::synthetic::{fisher_closed_form, gen_toy, ToySpec};

    #[test]
    fn theoretical_values() {
        assert_eq!(fcs_theoretical(FcsMethod::Saliency, 2, 1.0, 0.1).unwrap(), 0.5);
        assert!((fcs_theoretical(FcsMethod::Saliency, 5, 1.0, 0.1).unwrap() - 0.8).abs() < 1e-15);
        let ig = fcs_theoretical(FcsMethod::Ig, 2, 1.0, 1.0).unwrap();
        assert!((ig - 0.5 * (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert!((ig - 0.399).abs() < 1e-3);
        assert!(matches!(
            fcs_theoretical(FcsMethod::Abigx, 2, 1.0, 0.1),
            Err(Error::Unsupported(_))
        ));
        // IG below gradient whenever σ√2 < f√π
        for (f, s) in [(1.0, 0.1), (1.0, 1.0), (2.0, 1.5)] {
            let n = 4;
            assert!(
                fcs_theoretical(FcsMethod::Ig, n, f, s).unwrap()
                    < fcs_theoretical(FcsMethod::Saliency, n, f, s).unwrap()
            );
        }
    }

    #[test]
    fn saliency_smearing_on_closed_form_model() {
        for n in [2, 5] {
            let spec = ToySpec {
                m: 10,
                n,
                f: 1.0,
                sigma: 0.1,
                samples_per_class: 50,
                seed: 1,
            };
            let data = gen_toy(&spec).unwrap();
            let model = fisher_closed_form(n, 10).unwrap();
            for y in 1..=n {
                let r = fcs_empirical(|x| Ok(ClassLogit { clf: &model, class: y }.gradient(x)), &data, y, n).unwrap();
                assert!((r.value - (n as f64 - 1.0) / n as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn w_symbols() {
        assert!((w3(2) - (0.25 + 5.0 / 9.0)).abs() < 1e-15);
        assert!((w4(2) - (0.25 - 4.0 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn one_step_is_exact_on_quadratics() {
        let model = fisher_closed_form(2, 4).unwrap();
        struct Spe<'a>(&'a dyn Classifier);
        impl ScalarFunction for Spe<'_> {
            fn dim(&self) -> usize {
                4
            }
            fn value(&self, z: &[f64]) -> f64 {
                self.0.logits(z).iter().map(|v| v * v).sum()
            }
            fn gradient(&self, z: &[f64]) -> Vec<f64> {
                let l: Vec<f64> = self.0.logits(z).iter().map(|v| 2.0 * v).collect();
                self.0.logits_vjp(z, &l)
            }
            fn describe(&self) -> String {
                "spe".into()
            }
        }
        let obj = Spe(&model);
        let z = [1.0, 0.2, 0.3, -0.1];
        let r = one_step_afr(&obj, &z, None).unwrap();
        // one-dimensional optimality: gradient at the new point is orthogonal to the step
        let g = obj.gradient(&r.x_reconstructed);
        let d = &r.perturbation;
        let dot: f64 = g.iter().zip(d).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-10);
        assert!(r.spe_after < r.spe_before);
    }
}
