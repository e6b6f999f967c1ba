use super::{project, AfrConfig, Budget, Norm, Reconstruction};
use crate::error::{Error, Result};
use crate::models::{DetectionSpe, PcaModel, ScalarFunction};
use crate::numerics::{all_finite, norm2, sub};

/// Backtracking halvings tried before declaring a point stationary.
const MAX_HALVINGS: usize = 60;
const AUTO_BISECTIONS: usize = 8;
const AUTO_MAX_DOUBLINGS: usize = 24;

/// Exact PCA reconstruction `x − C̃x`.
pub fn pca_closed_form(pca: &PcaModel, z: &[f64]) -> Reconstruction {
    let obj = DetectionSpe(pca);
    let spe_before = obj.value(z);
    let rec = sub(z, &pca.residual(z));
    let mut r = Reconstruction::build("pca_closed_form", &obj, z, rec, spe_before);
    r.norm = Some(Norm::L2);
    r.converged = true;
    r
}

/// Projected gradient descent on `objective` starting from `z`.
///
/// `target` overrides `cfg.target`; one of them must be present.
pub fn afr_pgd(
    objective: &dyn ScalarFunction,
    z: &[f64],
    cfg: &AfrConfig,
    target: Option<f64>,
) -> Result<Reconstruction> {
    let target = target
        .or(cfg.target)
        .ok_or_else(|| Error::Parameter("AFR needs a success target (control limit)".into()))?;
    validate(cfg, z.len())?;
    if z.len() != objective.dim() {
        return Err(Error::Dimension(format!(
            "sample has {} variables, objective expects {}",
            z.len(),
            objective.dim()
        )));
    }
    match cfg.eta {
        Budget::Fixed(eta) => run(objective, z, cfg, target, eta),
        Budget::Auto if cfg.norm == Norm::L0 => {
            let mut last = None;
            for k in 1..=z.len() {
                let r = run(objective, z, cfg, target, k as f64)?;
                if r.converged {
                    return Ok(r);
                }
                last = Some(r);
            }
            Ok(last.expect("n >= 1"))
        }
        Budget::Auto => auto_eta(objective, z, cfg, target),
    }
}

fn validate(cfg: &AfrConfig, n: usize) -> Result<()> {
    if cfg.max_iters == 0 {
        return Err(Error::Parameter("max_iters must be >= 1".into()));
    }
    if !(cfg.step_size > 0.0) {
        return Err(Error::Parameter("step_size must be > 0".into()));
    }
    if let Budget::Fixed(eta) = cfg.eta {
        if !(eta > 0.0) {
            return Err(Error::Parameter("eta must be > 0".into()));
        }
        if cfg.norm == Norm::L0 && (eta < 1.0 || eta.fract() != 0.0) {
            return Err(Error::Parameter("an l0 budget must be a positive integer".into()));
        }
    }
    if n == 0 {
        return Err(Error::Dimension("empty sample".into()));
    }
    Ok(())
}

/// Doubling from `step_size` until the target is reached, then bisection.
fn auto_eta(objective: &dyn ScalarFunction, z: &[f64], cfg: &AfrConfig, target: f64) -> Result<Reconstruction> {
    let first = run(objective, z, cfg, target, cfg.step_size)?;
    if first.iterations_used == 0 {
        return Ok(first);
    }
    let (mut lo, mut hi, mut best) = if first.converged {
        (0.0, cfg.step_size, first)
    } else {
        let mut lo = cfg.step_size;
        let mut eta = cfg.step_size;
        let mut last = first;
        let mut found = None;
        for _ in 0..AUTO_MAX_DOUBLINGS {
            eta *= 2.0;
            let r = run(objective, z, cfg, target, eta)?;
            if r.converged {
                found = Some(r);
                break;
            }
            lo = eta;
            last = r;
        }
        match found {
            Some(r) => (lo, eta, r),
            None => return Ok(last),
        }
    };
    for _ in 0..AUTO_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let r = run(objective, z, cfg, target, mid)?;
        if r.converged {
            hi = mid;
            best = r;
        } else {
            lo = mid;
        }
    }
    Ok(best)
}

fn run(objective: &dyn ScalarFunction, z: &[f64], cfg: &AfrConfig, target: f64, eta: f64) -> Result<Reconstruction> {
    let spe_before = objective.value(z);
    if !spe_before.is_finite() {
        return Err(Error::Evaluation("objective at the original sample".into()));
    }
    let mut x = z.to_vec();
    let mut spe = spe_before;
    let mut path = Vec::new();
    if cfg.record_path {
        path.push(x.clone());
    }
    let mut iterations = 0;
    let mut converged = spe <= target;
    if !converged {
        for it in 1..=cfg.max_iters {
            let g = objective.gradient(&x);
            if !all_finite(&g) {
                return Err(Error::NonFiniteGradient { iteration: it });
            }
            let gn = norm2(&g);
            if gn == 0.0 {
                break;
            }
            let mut step = cfg.step_size;
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let cand: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi / gn).collect();
                let cand = project(&cand, z, cfg.norm, eta);
                let v = objective.value(&cand);
                if v < spe {
                    accepted = Some((cand, v));
                    break;
                }
                step *= 0.5;
            }
            let Some((cand, v)) = accepted else { break };
            iterations = it;
            x = cand;
            spe = v;
            if cfg.record_path {
                path.push(x.clone());
            }
            if spe <= target {
                converged = true;
                break;
            }
        }
    }
    let mut r = Reconstruction::build("pgd", objective, z, x, spe_before);
    r.iterations_used = iterations;
    r.converged = converged;
    r.norm = Some(cfg.norm);
    r.eta = Some(eta);
    r.support = (0..z.len()).filter(|&i| r.perturbation[i] != 0.0).collect();
    r.path = path;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{fit_pca, Dataset};
    use crate::numerics::{cosine, norm1, Matrix, Rng};

    struct Quad;
    impl ScalarFunction for Quad {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, z: &[f64]) -> f64 {
            z[0] * z[0] + 4.0 * z[1] * z[1]
        }
        fn gradient(&self, z: &[f64]) -> Vec<f64> {
            vec![2.0 * z[0], 8.0 * z[1]]
        }
        fn describe(&self) -> String {
            "quad".into()
        }
    }

    struct Nan;
    impl ScalarFunction for Nan {
        fn dim(&self) -> usize {
            1
        }
        fn value(&self, z: &[f64]) -> f64 {
            z[0]
        }
        fn gradient(&self, _: &[f64]) -> Vec<f64> {
            vec![f64::NAN]
        }
        fn describe(&self) -> String {
            "nan".into()
        }
    }

    fn pca() -> PcaModel {
        let mut rng = Rng::new(11);
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| {
                let a = rng.normal();
                let b = rng.normal();
                vec![
                    a,
                    b,
                    a + b + 0.1 * rng.normal(),
                    a - 0.1 * rng.normal(),
                    b + 0.1 * rng.normal(),
                ]
            })
            .collect();
        fit_pca(&Dataset::new(Matrix::from_rows(&rows).unwrap()), 2).unwrap()
    }

    #[test]
    fn already_normal_is_untouched() {
        let cfg = AfrConfig::default().with_target(1.0);
        let r = afr_pgd(&Quad, &[0.1, 0.1], &cfg, None).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations_used, 0);
        assert!(r.perturbation.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn pgd_matches_closed_form_on_pca() {
        let pca = pca();
        let mut z = vec![0.5, -0.3, 0.2, 0.1, 0.4];
        z[2] += 4.0;
        let cfg = AfrConfig {
            max_iters: 5000,
            record_path: true,
            ..AfrConfig::default()
        }
        .with_eta(100.0)
        .with_target(1e-12);
        let r = afr_pgd(&DetectionSpe(&pca), &z, &cfg, None).unwrap();
        let exact = pca_closed_form(&pca, &z);
        assert!(r.converged);
        assert!(r.spe_after < 1e-8);
        assert!(norm2(&sub(&r.x_reconstructed, &exact.x_reconstructed)) < 1e-4);
        for w in r.path.windows(2) {
            let step = sub(&w[0], &w[1]);
            let c = cosine(&step, &pca.residual(&w[0])).unwrap();
            assert!(c > 1.0 - 1e-10);
        }
    }

    #[test]
    fn spe_never_increases_and_budget_holds() {
        for norm in [Norm::L1, Norm::L2] {
            let cfg = AfrConfig {
                record_path: true,
                ..AfrConfig::default()
            }
            .with_eta(0.7)
            .with_norm(norm)
            .with_target(0.0);
            let z = [2.0, -1.5];
            let r = afr_pgd(&Quad, &z, &cfg, None).unwrap();
            assert!(r.spe_after <= r.spe_before);
            let vals: Vec<f64> = r.path.iter().map(|p| Quad.value(p)).collect();
            assert!(vals.windows(2).all(|w| w[1] <= w[0]));
            let d = match norm {
                Norm::L1 => norm1(&r.perturbation),
                _ => norm2(&r.perturbation),
            };
            assert!(d <= 0.7 + 1e-9);
        }
    }

    #[test]
    fn auto_eta_reaches_target_with_small_budget() {
        let cfg = AfrConfig::default().with_target(0.5);
        let z = [2.0, 1.0];
        let r = afr_pgd(&Quad, &z, &cfg, None).unwrap();
        assert!(r.converged && r.spe_after <= 0.5);
        let eta = r.eta.unwrap();
        // a noticeably smaller budget cannot reach the target
        let tight = afr_pgd(&Quad, &z, &cfg.clone().with_eta(0.9 * eta), None).unwrap();
        assert!(!tight.converged);
    }

    #[test]
    fn l0_budget_limits_support() {
        let cfg = AfrConfig::default().with_norm(Norm::L0).with_eta(1.0).with_target(0.0);
        let r = afr_pgd(&Quad, &[2.0, 1.0], &cfg, None).unwrap();
        assert!(r.support.len() <= 1);
        let auto = afr_pgd(
            &Quad,
            &[2.0, 1.0],
            &AfrConfig::default().with_norm(Norm::L0).with_target(1.5),
            None,
        )
        .unwrap();
        assert!(auto.converged);
    }

    #[test]
    fn errors() {
        let cfg = AfrConfig::default().with_target(0.0);
        assert!(matches!(
            afr_pgd(&Nan, &[1.0], &cfg, None),
            Err(Error::NonFiniteGradient { iteration: 1 })
        ));
        assert!(afr_pgd(&Quad, &[1.0, 1.0], &AfrConfig::default(), None).is_err());
        assert!(afr_pgd(&Quad, &[1.0, 1.0], &cfg.clone().with_eta(-1.0), None).is_err());
        assert!(afr_pgd(&Quad, &[1.0], &cfg, None).is_err());
    }
}
