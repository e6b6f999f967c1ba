use abigx::afr::{
    afr_pgd, onevar_closed_form_all, onevar_line_search_all, pca_closed_form, AfrConfig, Budget, Reconstruction,
};
use abigx::error::Error;
use abigx::explainers::{abigx, abigx_onevar, cp, integrated_gradients, rbc, saliency, Attribution, Method};
use abigx::indices::{ClassificationIndex, DetectionIndex};
use abigx::models::{
    ClassConfidence, ClassLogit, ClassificationSpe, Classifier, DetectionSpe, Model, NormalityDeficit, ScalarFunction,
};
use abigx::numerics::Matrix;
use anyhow::{bail, Result};

use crate::args::{AfrArgs, AfrObjective, AfrSolver};

/// Default success target of the `confidence` objective: `p(normal) ≥ 0.5`.
const CONFIDENCE_TARGET: f64 = 0.5;

pub fn parse_budget(eta: &str) -> Result<Budget> {
    if eta.eq_ignore_ascii_case("auto") {
        return Ok(Budget::Auto);
    }
    match eta.parse::<f64>() {
        Ok(v) => Ok(Budget::Fixed(v)),
        Err(_) => bail!(Error::Parameter(format!(
            "--eta must be a number or 'auto', got '{eta}'"
        ))),
    }
}

/// A loaded model plus everything the explainers need besides the sample.
pub struct Explainer<'a> {
    pub model: &'a Model,
    pub steps: usize,
    pub cfg: AfrConfig,
    pub solver: AfrSolver,
    pub objective: AfrObjective,
    /// AFR success target; `None` when no calibration data was available.
    pub target: Option<f64>,
    pub barycenter: Option<Vec<f64>>,
    /// Standardized mean of the normal samples: IG baseline and consistency reference.
    pub normal_mean: Vec<f64>,
}

impl<'a> Explainer<'a> {
    pub fn new(model: &'a Model, args: &AfrArgs, normal: &Matrix) -> Result<Self> {
        let cfg = AfrConfig {
            norm: args.norm,
            eta: parse_budget(&args.eta)?,
            max_iters: args.max_iters,
            step_size: args.step_size,
            target: None,
            record_path: false,
        };
        let s = model.standardizer();
        let n = s.dim();
        if normal.rows() > 0 && normal.cols() != n {
            bail!(Error::Dimension(format!(
                "calibration data has {} variables, model expects {n}",
                normal.cols()
            )));
        }
        let mut normal_mean = vec![0.0; n];
        if normal.rows() > 0 {
            for row in normal.iter_rows() {
                for (m, v) in normal_mean.iter_mut().zip(s.transform(row)) {
                    *m += v;
                }
            }
            normal_mean.iter_mut().for_each(|m| *m /= normal.rows() as f64);
        }
        let have_normals = normal.rows() > 0;
        let (mut target, mut barycenter) = (args.target, None);
        match model {
            Model::Pca(_) | Model::Ae(_) => {
                if args.afr_objective == AfrObjective::Confidence {
                    bail!(Error::Unsupported("the confidence objective needs a classifier".into()));
                }
                if target.is_none() && have_normals {
                    let det = model.as_detector().expect("detector model");
                    target = Some(DetectionIndex::calibrated(det, normal, args.quantile)?.limit()?);
                }
            }
            Model::Mlp(clf) => {
                if have_normals {
                    let index = ClassificationIndex::fit(clf, normal, args.quantile)?;
                    if args.afr_objective == AfrObjective::Spe {
                        target = target.or(Some(index.normality_limit));
                    }
                    barycenter = Some(index.barycenter);
                }
                if args.afr_objective == AfrObjective::Confidence {
                    target = target.or(Some(CONFIDENCE_TARGET));
                }
            }
        }
        Ok(Self {
            model,
            steps: args.steps,
            cfg,
            solver: args.afr,
            objective: args.afr_objective,
            target,
            barycenter,
            normal_mean,
        })
    }

    pub fn classifier(&self) -> Option<&'a dyn Classifier> {
        self.model.as_classifier()
    }

    /// Functional being explained: detection SPE, or the logit of `class`.
    pub fn explained(&self, class: usize) -> Result<Box<dyn ScalarFunction + 'a>> {
        Ok(match (self.model.as_detector(), self.model.as_classifier()) {
            (Some(d), _) => Box::new(DetectionSpe(d)),
            (_, Some(c)) => {
                if class >= c.n_classes() {
                    bail!(Error::Parameter(format!(
                        "class {class} out of range ({} classes)",
                        c.n_classes()
                    )));
                }
                Box::new(ClassLogit { clf: c, class })
            }
            _ => unreachable!("every model is a detector or a classifier"),
        })
    }

    /// Output tracked by the consistency curves, with its normalization.
    pub fn consistency_functional(
        &self,
        class: usize,
    ) -> (Box<dyn ScalarFunction + 'a>, abigx::metrics::Normalization) {
        use abigx::metrics::Normalization;
        match (self.model.as_detector(), self.model.as_classifier()) {
            (Some(d), _) => (Box::new(DetectionSpe(d)), Normalization::Endpoints),
            (_, Some(c)) => (Box::new(ClassConfidence { clf: c, class }), Normalization::None),
            _ => unreachable!("every model is a detector or a classifier"),
        }
    }

    fn afr_objective(&self) -> Result<Box<dyn ScalarFunction + 'a>> {
        if let Some(d) = self.model.as_detector() {
            return Ok(Box::new(DetectionSpe(d)));
        }
        let c = self.classifier().expect("classifier model");
        Ok(match self.objective {
            AfrObjective::Confidence => Box::new(NormalityDeficit { clf: c }),
            AfrObjective::Spe => match &self.barycenter {
                Some(b) => Box::new(ClassificationSpe {
                    clf: c,
                    barycenter: b.clone(),
                }),
                None => bail!(no_calibration()),
            },
        })
    }

    fn target(&self) -> Result<f64> {
        self.target.ok_or_else(|| no_calibration().into())
    }

    fn reconstruct(&self, z: &[f64]) -> Result<Reconstruction> {
        match (self.model, self.solver) {
            (Model::Pca(p), AfrSolver::Auto | AfrSolver::Exact) => Ok(pca_closed_form(p, z)),
            (_, AfrSolver::Exact) => bail!(Error::Unsupported(format!(
                "no closed-form reconstruction for {} models; use --afr pgd",
                self.model.kind()
            ))),
            _ => Ok(afr_pgd(
                self.afr_objective()?.as_ref(),
                z,
                &self.cfg,
                Some(self.target()?),
            )?),
        }
    }

    fn reconstruct_onevar(&self, z: &[f64]) -> Result<Vec<Reconstruction>> {
        match (self.model, self.solver) {
            (Model::Pca(p), AfrSolver::Auto | AfrSolver::Exact) => Ok(onevar_closed_form_all(p, z)?),
            (_, AfrSolver::Exact) => bail!(Error::Unsupported(format!(
                "no closed-form one-variable reconstruction for {} models; use --afr pgd",
                self.model.kind()
            ))),
            _ => Ok(onevar_line_search_all(self.afr_objective()?.as_ref(), z)?),
        }
    }

    /// Attribution of `method` for standardized sample `z`; `class` selects
    /// the explained logit on classifiers.
    pub fn explain(&self, method: Method, z: &[f64], class: usize) -> Result<(Attribution, Option<Reconstruction>)> {
        let f = self.explained(class)?;
        Ok(match method {
            Method::Cp => match self.model.as_detector() {
                Some(d) => (cp(d, z), None),
                None => bail!(incompatible(method, self.model)),
            },
            Method::Rbc => match self.model {
                Model::Pca(p) => (rbc(p, z)?, None),
                _ => bail!(incompatible(method, self.model)),
            },
            Method::Saliency => (saliency(f.as_ref(), z), None),
            Method::Ig => (
                integrated_gradients(f.as_ref(), z, &self.normal_mean, self.steps)?,
                None,
            ),
            Method::Abigx => {
                let rec = self.reconstruct(z)?;
                (abigx(f.as_ref(), &rec, self.steps)?, Some(rec))
            }
            Method::AbigxOneVar => {
                let recs = self.reconstruct_onevar(z)?;
                (abigx_onevar(f.as_ref(), z, &recs, self.steps)?, None)
            }
            Method::External => bail!(Error::Unsupported("external attributions cannot be computed".into())),
        })
    }
}

fn no_calibration() -> Error {
    Error::Parameter("no normal samples to calibrate the AFR target; pass --target or --calibration".into())
}

fn incompatible(method: Method, model: &Model) -> Error {
    let needs = match method {
        Method::Cp => "a detector model (pca or ae)",
        _ => "a pca model",
    };
    Error::Unsupported(format!("method '{method}' needs {needs}, got a {} model", model.kind()))
}
