//! Scalar output functionals of a model, differentiable in the standardized input.

use serde::{Deserialize, Serialize};

use super::{softmax, Classifier, Detector};
use crate::error::{Error, Result};
use crate::numerics::unit;

/// A differentiable scalar map of a standardized sample.
pub trait ScalarFunction: Sync {
    fn dim(&self) -> usize;
    fn value(&self, z: &[f64]) -> f64;
    fn gradient(&self, z: &[f64]) -> Vec<f64>;
    fn describe(&self) -> String;
}

/// Selector of the scalar output to explain or minimize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Functional {
    DetectionSpe,
    ClassificationSpe { barycenter: Vec<f64> },
    Logit { class: usize },
    Confidence { class: usize },
    NormalityDeficit,
}

#[derive(Clone, Copy)]
pub enum ModelRef<'a> {
    Detector(&'a dyn Detector),
    Classifier(&'a dyn Classifier),
}

impl<'a> ModelRef<'a> {
    pub fn dim(&self) -> usize {
        match self {
            ModelRef::Detector(d) => d.dim(),
            ModelRef::Classifier(c) => c.dim(),
        }
    }

    pub fn standardizer(&self) -> &'a super::Standardizer {
        match *self {
            ModelRef::Detector(d) => d.standardizer(),
            ModelRef::Classifier(c) => c.standardizer(),
        }
    }
}

pub struct DetectionSpe<'a>(pub &'a dyn Detector);

impl ScalarFunction for DetectionSpe<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, z: &[f64]) -> f64 {
        self.0.spe(z)
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        self.0.spe_gradient(z)
    }
    fn describe(&self) -> String {
        format!("spe({})", self.0.kind())
    }
}

/// `‖h(z) − b‖²` in representation space.
pub struct ClassificationSpe<'a> {
    pub clf: &'a dyn Classifier,
    pub barycenter: Vec<f64>,
}

impl ScalarFunction for ClassificationSpe<'_> {
    fn dim(&self) -> usize {
        self.clf.dim()
    }
    fn value(&self, z: &[f64]) -> f64 {
        let h = self.clf.representation(z);
        h.iter().zip(&self.barycenter).map(|(a, b)| (a - b) * (a - b)).sum()
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let h = self.clf.representation(z);
        let cot: Vec<f64> = h.iter().zip(&self.barycenter).map(|(a, b)| 2.0 * (a - b)).collect();
        self.clf.representation_vjp(z, &cot)
    }
    fn describe(&self) -> String {
        "spe_fc".into()
    }
}

pub struct ClassLogit<'a> {
    pub clf: &'a dyn Classifier,
    pub class: usize,
}

impl ScalarFunction for ClassLogit<'_> {
    fn dim(&self) -> usize {
        self.clf.dim()
    }
    fn value(&self, z: &[f64]) -> f64 {
        self.clf.logits(z)[self.class]
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        self.clf.logits_vjp(z, &unit(self.clf.n_classes(), self.class))
    }
    fn describe(&self) -> String {
        format!("logit[{}]", self.class)
    }
}

/// Softmax probability of one class.
pub struct ClassConfidence<'a> {
    pub clf: &'a dyn Classifier,
    pub class: usize,
}

impl ClassConfidence<'_> {
    /// `∂p_c/∂logits = p_c (e_c − p)`
    fn logit_cotangent(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let p = softmax(&self.clf.logits(z));
        let pc = p[self.class];
        let cot = p
            .iter()
            .enumerate()
            .map(|(k, &pk)| pc * (f64::from(u8::from(k == self.class)) - pk))
            .collect();
        (pc, cot)
    }
}

impl ScalarFunction for ClassConfidence<'_> {
    fn dim(&self) -> usize {
        self.clf.dim()
    }
    fn value(&self, z: &[f64]) -> f64 {
        self.clf.probabilities(z)[self.class]
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let (_, cot) = self.logit_cotangent(z);
        self.clf.logits_vjp(z, &cot)
    }
    fn describe(&self) -> String {
        format!("softmax[{}]", self.class)
    }
}

/// `1 − p₀`: how far the classifier is from calling the sample normal.
pub struct NormalityDeficit<'a> {
    pub clf: &'a dyn Classifier,
}

impl ScalarFunction for NormalityDeficit<'_> {
    fn dim(&self) -> usize {
        self.clf.dim()
    }
    fn value(&self, z: &[f64]) -> f64 {
        1.0 - self.clf.probabilities(z)[0]
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let conf = ClassConfidence {
            clf: self.clf,
            class: 0,
        };
        conf.gradient(z).into_iter().map(|g| -g).collect()
    }
    fn describe(&self) -> String {
        "1-softmax[0]".into()
    }
}

/// Binds a functional selector to a model.
pub fn bind<'a>(model: ModelRef<'a>, f: &Functional) -> Result<Box<dyn ScalarFunction + 'a>> {
    match (model, f) {
        (ModelRef::Detector(d), Functional::DetectionSpe) => Ok(Box::new(DetectionSpe(d))),
        (ModelRef::Classifier(clf), Functional::ClassificationSpe { barycenter }) => {
            let probe = clf.representation(&vec![0.0; clf.dim()]);
            if probe.len() != barycenter.len() {
                return Err(Error::Dimension(format!(
                    "barycenter has {} entries, representation has {}",
                    barycenter.len(),
                    probe.len()
                )));
            }
            Ok(Box::new(ClassificationSpe {
                clf,
                barycenter: barycenter.clone(),
            }))
        }
        (ModelRef::Classifier(clf), Functional::Logit { class }) => {
            check_class(clf, *class)?;
            Ok(Box::new(ClassLogit { clf, class: *class }))
        }
        (ModelRef::Classifier(clf), Functional::Confidence { class }) => {
            check_class(clf, *class)?;
            Ok(Box::new(ClassConfidence { clf, class: *class }))
        }
        (ModelRef::Classifier(clf), Functional::NormalityDeficit) => Ok(Box::new(NormalityDeficit { clf })),
        (ModelRef::Detector(d), other) => Err(Error::Parameter(format!(
            "functional {other:?} is not defined for a {} detector",
            d.kind()
        ))),
        (ModelRef::Classifier(c), Functional::DetectionSpe) => Err(Error::Parameter(format!(
            "detection SPE is not defined for a {} classifier",
            c.kind()
        ))),
    }
}

fn check_class(clf: &dyn Classifier, class: usize) -> Result<()> {
    if class >= clf.n_classes() {
        return Err(Error::Parameter(format!(
            "class {class} out of range (k+1 = {})",
            clf.n_classes()
        )));
    }
    Ok(())
}

/// Gradient of the selected functional at standardized `z`.
pub fn input_gradient(model: ModelRef<'_>, f: &Functional, z: &[f64]) -> Result<Vec<f64>> {
    if z.len() != model.dim() {
        return Err(Error::Dimension(format!(
            "sample has {} variables, model expects {}",
            z.len(),
            model.dim()
        )));
    }
    Ok(bind(model, f)?.gradient(z))
}
