//! Correctness (agreement with known root causes) and consistency (agreement
//! with model behavior under variable insertion/deletion) of attributions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explainers::Attribution;
use crate::models::ScalarFunction;

fn check_roots(n: usize, roots: &BTreeSet<usize>) -> Result<()> {
    if roots.is_empty() {
        return Err(Error::UndefinedMetric("no root-cause variables given".into()));
    }
    if let Some(&r) = roots.iter().find(|&&r| r >= n) {
        return Err(Error::Parameter(format!("root variable {r} out of range (n = {n})")));
    }
    if roots.len() == n {
        return Err(Error::UndefinedMetric(
            "every variable is a root; AUC has no negatives".into(),
        ));
    }
    Ok(())
}

/// ROC AUC of `|contributions|` as scores for the root indicator, with tied
/// scores sharing their average rank.
pub fn correctness_auc(attr: &Attribution, roots: &BTreeSet<usize>) -> Result<f64> {
    let n = attr.contributions.len();
    check_roots(n, roots)?;
    let s = attr.magnitudes();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && s[order[j + 1]] == s[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    let p = roots.len() as f64;
    let q = (n - roots.len()) as f64;
    let rank_sum: f64 = roots.iter().map(|&r| ranks[r]).sum();
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectnessSum {
    pub value: f64,
    /// Set when every contribution is zero; `value` is then 0.
    pub zero_attribution: bool,
}

/// Share of ℓ1 attribution mass on the root variables.
pub fn correctness_sum(attr: &Attribution, roots: &BTreeSet<usize>) -> Result<CorrectnessSum> {
    let n = attr.contributions.len();
    if roots.is_empty() {
        return Err(Error::UndefinedMetric("no root-cause variables given".into()));
    }
    if let Some(&r) = roots.iter().find(|&&r| r >= n) {
        return Err(Error::Parameter(format!("root variable {r} out of range (n = {n})")));
    }
    let m = attr.magnitudes();
    let total: f64 = m.iter().sum();
    if total == 0.0 {
        return Ok(CorrectnessSum {
            value: 0.0,
            zero_attribution: true,
        });
    }
    let on_roots: f64 = roots.iter().map(|&r| m[r]).sum();
    Ok(CorrectnessSum {
        value: on_roots / total,
        zero_attribution: false,
    })
}

/// How consistency curves map model outputs into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Raw output (already a probability).
    None,
    /// `(y − lo) / (hi − lo)` clamped to `[0, 1]`; a degenerate range maps to 0.
    MinMax { lo: f64, hi: f64 },
    /// Min-max with `lo = f(x_normal)` and `hi = f(x_fault)` for each sample.
    Endpoints,
}

impl Normalization {
    fn apply(self, y: f64, endpoints: (f64, f64)) -> f64 {
        let (lo, hi) = match self {
            Normalization::None => return y,
            Normalization::MinMax { lo, hi } => (lo, hi),
            Normalization::Endpoints => endpoints,
        };
        if hi > lo {
            ((y - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

fn check_dims(f: &dyn ScalarFunction, x_fault: &[f64], x_normal: &[f64], order: &[usize]) -> Result<()> {
    let n = f.dim();
    if x_fault.len() != n || x_normal.len() != n {
        return Err(Error::Dimension("fault and normal samples must match the model".into()));
    }
    let mut seen = vec![false; n];
    if order.len() != n || order.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
        return Err(Error::Parameter("order must be a permutation of the variables".into()));
    }
    Ok(())
}

/// Outputs after moving the first `k` variables of `order` from `from` to
/// `to`, for `k = 0..=n`.
pub fn substitution_curve(
    f: &dyn ScalarFunction,
    from: &[f64],
    to: &[f64],
    order: &[usize],
    norm: Normalization,
    endpoints: (f64, f64),
) -> Vec<f64> {
    let mut x = from.to_vec();
    let mut ys = vec![norm.apply(f.value(&x), endpoints)];
    for &i in order {
        x[i] = to[i];
        ys.push(norm.apply(f.value(&x), endpoints));
    }
    ys
}

fn trapezoid(ys: &[f64]) -> f64 {
    let n = (ys.len() - 1) as f64;
    if n == 0.0 {
        return ys[0];
    }
    ys.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum::<f64>() / n
}

/// Insertion curve AUC for an explicit variable order.
pub fn consistency_add_order(
    f: &dyn ScalarFunction,
    x_fault: &[f64],
    x_normal: &[f64],
    order: &[usize],
    norm: Normalization,
) -> Result<f64> {
    check_dims(f, x_fault, x_normal, order)?;
    let ends = (f.value(x_normal), f.value(x_fault));
    Ok(trapezoid(&substitution_curve(f, x_normal, x_fault, order, norm, ends)))
}

/// Deletion curve AUC for an explicit variable order.
pub fn consistency_del_order(
    f: &dyn ScalarFunction,
    x_fault: &[f64],
    x_normal: &[f64],
    order: &[usize],
    norm: Normalization,
) -> Result<f64> {
    check_dims(f, x_fault, x_normal, order)?;
    let ends = (f.value(x_normal), f.value(x_fault));
    Ok(trapezoid(&substitution_curve(f, x_fault, x_normal, order, norm, ends)))
}

/// Adds fault values into the normal sample in descending `|cᵢ|` order.
pub fn consistency_add(
    f: &dyn ScalarFunction,
    x_fault: &[f64],
    x_normal: &[f64],
    attr: &Attribution,
    norm: Normalization,
) -> Result<f64> {
    consistency_add_order(f, x_fault, x_normal, &attr.ranking(), norm)
}

/// Replaces fault values by normal ones in descending `|cᵢ|` order.
pub fn consistency_del(
    f: &dyn ScalarFunction,
    x_fault: &[f64],
    x_normal: &[f64],
    attr: &Attribution,
    norm: Normalization,
) -> Result<f64> {
    consistency_del_order(f, x_fault, x_normal, &attr.ranking(), norm)
}

/// Averages for one method; `None` where a metric was not computable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScores {
    pub correctness_auc: Option<f64>,
    pub correctness_sum: Option<f64>,
    pub consistency_add: Option<f64>,
    pub consistency_del: Option<f64>,
    pub samples: usize,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub zero_attributions: usize,
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

/// Per-sample metric values fed to [`MetricsAccumulator`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SampleScores {
    pub correctness_auc: Option<f64>,
    pub correctness_sum: Option<CorrectnessSum>,
    pub consistency_add: Option<f64>,
    pub consistency_del: Option<f64>,
}

#[derive(Debug, Default, Clone)]
struct Sums {
    auc: (f64, usize),
    sum: (f64, usize),
    add: (f64, usize),
    del: (f64, usize),
    samples: usize,
    zero: usize,
}

fn push(acc: &mut (f64, usize), v: Option<f64>) {
    if let Some(v) = v {
        acc.0 += v;
        acc.1 += 1;
    }
}

fn mean(acc: (f64, usize)) -> Option<f64> {
    (acc.1 > 0).then(|| acc.0 / acc.1 as f64)
}

/// Collects per-sample scores in insertion order (deterministic).
#[derive(Debug, Default, Clone)]
pub struct MetricsAccumulator {
    order: Vec<String>,
    sums: BTreeMap<String, Sums>,
}

impl MetricsAccumulator {
    pub fn add(&mut self, method: &str, s: SampleScores) {
        if !self.sums.contains_key(method) {
            self.order.push(method.to_string());
        }
        let e = self.sums.entry(method.to_string()).or_default();
        e.samples += 1;
        push(&mut e.auc, s.correctness_auc);
        push(&mut e.sum, s.correctness_sum.map(|c| c.value));
        e.zero += usize::from(s.correctness_sum.is_some_and(|c| c.zero_attribution));
        push(&mut e.add, s.consistency_add);
        push(&mut e.del, s.consistency_del);
    }

    pub fn finish(self, config: serde_json::Value) -> MetricsReport {
        let sample_count = self.sums.values().map(|s| s.samples).max().unwrap_or(0);
        let methods = self
            .order
            .iter()
            .map(|m| {
                let s = &self.sums[m];
                (
                    m.clone(),
                    MethodScores {
                        correctness_auc: mean(s.auc),
                        correctness_sum: mean(s.sum),
                        consistency_add: mean(s.add),
                        consistency_del: mean(s.del),
                        samples: s.samples,
                        zero_attributions: s.zero,
                    },
                )
            })
            .collect();
        MetricsReport {
            methods,
            sample_count,
            config,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Method name → averaged scores, in evaluation order.
    pub methods: Vec<(String, MethodScores)>,
    pub sample_count: usize,
    pub config: serde_json::Value,
}

impl MetricsReport {
    pub fn get(&self, method: &str) -> Option<&MethodScores> {
        self.methods.iter().find(|(m, _)| m == method).map(|(_, s)| s)
    }

    /// Fixed-width table: `AUC↑ SUM↑ | ADD↑ DEL↓`.
    pub fn to_table(&self) -> String {
        let cell = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
        let width = self.methods.iter().map(|(m, _)| m.len()).max().unwrap_or(6).max(6);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<width$}  {:>8} {:>8} | {:>8} {:>8}",
            "method", "AUC↑", "SUM↑", "ADD↑", "DEL↓"
        );
        let _ = writeln!(s, "{}", "-".repeat(width + 39));
        for (m, sc) in &self.methods {
            let _ = writeln!(
                s,
                "{:<width$}  {:>8} {:>8} | {:>8} {:>8}",
                m,
                cell(sc.correctness_auc),
                cell(sc.correctness_sum),
                cell(sc.consistency_add),
                cell(sc.consistency_del)
            );
        }
        let _ = writeln!(s, "samples: {}", self.sample_count);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explainers::Method;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    fn attr(c: Vec<f64>) -> Attribution {
        Attribution::new(Method::External, c, "test")
    }

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn auc_extremes_and_ties() {
        let roots = set(&[1, 3]);
        assert_eq!(
            correctness_auc(&attr(vec![0.0, 1.0, 0.0, 1.0, 0.0]), &roots).unwrap(),
            1.0
        );
        assert_eq!(
            correctness_auc(&attr(vec![1.0, 0.0, 1.0, 0.0, 1.0]), &roots).unwrap(),
            0.0
        );
        assert_eq!(correctness_auc(&attr(vec![2.0; 5]), &roots).unwrap(), 0.5);
        assert!(correctness_auc(&attr(vec![1.0, 2.0]), &set(&[0, 1])).is_err());
        assert!(correctness_auc(&attr(vec![1.0, 2.0]), &set(&[])).is_err());
    }

    #[test]
    fn random_auc_is_half_on_average() {
        let mut rng = Rng::new(99);
        let roots = set(&[2]);
        let mean: f64 = (0..1000)
            .map(|_| correctness_auc(&attr((0..10).map(|_| rng.normal()).collect()), &roots).unwrap())
            .sum::<f64>()
            / 1000.0;
        assert!((0.45..=0.55).contains(&mean), "{mean}");
    }

    #[test]
    fn sum_cases() {
        let roots = set(&[0]);
        assert_eq!(correctness_sum(&attr(vec![-3.0, 0.0, 0.0]), &roots).unwrap().value, 1.0);
        assert!((correctness_sum(&attr(vec![1.0; 4]), &set(&[0, 2])).unwrap().value - 0.5).abs() < 1e-15);
        let z = correctness_sum(&attr(vec![0.0; 3]), &roots).unwrap();
        assert!(z.zero_attribution && z.value == 0.0);
    }

    struct OnlyVar(usize, usize);
    impl ScalarFunction for OnlyVar {
        fn dim(&self) -> usize {
            self.1
        }
        fn value(&self, z: &[f64]) -> f64 {
            z[self.0] * z[self.0]
        }
        fn gradient(&self, z: &[f64]) -> Vec<f64> {
            let mut g = vec![0.0; self.1];
            g[self.0] = 2.0 * z[self.0];
            g
        }
        fn describe(&self) -> String {
            "only".into()
        }
    }

    struct Constant;
    impl ScalarFunction for Constant {
        fn dim(&self) -> usize {
            3
        }
        fn value(&self, _: &[f64]) -> f64 {
            0.7
        }
        fn gradient(&self, _: &[f64]) -> Vec<f64> {
            vec![0.0; 3]
        }
        fn describe(&self) -> String {
            "const".into()
        }
    }

    #[test]
    fn constant_model_and_endpoints() {
        let a = attr(vec![1.0, 2.0, 3.0]);
        let (xf, xn) = ([1.0, 1.0, 1.0], [0.0, 0.0, 0.0]);
        assert!((consistency_add(&Constant, &xf, &xn, &a, Normalization::None).unwrap() - 0.7).abs() < 1e-15);
        assert!((consistency_del(&Constant, &xf, &xn, &a, Normalization::None).unwrap() - 0.7).abs() < 1e-15);
        let f = OnlyVar(1, 3);
        let curve = substitution_curve(&f, &xn, &xf, &[0, 1, 2], Normalization::None, (0.0, 1.0));
        assert_eq!(curve[0], f.value(&xn));
        assert_eq!(*curve.last().unwrap(), f.value(&xf));
        let add = substitution_curve(&f, &xn, &xf, &a.ranking(), Normalization::Endpoints, (0.0, 1.0));
        let rev: Vec<usize> = a.ranking().into_iter().rev().collect();
        let del = substitution_curve(&f, &xf, &xn, &rev, Normalization::Endpoints, (0.0, 1.0));
        assert_eq!(add[0], del[3]);
        assert_eq!(add[3], del[0]);
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![Vec::new()];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn perfect_ranking_is_optimal_over_all_orders() {
        let n = 6;
        let f = OnlyVar(4, n);
        let xf = [0.5, -1.0, 2.0, 0.3, 3.0, -0.7];
        let xn = [0.0; 6];
        let mut c = vec![0.1; n];
        c[4] = 5.0;
        let a = attr(c);
        let add = consistency_add(&f, &xf, &xn, &a, Normalization::Endpoints).unwrap();
        let del = consistency_del(&f, &xf, &xn, &a, Normalization::Endpoints).unwrap();
        let perms = permutations(n);
        assert_eq!(perms.len(), 720);
        for p in &perms {
            assert!(add >= consistency_add_order(&f, &xf, &xn, p, Normalization::Endpoints).unwrap() - 1e-15);
            assert!(del <= consistency_del_order(&f, &xf, &xn, p, Normalization::Endpoints).unwrap() + 1e-15);
        }
    }

    #[test]
    fn report_table_layout() {
        let mut acc = MetricsAccumulator::default();
        let s = SampleScores {
            correctness_auc: Some(1.0),
            consistency_add: Some(0.5),
            ..Default::default()
        };
        acc.add("abigx", s);
        acc.add("saliency", SampleScores::default());
        let r = acc.finish(serde_json::json!({"seed": 1}));
        let t = r.to_table();
        assert_eq!(t.lines().count(), 5);
        assert!(t.contains("AUC↑") && t.contains("DEL↓") && t.contains("n/a"));
        assert_eq!(r.get("abigx").unwrap().correctness_auc, Some(1.0));
    }

    proptest! {
        #[test]
        fn auc_invariant_under_monotone_transform(
            v in prop::collection::vec(0.0f64..10.0, 4..10),
            root in 0usize..4,
        ) {
            let roots = set(&[root]);
            let a = correctness_auc(&attr(v.clone()), &roots).unwrap();
            let b = correctness_auc(&attr(v.iter().map(|x| x.powi(3) + 2.0 * x).collect()), &roots).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
