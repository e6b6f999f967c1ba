use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Class id → root-cause variable indices.
pub type RootMap = BTreeMap<usize, BTreeSet<usize>>;

/// Name of the optional trailing label column in dataset CSV files.
pub const LABEL_COLUMN: &str = "label";

/// Samples (rows) by variables (columns), with optional class labels.
///
/// Label `0` is reserved for normal operation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Matrix,
    pub labels: Option<Vec<usize>>,
    pub variable_names: Option<Vec<String>>,
    pub ground_truth_roots: Option<RootMap>,
}

impl Dataset {
    pub fn new(samples: Matrix) -> Self {
        Self {
            samples,
            labels: None,
            variable_names: None,
            ground_truth_roots: None,
        }
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.samples.rows() {
            return Err(Error::Dimension(format!(
                "{} labels for {} samples",
                labels.len(),
                self.samples.rows()
            )));
        }
        self.labels = Some(labels);
        self.check_roots()?;
        Ok(self)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.samples.cols() {
            return Err(Error::Dimension(format!(
                "{} names for {} variables",
                names.len(),
                self.samples.cols()
            )));
        }
        self.variable_names = Some(names);
        Ok(self)
    }

    pub fn with_roots(mut self, roots: RootMap) -> Result<Self> {
        self.ground_truth_roots = Some(roots);
        self.check_roots()?;
        Ok(self)
    }

    fn check_roots(&self) -> Result<()> {
        let Some(roots) = &self.ground_truth_roots else {
            return Ok(());
        };
        let n = self.n_vars();
        for (class, vars) in roots {
            if let Some(&bad) = vars.iter().find(|&&v| v >= n) {
                return Err(Error::Parameter(format!(
                    "root variable {bad} of class {class} out of range"
                )));
            }
            if let Some(labels) = &self.labels {
                if !labels.contains(class) {
                    return Err(Error::Parameter(format!("roots given for absent class {class}")));
                }
            }
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.samples.rows()
    }

    pub fn n_vars(&self) -> usize {
        self.samples.cols()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        self.samples.row(i)
    }

    pub fn label(&self, i: usize) -> Option<usize> {
        self.labels.as_ref().map(|l| l[i])
    }

    /// Sorted distinct class ids (empty when unlabeled).
    pub fn classes(&self) -> Vec<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().copied().collect::<BTreeSet<_>>().into_iter().collect())
            .unwrap_or_default()
    }

    pub fn rows_with_label(&self, class: usize) -> Vec<usize> {
        match &self.labels {
            Some(l) => (0..l.len()).filter(|&i| l[i] == class).collect(),
            None if class == 0 => (0..self.n_samples()).collect(),
            None => Vec::new(),
        }
    }

    /// Normal rows: label 0, or every row of an unlabeled set.
    pub fn normal_rows(&self) -> Vec<usize> {
        self.rows_with_label(0)
    }

    pub fn normal_samples(&self) -> Matrix {
        self.samples.select_rows(&self.normal_rows())
    }

    pub fn roots_of(&self, class: usize) -> Option<&BTreeSet<usize>> {
        self.ground_truth_roots.as_ref().and_then(|r| r.get(&class))
    }

    pub fn names(&self) -> Vec<String> {
        self.variable_names
            .clone()
            .unwrap_or_else(|| (1..=self.n_vars()).map(|i| format!("x{i}")).collect())
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            samples: self.samples.select_rows(rows),
            labels: self.labels.as_ref().map(|l| rows.iter().map(|&i| l[i]).collect()),
            variable_names: self.variable_names.clone(),
            ground_truth_roots: self.ground_truth_roots.clone(),
        }
    }

    /// Comma-separated, header row of variable names, optional final
    /// `label` column.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = self.names();
        if self.labels.is_some() {
            header.push(LABEL_COLUMN.to_string());
        }
        wtr.write_record(&header)?;
        for i in 0..self.n_samples() {
            let mut rec: Vec<String> = self.sample(i).iter().map(|v| format!("{v}")).collect();
            if let Some(l) = self.label(i) {
                rec.push(l.to_string());
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let mut names: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let has_label = names.last().is_some_and(|n| n == LABEL_COLUMN);
        if has_label {
            names.pop();
        }
        if names.is_empty() {
            return Err(Error::Format("csv has no variable columns".into()));
        }
        let n = names.len();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let expected = n + usize::from(has_label);
            if rec.len() != expected {
                return Err(Error::Format(format!(
                    "row {} has {} fields, expected {expected}",
                    line + 1,
                    rec.len()
                )));
            }
            for j in 0..n {
                let v: f64 = rec[j].trim().parse().map_err(|_| {
                    Error::Format(format!(
                        "row {} column {}: '{}' is not a number",
                        line + 1,
                        j + 1,
                        &rec[j]
                    ))
                })?;
                data.push(v);
            }
            if has_label {
                let l: usize = rec[n]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("row {}: label '{}' is not a class id", line + 1, &rec[n])))?;
                labels.push(l);
            }
        }
        let rows = data.len() / n;
        let mut ds = Dataset::new(Matrix::new(rows, n, data)?).with_names(names)?;
        if has_label {
            ds = ds.with_labels(labels)?;
        }
        Ok(ds)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    /// Roots as JSON: `{"<class>": [var, ...], ...}`.
    pub fn roots_json(roots: &RootMap) -> serde_json::Value {
        serde_json::Value::Object(
            roots
                .iter()
                .map(|(c, v)| (c.to_string(), serde_json::json!(v.iter().collect::<Vec<_>>())))
                .collect(),
        )
    }

    pub fn parse_roots_json(value: &serde_json::Value) -> Result<RootMap> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Format("roots document must be an object".into()))?;
        let mut roots = RootMap::new();
        for (k, v) in obj {
            let class: usize = k.parse().map_err(|_| Error::Format(format!("bad class id '{k}'")))?;
            let vars = v
                .as_array()
                .ok_or_else(|| Error::Format(format!("roots of class {class} must be a list")))?
                .iter()
                .map(|x| {
                    x.as_u64()
                        .map(|u| u as usize)
                        .ok_or_else(|| Error::Format(format!("bad variable index in class {class}")))
                })
                .collect::<Result<BTreeSet<_>>>()?;
            roots.insert(class, vars);
        }
        Ok(roots)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Dataset {
        let m = Matrix::from_rows(&[vec![0.1, -2.0], vec![1.5, 3.25], vec![0.0, 1e-17]]).unwrap();
        Dataset::new(m).with_labels(vec![0, 1, 0]).unwrap()
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let ds = small().with_names(vec!["a".into(), "b".into()]).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("a,b,label\n"));
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn csv_without_labels() {
        let back = Dataset::read_csv("u,v\n1,2\n3,4\n".as_bytes()).unwrap();
        assert!(back.labels.is_none());
        assert_eq!(back.n_samples(), 2);
        assert_eq!(back.normal_rows(), vec![0, 1]);
    }

    #[test]
    fn csv_errors_are_reported() {
        assert!(Dataset::read_csv("u,v\n1,x\n".as_bytes()).is_err());
        assert!(Dataset::read_csv("u,v,label\n1,2,-1\n".as_bytes()).is_err());
    }

    #[test]
    fn label_and_root_invariants() {
        assert!(small().with_labels(vec![0]).is_err());
        let mut roots = RootMap::new();
        roots.insert(1, [5].into_iter().collect());
        assert!(small().with_roots(roots).is_err());
        let mut roots = RootMap::new();
        roots.insert(3, [0].into_iter().collect());
        assert!(small().with_roots(roots).is_err());
    }

    #[test]
    fn roots_json_roundtrip() {
        let mut roots = RootMap::new();
        roots.insert(1, [0, 2].into_iter().collect());
        roots.insert(2, [1].into_iter().collect());
        let v = Dataset::roots_json(&roots);
        assert_eq!(Dataset::parse_roots_json(&v).unwrap(), roots);
    }
}
