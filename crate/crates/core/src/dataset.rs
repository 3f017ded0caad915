//! Feature matrix, partially observed label matrix and z-score statistics.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major `N x T` grid of binary labels; `None` marks a missing label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    n_points: usize,
    n_annotators: usize,
    cells: Vec<Option<bool>>,
}

impl LabelMatrix {
    /// Builds the matrix, checking that every row and every column carries
    /// at least one observed label.
    pub fn new(n_points: usize, n_annotators: usize, cells: Vec<Option<bool>>) -> Result<Self> {
        if cells.len() != n_points * n_annotators {
            return Err(Error::invalid(format!(
                "label matrix has {} cells, expected {} x {}",
                cells.len(),
                n_points,
                n_annotators
            )));
        }
        let m = LabelMatrix {
            n_points,
            n_annotators,
            cells,
        };
        for i in 0..n_points {
            if m.row(i).iter().all(Option::is_none) {
                return Err(Error::Validation(format!("row {i} has no observed label")));
            }
        }
        for t in 0..n_annotators {
            if m.n_observed(t) == 0 {
                return Err(Error::Validation(format!(
                    "annotator column {t} has no observed label"
                )));
            }
        }
        Ok(m)
    }

    /// Builds a fully observed matrix from annotator columns.
    pub fn from_columns(columns: &[Vec<bool>]) -> Result<Self> {
        let t = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::invalid("annotator columns differ in length"));
        }
        let mut cells = Vec::with_capacity(n * t);
        for i in 0..n {
            cells.extend(columns.iter().map(|c| Some(c[i])));
        }
        Self::new(n, t, cells)
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_annotators(&self) -> usize {
        self.n_annotators
    }

    pub fn get(&self, point: usize, annotator: usize) -> Option<bool> {
        self.cells[point * self.n_annotators + annotator]
    }

    pub fn row(&self, point: usize) -> &[Option<bool>] {
        let start = point * self.n_annotators;
        &self.cells[start..start + self.n_annotators]
    }

    pub fn column(&self, annotator: usize) -> impl Iterator<Item = Option<bool>> + '_ {
        (0..self.n_points).map(move |i| self.get(i, annotator))
    }

    pub fn n_observed(&self, annotator: usize) -> usize {
        self.column(annotator).filter(Option::is_some).count()
    }

    pub fn n_observed_total(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }
}

/// Per-feature mean and standard deviation used for z-scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization<T> {
    pub mean: Vec<T>,
    pub stddev: Vec<T>,
}

impl<T: Scalar> Standardization<T> {
    /// Population mean and standard deviation of each column of a row-major
    /// `n x d` matrix. A constant column is a validation error naming it.
    pub fn fit(raw: &[T], n: usize, feature_names: &[String]) -> Result<Self> {
        let d = feature_names.len();
        let nf = T::of(n as f64);
        let mut mean = vec![T::zero(); d];
        let mut stddev = vec![T::zero(); d];
        for j in 0..d {
            let m = (0..n).map(|i| raw[i * d + j]).sum::<T>() / nf;
            let var = (0..n).map(|i| (raw[i * d + j] - m).powi(2)).sum::<T>() / nf;
            let sd = var.sqrt();
            if !(sd > T::zero()) || !sd.is_finite() {
                return Err(Error::Validation(format!(
                    "feature column '{}' is constant (stddev 0)",
                    feature_names[j]
                )));
            }
            mean[j] = m;
            stddev[j] = sd;
        }
        Ok(Standardization { mean, stddev })
    }

    pub fn apply(&self, raw: &[T]) -> Vec<T> {
        let d = self.mean.len();
        raw.iter()
            .enumerate()
            .map(|(k, &v)| (v - self.mean[k % d]) / self.stddev[k % d])
            .collect()
    }
}

/// Training data: standardized features, labels and an optional held-out
/// truth column that training never reads.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    ids: Vec<String>,
    feature_names: Vec<String>,
    annotator_names: Vec<String>,
    raw_features: Vec<T>,
    features: Vec<T>,
    labels: LabelMatrix,
    truth: Option<Vec<bool>>,
    standardization: Standardization<T>,
}

impl<T: Scalar> Dataset<T> {
    /// Validates the inputs and z-scores `raw_features` (row-major, `N x D`)
    /// with statistics computed from them.
    pub fn from_raw(
        ids: Vec<String>,
        feature_names: Vec<String>,
        raw_features: Vec<T>,
        labels: LabelMatrix,
        annotator_names: Vec<String>,
        truth: Option<Vec<bool>>,
    ) -> Result<Self> {
        let n = labels.n_points();
        let stats = {
            check_shapes(&ids, &feature_names, &raw_features, &labels, &annotator_names, &truth)?;
            Standardization::fit(&raw_features, n, &feature_names)?
        };
        let features = stats.apply(&raw_features);
        Ok(Dataset {
            ids,
            feature_names,
            annotator_names,
            raw_features,
            features,
            labels,
            truth,
            standardization: stats,
        })
    }

    /// Replaces the z-score statistics, e.g. with the ones a model was
    /// trained under.
    pub fn restandardize(&mut self, stats: Standardization<T>) -> Result<()> {
        let d = self.n_features();
        if stats.mean.len() != d || stats.stddev.len() != d {
            return Err(Error::invalid(format!(
                "standardization has {} features, dataset has {d}",
                stats.mean.len()
            )));
        }
        if stats.stddev.iter().any(|s| !(*s > T::zero())) {
            return Err(Error::Validation("standardization stddev must be > 0".into()));
        }
        self.features = stats.apply(&self.raw_features);
        self.standardization = stats;
        Ok(())
    }

    pub fn n_points(&self) -> usize {
        self.labels.n_points()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_annotators(&self) -> usize {
        self.labels.n_annotators()
    }

    /// Standardized feature vector of point `i`.
    pub fn x(&self, i: usize) -> &[T] {
        let d = self.n_features();
        &self.features[i * d..(i + 1) * d]
    }

    pub fn raw_x(&self, i: usize) -> &[T] {
        let d = self.n_features();
        &self.raw_features[i * d..(i + 1) * d]
    }

    pub fn labels(&self) -> &LabelMatrix {
        &self.labels
    }

    pub fn truth(&self) -> Option<&[bool]> {
        self.truth.as_deref()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn annotator_names(&self) -> &[String] {
        &self.annotator_names
    }

    pub fn standardization(&self) -> &Standardization<T> {
        &self.standardization
    }

    /// Points at `indices`, keeping this dataset's standardization.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let d = self.n_features();
        let t = self.n_annotators();
        let mut raw = Vec::with_capacity(indices.len() * d);
        let mut cells = Vec::with_capacity(indices.len() * t);
        for &i in indices {
            if i >= self.n_points() {
                return Err(Error::invalid(format!("point index {i} out of range")));
            }
            raw.extend_from_slice(self.raw_x(i));
            cells.extend_from_slice(self.labels.row(i));
        }
        let labels = LabelMatrix::new(indices.len(), t, cells)?;
        let ids: Vec<String> = indices.iter().map(|&i| self.ids[i].clone()).collect();
        let truth = self
            .truth
            .as_ref()
            .map(|tr| indices.iter().map(|&i| tr[i]).collect());
        check_shapes(&ids, &self.feature_names, &raw, &labels, &self.annotator_names, &truth)?;
        let features = self.standardization.apply(&raw);
        Ok(Dataset {
            ids,
            feature_names: self.feature_names.clone(),
            annotator_names: self.annotator_names.clone(),
            raw_features: raw,
            features,
            labels,
            truth,
            standardization: self.standardization.clone(),
        })
    }

    /// Appends fully observed annotator columns.
    pub fn with_appended_annotators(&self, names: Vec<String>, columns: Vec<Vec<bool>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::invalid("annotator names and columns differ in count"));
        }
        let n = self.n_points();
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::invalid(format!("appended columns must have {n} labels")));
        }
        let t_new = self.n_annotators() + columns.len();
        let mut cells = Vec::with_capacity(n * t_new);
        for i in 0..n {
            cells.extend_from_slice(self.labels.row(i));
            cells.extend(columns.iter().map(|c| Some(c[i])));
        }
        let mut out = self.clone();
        out.labels = LabelMatrix::new(n, t_new, cells)?;
        out.annotator_names.extend(names);
        check_shapes(&out.ids, &out.feature_names, &out.raw_features, &out.labels, &out.annotator_names, &out.truth)?;
        Ok(out)
    }

    /// Same points with every label and the truth column inverted.
    pub fn label_flipped(&self) -> Self {
        let mut out = self.clone();
        let n = self.n_points();
        let t = self.n_annotators();
        let cells = (0..n)
            .flat_map(|i| self.labels.row(i).iter().map(|c| c.map(|y| !y)))
            .collect();
        out.labels = LabelMatrix { n_points: n, n_annotators: t, cells };
        out.truth = self.truth.as_ref().map(|tr| tr.iter().map(|z| !z).collect());
        out
    }
}

fn check_shapes<T: Scalar>(
    ids: &[String],
    feature_names: &[String],
    raw: &[T],
    labels: &LabelMatrix,
    annotator_names: &[String],
    truth: &Option<Vec<bool>>,
) -> Result<()> {
    let n = labels.n_points();
    let d = feature_names.len();
    let t = labels.n_annotators();
    if n < 2 {
        return Err(Error::Validation(format!("need at least 2 points, got {n}")));
    }
    if t < 2 {
        return Err(Error::Validation(format!("need at least 2 annotators, got {t}")));
    }
    if d < 1 {
        return Err(Error::Validation("need at least 1 feature".into()));
    }
    if ids.len() != n {
        return Err(Error::invalid(format!("{} ids for {n} points", ids.len())));
    }
    if annotator_names.len() != t {
        return Err(Error::invalid(format!(
            "{} annotator names for {t} annotators",
            annotator_names.len()
        )));
    }
    if raw.len() != n * d {
        return Err(Error::invalid(format!(
            "feature matrix has {} values, expected {n} x {d}",
            raw.len()
        )));
    }
    if let Some(pos) = raw.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!(
            "non-finite feature at point {}, feature '{}'",
            pos / d,
            feature_names[pos % d]
        )));
    }
    if let Some(tr) = truth {
        if tr.len() != n {
            return Err(Error::invalid(format!("truth has {} entries for {n} points", tr.len())));
        }
    }
    Ok(())
}
