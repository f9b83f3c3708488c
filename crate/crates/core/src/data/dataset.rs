use std::collections::HashSet;
use std::fmt;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Repayment outcome. `Bad` (default) is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Good,
    Bad,
}

impl Label {
    pub fn is_bad(self) -> bool {
        matches!(self, Label::Bad)
    }

    /// 1.0 for `Bad`, 0.0 for `Good`.
    pub fn target(self) -> f64 {
        match self {
            Label::Bad => 1.0,
            Label::Good => 0.0,
        }
    }

    pub fn from_bad(bad: bool) -> Self {
        if bad {
            Label::Bad
        } else {
            Label::Good
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Good => f.write_str("good"),
            Label::Bad => f.write_str("bad"),
        }
    }
}

/// Feature matrix plus case identifiers and optional labels.
///
/// Immutable once built; every constructor validates that ids are unique,
/// labels (when present) align with rows and all features are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct CreditDataset {
    ids: Vec<String>,
    feature_names: Vec<String>,
    features: Array2<f64>,
    labels: Option<Vec<Label>>,
}

impl CreditDataset {
    pub fn new(
        ids: Vec<String>,
        feature_names: Vec<String>,
        features: Array2<f64>,
        labels: Option<Vec<Label>>,
    ) -> Result<Self> {
        let (n, d) = features.dim();
        if ids.len() != n {
            return Err(Error::InvalidDataset(format!(
                "{} ids for {} rows",
                ids.len(),
                n
            )));
        }
        if feature_names.len() != d {
            return Err(Error::InvalidDataset(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                d
            )));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::InvalidDataset(format!(
                    "{} labels for {} rows",
                    l.len(),
                    n
                )));
            }
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        if let Some(((row, col), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { row, col });
        }
        Ok(Self {
            ids,
            feature_names,
            features,
            labels,
        })
    }

    /// Builds a dataset with ids `0..n` and feature names `x0..x{d-1}`.
    pub fn from_matrix(features: Array2<f64>, labels: Option<Vec<Label>>) -> Result<Self> {
        let (n, d) = features.dim();
        let ids = (0..n).map(|i| i.to_string()).collect();
        Self::new(ids, default_feature_names(d), features, labels)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> Option<&[Label]> {
        self.labels.as_deref()
    }

    pub fn require_labels(&self) -> Result<&[Label]> {
        self.labels.as_deref().ok_or(Error::MissingLabels)
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }

    pub fn bad_count(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().filter(|x| x.is_bad()).count())
    }

    pub fn bad_rate(&self) -> Option<f64> {
        match (self.bad_count(), self.len()) {
            (Some(_), 0) => None,
            (Some(b), n) => Some(b as f64 / n as f64),
            (None, _) => None,
        }
    }

    /// Errors unless labels are present and both classes occur.
    pub fn require_both_classes(&self) -> Result<&[Label]> {
        let labels = self.require_labels()?;
        let bad = labels.iter().filter(|l| l.is_bad()).count();
        if bad == 0 {
            return Err(Error::SingleClass("good"));
        }
        if bad == labels.len() {
            return Err(Error::SingleClass("bad"));
        }
        Ok(labels)
    }

    /// Rows at `indices`, in the given order. Indices must not repeat.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            features: self.features.select(Axis(0), indices),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Same rows, labels dropped.
    pub fn without_labels(&self) -> Self {
        Self {
            labels: None,
            ..self.clone()
        }
    }

    pub fn with_labels(&self, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::InvalidDataset(format!(
                "{} labels for {} rows",
                labels.len(),
                self.len()
            )));
        }
        Ok(Self {
            labels: Some(labels),
            ..self.clone()
        })
    }

    /// Row-wise concatenation. Both parts must agree on labeling and width.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.n_features() != other.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                actual: other.n_features(),
            });
        }
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            (None, None) => None,
            _ => {
                return Err(Error::InvalidDataset(
                    "cannot concatenate labeled with unlabeled data".into(),
                ))
            }
        };
        let features = ndarray::concatenate(Axis(0), &[self.features.view(), other.features.view()])
            .expect("column counts checked");
        let ids = self.ids.iter().chain(&other.ids).cloned().collect();
        Self::new(ids, self.feature_names.clone(), features, labels)
    }

    /// Row indices grouped by class: `(goods, bads)`.
    pub fn class_indices(&self) -> Result<(Vec<usize>, Vec<usize>)> {
        let labels = self.require_labels()?;
        let mut goods = Vec::new();
        let mut bads = Vec::new();
        for (i, l) in labels.iter().enumerate() {
            if l.is_bad() {
                bads.push(i);
            } else {
                goods.push(i);
            }
        }
        Ok((goods, bads))
    }
}

pub(crate) fn default_feature_names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("x{j}")).collect()
}

/// Ground-truth reject labels, kept apart from the reject features.
///
/// Only evaluation code should ever call [`SealedLabels::reveal`]; strategies
/// never receive this type.
#[derive(Debug, Clone, PartialEq)]
pub struct SealedLabels {
    labels: Vec<Label>,
}

impl SealedLabels {
    pub fn seal(labels: Vec<Label>) -> Self {
        Self { labels }
    }

    pub fn reveal(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn bad_rate(&self) -> Option<f64> {
        if self.labels.is_empty() {
            return None;
        }
        let bad = self.labels.iter().filter(|l| l.is_bad()).count();
        Some(bad as f64 / self.labels.len() as f64)
    }
}

/// Accepts (labeled), rejects (unlabeled) and an unbiased labeled holdout.
#[derive(Debug, Clone)]
pub struct PartitionedData {
    pub accepts: CreditDataset,
    pub rejects: CreditDataset,
    pub unbiased: CreditDataset,
    reject_oracle: Option<SealedLabels>,
}

impl PartitionedData {
    /// Validates disjoint ids, labeled accepts with both classes and labeled
    /// unbiased data. Reject labels, if any, are stripped and discarded.
    pub fn new(
        accepts: CreditDataset,
        rejects: CreditDataset,
        unbiased: CreditDataset,
    ) -> Result<Self> {
        Self::with_oracle(accepts, rejects, unbiased, None)
    }

    pub fn with_oracle(
        accepts: CreditDataset,
        rejects: CreditDataset,
        unbiased: CreditDataset,
        reject_oracle: Option<SealedLabels>,
    ) -> Result<Self> {
        accepts.require_both_classes()?;
        unbiased.require_labels()?;
        let d = accepts.n_features();
        for (name, ds) in [("rejects", &rejects), ("unbiased", &unbiased)] {
            if ds.n_features() != d {
                return Err(Error::InvalidDataset(format!(
                    "{name} has {} features, accepts has {d}",
                    ds.n_features()
                )));
            }
        }
        if let Some(o) = &reject_oracle {
            if o.len() != rejects.len() {
                return Err(Error::InvalidDataset(
                    "sealed reject labels do not align with rejects".into(),
                ));
            }
        }
        let mut seen = HashSet::new();
        for id in accepts.ids().iter().chain(rejects.ids()).chain(unbiased.ids()) {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        let rejects = if rejects.is_labeled() {
            rejects.without_labels()
        } else {
            rejects
        };
        Ok(Self {
            accepts,
            rejects,
            unbiased,
            reject_oracle,
        })
    }

    pub fn reject_oracle(&self) -> Option<&SealedLabels> {
        self.reject_oracle.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny() -> CreditDataset {
        CreditDataset::from_matrix(
            array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]],
            Some(vec![Label::Bad, Label::Good, Label::Bad]),
        )
        .unwrap()
    }

    #[test]
    fn rejects_duplicate_ids() {
        let err = CreditDataset::new(
            vec!["a".into(), "a".into()],
            default_feature_names(1),
            array![[1.0], [2.0]],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateId(id) if id == "a"));
    }

    #[test]
    fn rejects_non_finite() {
        let err = CreditDataset::from_matrix(array![[1.0], [f64::NAN]], None).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 1, col: 0 }));
    }

    #[test]
    fn label_length_checked() {
        assert!(CreditDataset::from_matrix(array![[1.0]], Some(vec![])).is_err());
    }

    #[test]
    fn select_and_concat() {
        let ds = tiny();
        assert_eq!(ds.bad_count(), Some(2));
        let s = ds.select(&[2, 0]);
        assert_eq!(s.ids(), &["2".to_string(), "0".to_string()]);
        assert_eq!(s.features()[[0, 1]], 6.0);
        assert!(ds.concat(&s).is_err(), "duplicate ids must be refused");
        assert!(ds.concat(&ds.without_labels()).is_err());
    }

    #[test]
    fn partition_requires_disjoint_ids_and_both_classes() {
        let ds = tiny();
        let other = CreditDataset::new(
            vec!["r0".into()],
            default_feature_names(2),
            array![[0.0, 0.0]],
            None,
        )
        .unwrap();
        let unb = CreditDataset::new(
            vec!["u0".into()],
            default_feature_names(2),
            array![[0.0, 0.0]],
            Some(vec![Label::Good]),
        )
        .unwrap();
        assert!(PartitionedData::new(ds.clone(), other.clone(), unb.clone()).is_ok());
        assert!(matches!(
            PartitionedData::new(ds.clone(), ds.without_labels(), unb.clone()),
            Err(Error::DuplicateId(_))
        ));
        let single = ds.with_labels(vec![Label::Bad; 3]).unwrap();
        assert!(matches!(
            PartitionedData::new(single, other, unb),
            Err(Error::SingleClass(_))
        ));
    }
}
