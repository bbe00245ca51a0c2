//! Feature matrices tagged with their domain, and pooled domain-classification
//! probabilities.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which side of the comparison a dataset belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DomainTag {
    Training,
    Unseen,
}

impl DomainTag {
    /// Binary label used by the domain classifier (Unseen = 1).
    pub fn label(self) -> u8 {
        match self {
            DomainTag::Training => 0,
            DomainTag::Unseen => 1,
        }
    }

    pub fn other(self) -> DomainTag {
        match self {
            DomainTag::Training => DomainTag::Unseen,
            DomainTag::Unseen => DomainTag::Training,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("dataset needs at least 1 sample and 1 feature (got {rows} rows, {cols} columns)")]
    EmptyDataset { rows: usize, cols: usize },
    #[error("non-finite value {value} at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize, value: f64 },
    #[error("row {row} has {found} features, expected {expected}")]
    RaggedRows { row: usize, expected: usize, found: usize },
    #[error("group id count {found} does not match sample count {expected}")]
    GroupCountMismatch { expected: usize, found: usize },
    #[error("feature count mismatch: {left} vs {right}")]
    FeatureCountMismatch { left: usize, right: usize },
    #[error("probability {value} at index {index} is outside [0, 1]")]
    ProbabilityOutOfRange { index: usize, value: f64 },
}

/// A row-major feature matrix from one domain.
///
/// Construction validates every invariant, so a `Dataset` value is always
/// finite, rectangular and non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    n_features: usize,
    tag: DomainTag,
    group_ids: Option<Vec<String>>,
}

impl Dataset {
    pub fn from_rows(rows: &[Vec<f64>], tag: DomainTag) -> Result<Self, DatasetError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || cols == 0 {
            return Err(DatasetError::EmptyDataset { rows: rows.len(), cols });
        }
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(DatasetError::RaggedRows { row: i, expected: cols, found: row.len() });
            }
            values.extend_from_slice(row);
        }
        Self::from_flat(values, cols, tag)
    }

    pub fn from_flat(values: Vec<f64>, n_features: usize, tag: DomainTag) -> Result<Self, DatasetError> {
        if n_features == 0 || values.is_empty() {
            return Err(DatasetError::EmptyDataset {
                rows: values.len().checked_div(n_features).unwrap_or(0),
                cols: n_features,
            });
        }
        if !values.len().is_multiple_of(n_features) {
            let rows = values.len() / n_features;
            return Err(DatasetError::RaggedRows {
                row: rows,
                expected: n_features,
                found: values.len() % n_features,
            });
        }
        let d = Dataset { values, n_features, tag, group_ids: None };
        d.validate()?;
        Ok(d)
    }

    pub fn with_groups(mut self, groups: Vec<String>) -> Result<Self, DatasetError> {
        if groups.len() != self.n_samples() {
            return Err(DatasetError::GroupCountMismatch { expected: self.n_samples(), found: groups.len() });
        }
        self.group_ids = Some(groups);
        Ok(self)
    }

    /// Same data under a different domain tag.
    pub fn with_tag(mut self, tag: DomainTag) -> Self {
        self.tag = tag;
        self
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.n_features == 0 || self.values.is_empty() {
            return Err(DatasetError::EmptyDataset { rows: self.n_samples(), cols: self.n_features });
        }
        if let Some(pos) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(DatasetError::NonFiniteValue {
                row: pos / self.n_features,
                col: pos % self.n_features,
                value: self.values[pos],
            });
        }
        if let Some(groups) = &self.group_ids {
            if groups.len() != self.n_samples() {
                return Err(DatasetError::GroupCountMismatch { expected: self.n_samples(), found: groups.len() });
            }
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.values.len() / self.n_features
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn tag(&self) -> DomainTag {
        self.tag
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.n_features)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn group_ids(&self) -> Option<&[String]> {
        self.group_ids.as_deref()
    }

    /// Group of sample `i`; samples without explicit groups are their own group.
    pub fn group_of(&self, i: usize) -> Option<&str> {
        self.group_ids.as_ref().map(|g| g[i].as_str())
    }

    /// Subset of rows (and groups) in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self, DatasetError> {
        let mut values = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        let mut out = Dataset::from_flat(values, self.n_features, self.tag)?;
        if let Some(groups) = &self.group_ids {
            out.group_ids = Some(indices.iter().map(|&i| groups[i].clone()).collect());
        }
        Ok(out)
    }

    /// Stacks datasets of the same width. The tag of the first part is kept.
    /// Groups are kept only when every part carries them.
    pub fn concat(parts: &[Dataset]) -> Result<Self, DatasetError> {
        let first = parts.first().ok_or(DatasetError::EmptyDataset { rows: 0, cols: 0 })?;
        let mut values = Vec::new();
        let mut groups = Some(Vec::new());
        for p in parts {
            if p.n_features != first.n_features {
                return Err(DatasetError::FeatureCountMismatch { left: first.n_features, right: p.n_features });
            }
            values.extend_from_slice(&p.values);
            match (&mut groups, &p.group_ids) {
                (Some(acc), Some(g)) => acc.extend(g.iter().cloned()),
                _ => groups = None,
            }
        }
        let mut out = Dataset::from_flat(values, first.n_features, first.tag)?;
        out.group_ids = groups;
        Ok(out)
    }
}

/// Returns `d` unchanged if it satisfies every dataset invariant.
pub fn validate_dataset(d: Dataset) -> Result<Dataset, DatasetError> {
    d.validate()?;
    Ok(d)
}

/// Pooled two-class probabilities from held-out samples.
///
/// Each source sample contributes both its class probabilities `p` and
/// `1 - p`, so the multiset is closed under `v -> 1 - v`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilitySet {
    values: Vec<f64>,
    n_source_samples: usize,
}

impl ProbabilitySet {
    /// Builds the pooled set from the per-sample probability of one class.
    pub fn from_positive_class(probs: &[f64]) -> Result<Self, DatasetError> {
        if let Some((index, &value)) = probs
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(DatasetError::ProbabilityOutOfRange { index, value });
        }
        let mut values = Vec::with_capacity(2 * probs.len());
        values.extend_from_slice(probs);
        values.extend(probs.iter().map(|p| 1.0 - p));
        Ok(ProbabilitySet { values, n_source_samples: probs.len() })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_source_samples(&self) -> usize {
        self.n_source_samples
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Counts over `bins` equal-width bins on [0, 1]; 1.0 falls in the last bin.
    pub fn histogram(&self, bins: usize) -> Vec<u64> {
        histogram(&self.values, bins)
    }
}

impl AsRef<[f64]> for ProbabilitySet {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

pub fn histogram(values: &[f64], bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    if bins == 0 {
        return counts;
    }
    for &v in values {
        let idx = ((v * bins as f64).floor() as usize).min(bins - 1);
        counts[idx] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn finite_matrix_passes_unchanged() {
        let d = Dataset::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]], DomainTag::Training).unwrap();
        let v = validate_dataset(d.clone()).unwrap();
        assert_eq!(v, d);
        assert_eq!(v.n_samples(), 2);
        assert_eq!(v.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn nan_is_rejected_with_position() {
        let err = Dataset::from_rows(&[vec![1.0, 2.0], vec![f64::NAN, 4.0]], DomainTag::Unseen).unwrap_err();
        assert!(matches!(err, DatasetError::NonFiniteValue { row: 1, col: 0, .. }));
    }

    #[test]
    fn empty_is_rejected() {
        let err = Dataset::from_rows(&[], DomainTag::Training).unwrap_err();
        assert_eq!(err, DatasetError::EmptyDataset { rows: 0, cols: 0 });
    }

    #[test]
    fn ragged_rows_name_the_row() {
        let err = Dataset::from_rows(&[vec![1.0, 2.0], vec![3.0]], DomainTag::Training).unwrap_err();
        assert_eq!(err, DatasetError::RaggedRows { row: 1, expected: 2, found: 1 });
    }

    #[test]
    fn concat_keeps_groups_only_when_all_have_them() {
        let a = Dataset::from_rows(&[vec![1.0]], DomainTag::Training)
            .unwrap()
            .with_groups(vec!["a".into()])
            .unwrap();
        let b = Dataset::from_rows(&[vec![2.0]], DomainTag::Training).unwrap();
        assert!(Dataset::concat(&[a.clone(), b]).unwrap().group_ids().is_none());
        let c = Dataset::concat(&[a.clone(), a]).unwrap();
        assert_eq!(c.group_ids().unwrap(), &["a".to_string(), "a".to_string()]);
    }

    #[test]
    fn probability_set_rejects_out_of_range() {
        assert!(ProbabilitySet::from_positive_class(&[0.2, 1.5]).is_err());
    }

    #[test]
    fn histogram_puts_one_in_last_bin() {
        assert_eq!(histogram(&[0.0, 0.5, 1.0, 0.999], 2), vec![1, 3]);
    }

    proptest! {
        #[test]
        fn validation_is_idempotent(rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 1..20)) {
            let d = Dataset::from_rows(&rows, DomainTag::Training).unwrap();
            let once = validate_dataset(d).unwrap();
            let twice = validate_dataset(once.clone()).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn pooled_probabilities_are_complementary(probs in prop::collection::vec(0.0f64..=1.0, 1..50)) {
            let set = ProbabilitySet::from_positive_class(&probs).unwrap();
            prop_assert_eq!(set.len(), 2 * set.n_source_samples());
            let n = set.n_source_samples();
            for i in 0..n {
                prop_assert!((set.values()[i] + set.values()[n + i] - 1.0).abs() <= f64::EPSILON);
            }
            let mean = set.values().iter().sum::<f64>() / set.len() as f64;
            prop_assert!((mean - 0.5).abs() < 1e-12);
        }
    }
}
